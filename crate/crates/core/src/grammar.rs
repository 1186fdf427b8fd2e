//! Helpers for the small text grammars (`gaussian(l=1.0)`, `shift(u)`,
//! `seq.derivative(base=2)`, ...) used by the CLI and config files.

use crate::error::{Error, Result};

/// Splits `name(arg1, arg2, ...)` into the lowercased name and raw argument list.
/// A bare `name` yields an empty argument list.
pub(crate) fn split_call(s: &str) -> Result<(String, Vec<String>)> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty specification string".into()));
    }
    match s.find('(') {
        None => Ok((s.to_ascii_lowercase(), Vec::new())),
        Some(open) => {
            if !s.ends_with(')') {
                return Err(Error::InvalidArgument(format!(
                    "unbalanced parentheses in `{s}`"
                )));
            }
            let name = s[..open].trim().to_ascii_lowercase();
            let inner = &s[open + 1..s.len() - 1];
            Ok((name, split_args(inner)))
        }
    }
}

/// Splits a comma-separated argument list, respecting nested parentheses
/// and brackets so `combo([(2, shift(0.5)), (-1, identity)])` parses.
pub(crate) fn split_args(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' | '[' => {
                depth += 1;
                cur.push(ch);
            }
            ')' | ']' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Parses a numeric argument that may be positional (`2.0`) or named (`base=2.0`).
/// When named, the key must match `key` exactly (case-insensitive).
pub(crate) fn numeric_arg(raw: &str, key: &str) -> Result<f64> {
    let raw = raw.trim();
    let value = match raw.split_once('=') {
        Some((k, v)) => {
            if !k.trim().eq_ignore_ascii_case(key) {
                return Err(Error::InvalidArgument(format!(
                    "unknown parameter `{}` (expected `{key}`)",
                    k.trim()
                )));
            }
            v.trim()
        }
        None => raw,
    };
    value
        .parse::<f64>()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse `{value}` as a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_call_bare_and_args() {
        assert_eq!(split_call("Brownian").unwrap(), ("brownian".into(), vec![]));
        let (name, args) = split_call("gaussian(l=1.0)").unwrap();
        assert_eq!(name, "gaussian");
        assert_eq!(args, vec!["l=1.0"]);
    }

    #[test]
    fn split_args_nested() {
        let args = split_args("[(2, shift(0.5)), (-1, identity)]");
        assert_eq!(args.len(), 1);
        let inner = split_args(&args[0][1..args[0].len() - 1]);
        assert_eq!(inner, vec!["(2, shift(0.5))", "(-1, identity)"]);
    }

    #[test]
    fn numeric_arg_named_mismatch_is_error() {
        assert!(numeric_arg("sigma=2", "base").is_err());
        assert_eq!(numeric_arg("base=2", "base").unwrap(), 2.0);
        assert_eq!(numeric_arg("0.5", "u").unwrap(), 0.5);
    }
}
