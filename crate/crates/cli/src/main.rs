//! Batch front-end for the kernel operator-representer library.
//!
//! Three commands, all emitting machine-readable reports:
//!
//! * `verify`  — tabulate the double sequence Lₙℓ Lₘʳ K(x,x) for an
//!   operator sequence and judge convergence per evaluation point.
//! * `embed`   — run the integrability diagnostics for a kernel/density
//!   pair and construct the mean embedding when the hypothesis holds.
//! * `fit`     — solve a penalized regression problem with mixed
//!   value/operator/derivative/expectation observations.
//!
//! Exit codes: 0 success (all verdicts converged), 1 usage error,
//! 2 diverged / hypothesis not met / solver failure, 3 inconclusive.

use clap::{Args, Parser, Subcommand};
use kernelrep::embedding::{abs_condition, mean_embedding, standard_variation, DensitySpec};
use kernelrep::kernels::KernelSpec;
use kernelrep::regression::{fit, FitOptions, ProblemFile};
use kernelrep::{
    loeve_table, representer_cauchy_decay, ConvergenceReport, Error, LoeveOptions,
    OperatorSequence, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kernelrep", version, about = "RKHS operator representers: convergence verification, mean embeddings, penalized regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate Lₙℓ Lₘʳ K(x,x) over an index window and judge convergence.
    Verify(VerifyArgs),
    /// Integrability diagnostics and mean-embedding construction.
    Embed(EmbedArgs),
    /// Fit a penalized regression problem from a JSON problem file.
    Fit(FitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output file (stdout when omitted); written atomically.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Seed for randomized spot checks; echoed for reproducibility.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file mirroring the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Kernel, e.g. gaussian(l=1.0), rank_one_osc, scaled_gaussian, brownian.
    #[arg(long)]
    kernel: Option<String>,
    /// Operator sequence, e.g. seq.derivative(base=2), seq.averaging.
    #[arg(long)]
    seq: Option<String>,
    /// Comma-separated evaluation points.
    #[arg(long)]
    x: Option<String>,
    /// Index window LO:HI.
    #[arg(long)]
    window: Option<String>,
    /// Oscillation tolerance for the convergence verdict.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    kernel: Option<String>,
    /// Density, e.g. uniform(0,1), inv_square, truncated_gaussian(a,b,sigma).
    #[arg(long)]
    density: Option<String>,
    /// Stage tolerance for the improper integrals.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Problem file (JSON).
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Override for the penalty in the problem file.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version are not usage errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Fit(args) => cmd_fit(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::Domain(_)
        | Error::KernelMismatch(_)
        | Error::Regularity(_) => 1,
        Error::HypothesisNotMet(_)
        | Error::SingularSystem(_)
        | Error::NoConvergence(_)
        | Error::NonFinite { .. }
        | Error::NegativeDiagonal { .. } => 2,
    }
}

/// Flag/config merging: a JSON object whose keys mirror the flags. Flags
/// win; unknown keys are a hard error.
struct ConfigFile {
    values: serde_json::Map<String, serde_json::Value>,
}

impl ConfigFile {
    fn load(path: Option<&Path>, allowed: &[&str]) -> Result<ConfigFile, Error> {
        let mut values = serde_json::Map::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
            })?;
            let doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidArgument(format!("config JSON: {e}")))?;
            let map = doc.as_object().ok_or_else(|| {
                Error::InvalidArgument("config file must be a JSON object".into())
            })?;
            for key in map.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "unknown config key `{key}` (allowed: {})",
                        allowed.join(", ")
                    )));
                }
            }
            values = map.clone();
        }
        Ok(ConfigFile { values })
    }

    fn string(&self, key: &str, flag: Option<String>) -> Option<String> {
        flag.or_else(|| self.values.get(key).and_then(|v| v.as_str().map(String::from)))
    }

    fn number(&self, key: &str, flag: Option<f64>) -> Option<f64> {
        flag.or_else(|| self.values.get(key).and_then(|v| v.as_f64()))
    }

    fn integer(&self, key: &str, flag: Option<u64>) -> Option<u64> {
        flag.or_else(|| self.values.get(key).and_then(|v| v.as_u64()))
    }

    fn path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| {
            self.values
                .get(key)
                .and_then(|v| v.as_str().map(PathBuf::from))
        })
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, Error> {
    value.ok_or_else(|| Error::InvalidArgument(format!("missing required `--{flag}`")))
}

fn parse_format(s: Option<String>) -> Result<String, Error> {
    let format = s.unwrap_or_else(|| "json".into()).to_ascii_lowercase();
    if format == "json" || format == "csv" {
        Ok(format)
    } else {
        Err(Error::InvalidArgument(format!(
            "unknown format `{format}` (json or csv)"
        )))
    }
}

fn parse_window(s: &str) -> Result<(u32, u32), Error> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("window `{s}` is not LO:HI")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| Error::InvalidArgument(format!("window bound `{t}` is not an integer")))
    };
    Ok((parse(lo)?, parse(hi)?))
}

fn parse_x_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number")))
        })
        .collect()
}

/// Writes atomically: temp file in the same directory, then rename.
fn emit(out: Option<&Path>, content: &str) -> Result<(), Error> {
    let text = if content.ends_with('\n') {
        content.to_string()
    } else {
        format!("{content}\n")
    };
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, &text).map_err(|e| {
                Error::InvalidArgument(format!("cannot write {}: {e}", tmp.display()))
            })?;
            std::fs::rename(&tmp, path).map_err(|e| {
                Error::InvalidArgument(format!("cannot rename into {}: {e}", path.display()))
            })
        }
    }
}

// ---------------------------------------------------------------- verify

#[derive(Serialize)]
struct VerifyConfig {
    kernel: String,
    seq: String,
    x: Vec<f64>,
    window: (u32, u32),
    tol: f64,
    seed: u64,
    format: String,
}

#[derive(Serialize)]
struct VerifyResult {
    x: f64,
    report: ConvergenceReport,
    cauchy_decay: Vec<f64>,
}

#[derive(Serialize)]
struct PsdSpotCheck {
    sets: u32,
    points_per_set: u32,
    min_eigenvalue: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    command: &'static str,
    version: &'static str,
    config: VerifyConfig,
    results: Vec<VerifyResult>,
    psd_spot_check: PsdSpotCheck,
    verdict_summary: &'static str,
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Error> {
    let allowed = ["kernel", "seq", "x", "window", "tol", "seed", "out", "format"];
    let cfg = ConfigFile::load(args.common.config.as_deref(), &allowed)?;
    let kernel_str = require(cfg.string("kernel", args.kernel), "kernel")?;
    let seq_str = require(cfg.string("seq", args.seq), "seq")?;
    let x_str = require(cfg.string("x", args.x), "x")?;
    let window_str = require(cfg.string("window", args.window), "window")?;
    let tol = cfg.number("tol", args.tol).unwrap_or(1e-3);
    let seed = cfg.integer("seed", args.common.seed).unwrap_or(0);
    let out = cfg.path("out", args.common.out);
    let format = parse_format(cfg.string("format", args.common.format))?;

    let kernel: KernelSpec = kernel_str.parse()?;
    let seq: OperatorSequence = seq_str.parse()?;
    let xs = parse_x_list(&x_str)?;
    let (n_lo, n_hi) = parse_window(&window_str)?;
    let opts = LoeveOptions { tol_conv: tol, ..Default::default() };

    let mut results = Vec::with_capacity(xs.len());
    for &x in &xs {
        let report = loeve_table(&seq, &kernel, x, n_lo, n_hi, &opts)?;
        let indices: Vec<u32> = (n_lo..=n_hi).collect();
        let cauchy_decay = representer_cauchy_decay(&seq, &kernel, x, &indices)?;
        results.push(VerifyResult { x, report, cauchy_decay });
    }

    // seeded PSD spot check of the kernel itself
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = kernel.domain().sample_window(8.0);
    let mut min_eigenvalue = f64::INFINITY;
    for _ in 0..20 {
        let mut points = Vec::with_capacity(8);
        while points.len() < 8 {
            let p: f64 = rng.gen_range(lo..hi);
            if !points.contains(&p) {
                points.push(p);
            }
        }
        min_eigenvalue = min_eigenvalue.min(kernel.psd_spot_check(&points)?);
    }

    let any_diverged = results
        .iter()
        .any(|r| r.report.verdict == Verdict::Diverged);
    let all_converged = results.iter().all(|r| r.report.verdict.is_converged());
    let (summary, code) = if all_converged {
        ("converged", 0)
    } else if any_diverged {
        ("diverged", 2)
    } else {
        ("inconclusive", 3)
    };

    let report = VerifyReport {
        command: "verify",
        version: env!("CARGO_PKG_VERSION"),
        config: VerifyConfig {
            kernel: kernel_str,
            seq: seq_str,
            x: xs,
            window: (n_lo, n_hi),
            tol,
            seed,
            format: format.clone(),
        },
        results,
        psd_spot_check: PsdSpotCheck { sets: 20, points_per_set: 8, min_eigenvalue },
        verdict_summary: summary,
    };
    let content = if format == "json" {
        to_json(&report)?
    } else {
        let mut csv = String::from("x,n,m,u\n");
        for r in &report.results {
            for line in r.report.to_csv().lines().skip(1) {
                csv.push_str(&format!("{},{line}\n", r.x));
            }
        }
        csv
    };
    emit(out.as_deref(), &content)?;
    Ok(code)
}

// ----------------------------------------------------------------- embed

#[derive(Serialize)]
struct EmbedConfig {
    kernel: String,
    density: String,
    tol: f64,
    seed: u64,
    format: String,
}

#[derive(Serialize)]
struct MuSample {
    x: f64,
    mu: Option<f64>,
}

#[derive(Serialize)]
struct EmbeddingSection {
    norm2: f64,
    mu_samples: Vec<MuSample>,
}

#[derive(Serialize)]
struct EmbedReport {
    command: &'static str,
    version: &'static str,
    config: EmbedConfig,
    standard_variation: kernelrep::ImproperIntegralReport,
    abs_condition: kernelrep::ImproperIntegralReport,
    hypothesis_met: bool,
    embedding: Option<EmbeddingSection>,
}

fn cmd_embed(args: EmbedArgs) -> Result<u8, Error> {
    let allowed = ["kernel", "density", "tol", "seed", "out", "format"];
    let cfg = ConfigFile::load(args.common.config.as_deref(), &allowed)?;
    let kernel_str = require(cfg.string("kernel", args.kernel), "kernel")?;
    let density_str = require(cfg.string("density", args.density), "density")?;
    let tol = cfg.number("tol", args.tol).unwrap_or(1e-6);
    let seed = cfg.integer("seed", args.common.seed).unwrap_or(0);
    let out = cfg.path("out", args.common.out);
    let format = parse_format(cfg.string("format", args.common.format))?;

    let kernel: KernelSpec = kernel_str.parse()?;
    let density: DensitySpec = density_str.parse()?;

    let std_variation = standard_variation(&kernel, &density, tol)?;
    let abs_report = abs_condition(&kernel, &density, tol)?;
    let hypothesis_met = abs_report.verdict.is_converged();

    let embedding = if hypothesis_met {
        let emb = mean_embedding(&kernel, &density, tol)?;
        let window = kernel.domain().intersect(&density.support());
        let (lo, hi) = window.sample_window(4.0);
        let mu_samples = (0..5)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 4.0;
                MuSample { x, mu: emb.mu(x).ok() }
            })
            .collect();
        Some(EmbeddingSection { norm2: emb.norm2(), mu_samples })
    } else {
        None
    };

    let report = EmbedReport {
        command: "embed",
        version: env!("CARGO_PKG_VERSION"),
        config: EmbedConfig {
            kernel: kernel_str,
            density: density_str,
            tol,
            seed,
            format: format.clone(),
        },
        standard_variation: std_variation,
        abs_condition: abs_report,
        hypothesis_met,
        embedding,
    };
    let content = if format == "json" {
        to_json(&report)?
    } else {
        let mut csv = String::from("report,stage,partial,abs_partial\n");
        for (name, rep) in [
            ("standard_variation", &report.standard_variation),
            ("abs_condition", &report.abs_condition),
        ] {
            for line in rep.to_csv().lines().skip(1) {
                csv.push_str(&format!("{name},{line}\n"));
            }
        }
        csv
    };
    emit(out.as_deref(), &content)?;
    Ok(if hypothesis_met { 0 } else { 2 })
}

// ------------------------------------------------------------------- fit

#[derive(Serialize)]
struct FitConfig {
    problem: String,
    lambda: f64,
    seed: u64,
    format: String,
}

#[derive(Serialize)]
struct Prediction {
    query: serde_json::Value,
    value: f64,
}

#[derive(Serialize)]
struct FitReport {
    command: &'static str,
    version: &'static str,
    config: FitConfig,
    kernel: String,
    coefficients: Vec<f64>,
    condition_estimate: f64,
    jitter_used: f64,
    training_residuals: Vec<f64>,
    predictions: Vec<Prediction>,
}

fn cmd_fit(args: FitArgs) -> Result<u8, Error> {
    let allowed = ["problem", "lambda", "seed", "out", "format"];
    let cfg = ConfigFile::load(args.common.config.as_deref(), &allowed)?;
    let problem_path = require(cfg.path("problem", args.problem), "problem")?;
    let seed = cfg.integer("seed", args.common.seed).unwrap_or(0);
    let out = cfg.path("out", args.common.out);
    let format = parse_format(cfg.string("format", args.common.format))?;

    let text = std::fs::read_to_string(&problem_path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", problem_path.display()))
    })?;
    let problem = ProblemFile::parse(&text)?;
    let kernel = problem.kernel()?;
    let observations = problem.observations()?;
    let queries = problem.queries()?;
    let lambda = cfg
        .number("lambda", args.lambda)
        .unwrap_or(problem.lambda);

    let model = fit(&observations, &kernel, lambda, &FitOptions::default())?;
    let training_residuals = model.training_residuals()?;
    let mut predictions = Vec::with_capacity(queries.len());
    for (doc, query) in problem.queries.iter().zip(&queries) {
        let value = model.predict(query)?;
        predictions.push(Prediction {
            query: serde_json::json!({
                "type": doc.kind,
                "x": doc.x,
                "operator": doc.operator,
                "density": doc.density,
            }),
            value,
        });
    }

    let report = FitReport {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        config: FitConfig {
            problem: problem_path.display().to_string(),
            lambda,
            seed,
            format: format.clone(),
        },
        kernel: kernel.to_string(),
        coefficients: model.coefficients().to_vec(),
        condition_estimate: model.condition_estimate(),
        jitter_used: model.jitter_used(),
        training_residuals,
        predictions,
    };
    let content = if format == "json" {
        to_json(&report)?
    } else {
        let mut csv = String::from("index,coefficient\n");
        for (i, c) in report.coefficients.iter().enumerate() {
            csv.push_str(&format!("{i},{c:.16e}\n"));
        }
        csv
    };
    emit(out.as_deref(), &content)?;
    Ok(0)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
}
