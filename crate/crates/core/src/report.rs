//! Verdicts and reports shared by the convergence analyzer and the
//! improper-integral drivers.

use serde::Serialize;

/// Outcome of a numeric limit process. `Converged` carries the limit
/// estimate. `Inconclusive` means the heuristic could not decide within
/// its window or stage cap; it is never upgraded to `Diverged` for
/// sign-oscillating data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "limit", rename_all = "snake_case")]
pub enum Verdict {
    Converged(f64),
    Diverged,
    Inconclusive,
}

impl Verdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, Verdict::Converged(_))
    }

    pub fn limit(&self) -> Option<f64> {
        match self {
            Verdict::Converged(v) => Some(*v),
            _ => None,
        }
    }
}

/// One exhaustion stage partial integral.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StagePartial {
    pub stage: u32,
    pub value: f64,
}

/// Improper-integral report: per-stage partials for the integrand and its
/// absolute value, with a convergence verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ImproperIntegralReport {
    pub partials: Vec<StagePartial>,
    pub abs_partials: Vec<StagePartial>,
    pub verdict: Verdict,
}

impl ImproperIntegralReport {
    pub fn limit(&self) -> Option<f64> {
        self.verdict.limit()
    }

    /// CSV rows `stage,I_s,abs_I_s` for external plotting. When the
    /// absolute track was not computed the third column is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,partial,abs_partial\n");
        for (i, p) in self.partials.iter().enumerate() {
            let abs = self
                .abs_partials
                .get(i)
                .map(|a| format!("{:.16e}", a.value))
                .unwrap_or_default();
            out.push_str(&format!("{},{:.16e},{}\n", p.stage, p.value, abs));
        }
        out
    }
}
