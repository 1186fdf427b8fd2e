//! Mean embeddings over improper Riemann integrals.
//!
//! `standard_variation` and `abs_condition` are the two integrability
//! diagnostics: the first is the classical (stronger) sufficient condition
//! ∫√K(x,x)·p dx, the second the minimal one ∬|K|·p⊗p. The embedding is
//! constructed only when the absolute condition converges — that hypothesis
//! is enforced, not assumed. The scaled Gaussian kernel with the inverse
//! square density is the separating example: infinite standard variation,
//! finite absolute integral, well-defined embedding.

mod quad;

pub use quad::{
    improper, improper2d, riemann, riemann2d, ExhaustionSpec, Improper2dOptions,
    ImproperOptions, MeshControl, Quad2dControl, Rect,
};

use crate::error::{Error, Result};
use crate::expansions::{Atom, Expansion};
use crate::grammar;
use crate::kernels::{Interval, KernelSpec, EPS_PSD};
use crate::report::ImproperIntegralReport;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

/// A probability density on (a subset of) the real line.
///
/// Construction verifies ∫p = 1 to 1e−6 with the module's own improper
/// integrator, so a `DensitySpec` in hand is always normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    kind: DensityKind,
}

#[derive(Debug, Clone, PartialEq)]
enum DensityKind {
    Uniform { a: f64, b: f64 },
    /// p(x) = x⁻² for x ≥ 1.
    InvSquare,
    /// Gaussian with scale sigma restricted to [a, b] and renormalized.
    TruncatedGaussian { a: f64, b: f64, sigma: f64, norm: f64 },
}

impl DensitySpec {
    pub fn uniform(a: f64, b: f64) -> Result<DensitySpec> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidArgument(format!(
                "uniform density needs finite a < b, got ({a}, {b})"
            )));
        }
        let d = DensitySpec { kind: DensityKind::Uniform { a, b } };
        d.verify_normalization()?;
        Ok(d)
    }

    pub fn inv_square() -> DensitySpec {
        let d = DensitySpec { kind: DensityKind::InvSquare };
        d.verify_normalization()
            .expect("x^-2 on [1, inf) integrates to 1");
        d
    }

    pub fn truncated_gaussian(a: f64, b: f64, sigma: f64) -> Result<DensitySpec> {
        if !(a.is_finite() && b.is_finite() && a < b && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "truncated gaussian needs finite a < b and sigma > 0, got ({a}, {b}, {sigma})"
            )));
        }
        let norm = riemann(
            |x| (-x * x / (2.0 * sigma * sigma)).exp(),
            a,
            b,
            &MeshControl::with_tol(1e-12),
        )?;
        let d = DensitySpec {
            kind: DensityKind::TruncatedGaussian { a, b, sigma, norm },
        };
        d.verify_normalization()?;
        Ok(d)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            DensityKind::Uniform { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DensityKind::InvSquare => {
                if x >= 1.0 {
                    1.0 / (x * x)
                } else {
                    0.0
                }
            }
            DensityKind::TruncatedGaussian { a, b, sigma, norm } => {
                if x >= *a && x <= *b {
                    (-x * x / (2.0 * sigma * sigma)).exp() / norm
                } else {
                    0.0
                }
            }
        }
    }

    pub fn support(&self) -> Interval {
        match &self.kind {
            DensityKind::Uniform { a, b } => Interval {
                lo: *a,
                hi: *b,
                lo_closed: true,
                hi_closed: true,
            },
            DensityKind::InvSquare => Interval {
                lo: 1.0,
                hi: f64::INFINITY,
                lo_closed: true,
                hi_closed: false,
            },
            DensityKind::TruncatedGaussian { a, b, .. } => Interval {
                lo: *a,
                hi: *b,
                lo_closed: true,
                hi_closed: true,
            },
        }
    }

    fn verify_normalization(&self) -> Result<()> {
        let support = self.support();
        let report = improper(
            |x| self.pdf(x),
            (support.lo, support.hi),
            &ExhaustionSpec::default(),
            &ImproperOptions { tol: 1e-7, track_abs: false, ..Default::default() },
        )?;
        match report.limit() {
            Some(total) if (total - 1.0).abs() <= 1e-6 => Ok(()),
            Some(total) => Err(Error::InvalidArgument(format!(
                "density {self} integrates to {total}, not 1"
            ))),
            None => Err(Error::InvalidArgument(format!(
                "density {self} normalization integral did not converge"
            ))),
        }
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            DensityKind::InvSquare => write!(f, "inv_square"),
            DensityKind::TruncatedGaussian { a, b, sigma, .. } => {
                write!(f, "truncated_gaussian({a},{b},{sigma})")
            }
        }
    }
}

impl FromStr for DensitySpec {
    type Err = Error;

    /// Density grammar: `uniform(a,b)`, `inv_square`,
    /// `truncated_gaussian(a,b,sigma)`. Case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = grammar::split_call(s)?;
        match (name.as_str(), args.len()) {
            ("uniform", 2) => DensitySpec::uniform(
                grammar::numeric_arg(&args[0], "a")?,
                grammar::numeric_arg(&args[1], "b")?,
            ),
            ("inv_square", 0) => Ok(DensitySpec::inv_square()),
            ("truncated_gaussian", 3) => DensitySpec::truncated_gaussian(
                grammar::numeric_arg(&args[0], "a")?,
                grammar::numeric_arg(&args[1], "b")?,
                grammar::numeric_arg(&args[2], "sigma")?,
            ),
            _ => Err(Error::InvalidArgument(format!("unknown density `{s}`"))),
        }
    }
}

/// Region over which kernel × density integrands live: the kernel domain
/// intersected with the density support, as plain bounds.
fn integration_region(k: &KernelSpec, p: &DensitySpec) -> (f64, f64) {
    let r = k.domain().intersect(&p.support());
    (r.lo, r.hi)
}

/// Report for ∫√K(x,x)·p(x) dx — the classical embedding condition.
/// Divergence here does NOT preclude the embedding; see `abs_condition`.
pub fn standard_variation(
    k: &KernelSpec,
    p: &DensitySpec,
    tol: f64,
) -> Result<ImproperIntegralReport> {
    let negative_at = std::cell::Cell::new(None);
    let integrand = |x: f64| {
        let kxx = k.eval_unchecked(x, x);
        if kxx < -EPS_PSD {
            negative_at.set(Some((x, kxx)));
            return f64::NAN;
        }
        kxx.max(0.0).sqrt() * p.pdf(x)
    };
    let result = improper(
        integrand,
        integration_region(k, p),
        &ExhaustionSpec::default(),
        &ImproperOptions::with_tol(tol),
    );
    match result {
        Err(Error::NonFinite { .. }) => {
            if let Some((at, value)) = negative_at.get() {
                Err(Error::NegativeDiagonal { at, value })
            } else {
                result
            }
        }
        other => other,
    }
}

/// Report for ∬|K(x,y)|·p(x)p(y) over square exhaustion stages — the
/// minimal hypothesis for the embedding to exist. The integrand is
/// nonnegative, so convergence along one exhaustion settles the matter.
pub fn abs_condition(
    k: &KernelSpec,
    p: &DensitySpec,
    tol: f64,
) -> Result<ImproperIntegralReport> {
    let region = integration_region(k, p);
    improper2d(
        |x, y| k.eval_unchecked(x, y).abs() * p.pdf(x) * p.pdf(y),
        region,
        region,
        &ExhaustionSpec::default(),
        &Improper2dOptions { track_abs: false, ..Improper2dOptions::with_tol(tol) },
    )
}

/// A constructed mean embedding μ_p: holds the squared norm ∬K·p⊗p, the
/// two integrability diagnostics, and an evaluator for μ_p(x) with a
/// per-point cache (same x always returns the identical value).
#[derive(Debug)]
pub struct EmbeddingResult {
    kernel: KernelSpec,
    density: DensitySpec,
    tol: f64,
    norm2: f64,
    std_variation: ImproperIntegralReport,
    abs_report: ImproperIntegralReport,
    exhaustion: ExhaustionSpec,
    cache: RwLock<HashMap<u64, f64>>,
}

impl EmbeddingResult {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn density(&self) -> &DensitySpec {
        &self.density
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// ‖μ_p‖² = ∬ K(x,y)p(x)p(y) dx dy.
    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn standard_variation_report(&self) -> &ImproperIntegralReport {
        &self.std_variation
    }

    pub fn abs_condition_report(&self) -> &ImproperIntegralReport {
        &self.abs_report
    }

    /// μ_p(x) = ∫ K(x,y) p(y) dy as an improper integral. Values are cached
    /// per x; within a process run repeated calls return bitwise-identical
    /// results.
    pub fn mu(&self, x: f64) -> Result<f64> {
        if !self.kernel.domain().contains(x) {
            return Err(Error::Domain(format!(
                "mu evaluation point {x} outside kernel domain {}",
                self.kernel.domain()
            )));
        }
        let key = x.to_bits();
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let region = integration_region(&self.kernel, &self.density);
        let report = improper(
            |y| self.kernel.eval_unchecked(x, y) * self.density.pdf(y),
            region,
            &self.exhaustion,
            &ImproperOptions { tol: self.tol, track_abs: false, ..Default::default() },
        )?;
        let value = report.limit().ok_or_else(|| {
            Error::NoConvergence(format!("mu_p({x}) improper integral did not converge"))
        })?;
        let mut cache = self.cache.write().expect("cache lock");
        Ok(*cache.entry(key).or_insert(value))
    }

    /// ⟨μ_p, ∂K/∂x1(c,·)⟩ = ∫ ∂K/∂x1(c,y) p(y) dy, at the same tolerance
    /// as μ_p itself.
    pub(crate) fn deriv_inner(&self, c: f64) -> Result<f64> {
        let region = integration_region(&self.kernel, &self.density);
        let kernel = self.kernel.clone();
        let report = improper(
            |y| kernel.d1_unchecked(c, y) * self.density.pdf(y),
            region,
            &self.exhaustion,
            &ImproperOptions { tol: self.tol, track_abs: false, ..Default::default() },
        )?;
        report.limit().ok_or_else(|| {
            Error::NoConvergence(format!(
                "inner product of embedding with derivative atom at {c} did not converge"
            ))
        })
    }
}

/// ⟨μ_p, μ_q⟩ for two embeddings over the same kernel.
pub(crate) fn cross_inner(a: &EmbeddingResult, b: &EmbeddingResult) -> Result<f64> {
    let ra = integration_region(&a.kernel, &a.density);
    let rb = integration_region(&b.kernel, &b.density);
    let tol = a.tol.min(b.tol);
    let report = improper2d(
        |x, y| a.kernel.eval_unchecked(x, y) * a.density.pdf(x) * b.density.pdf(y),
        ra,
        rb,
        &ExhaustionSpec::default(),
        &Improper2dOptions { track_abs: false, ..Improper2dOptions::with_tol(tol) },
    )?;
    report.limit().ok_or_else(|| {
        Error::NoConvergence("cross inner product of embeddings did not converge".into())
    })
}

/// Builds the mean embedding of `p` in the RKHS of `k`.
///
/// The hypothesis ∬|K|·p⊗p < ∞ is enforced: a divergent or inconclusive
/// absolute condition is `HypothesisNotMet`. The standard variation is
/// computed as a diagnostic only and may freely diverge.
pub fn mean_embedding(
    k: &KernelSpec,
    p: &DensitySpec,
    tol: f64,
) -> Result<Arc<EmbeddingResult>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let std_variation = standard_variation(k, p, tol)?;
    let abs_report = abs_condition(k, p, tol)?;
    if !abs_report.verdict.is_converged() {
        return Err(Error::HypothesisNotMet(format!(
            "absolute integrability of K under {p} is {:?}",
            abs_report.verdict
        )));
    }
    let norm2 = if k.is_nonnegative() {
        // |K| = K pointwise, so the signed integral is the absolute one
        abs_report.limit().expect("converged")
    } else {
        let region = integration_region(k, p);
        let signed = improper2d(
            |x, y| k.eval_unchecked(x, y) * p.pdf(x) * p.pdf(y),
            region,
            region,
            &ExhaustionSpec::default(),
            &Improper2dOptions { track_abs: false, ..Improper2dOptions::with_tol(tol) },
        )?;
        signed.limit().ok_or_else(|| {
            Error::NoConvergence(
                "signed norm integral did not converge despite absolute integrability".into(),
            )
        })?
    };
    Ok(Arc::new(EmbeddingResult {
        kernel: k.clone(),
        density: p.clone(),
        tol,
        norm2,
        std_variation,
        abs_report,
        exhaustion: ExhaustionSpec::default(),
        cache: RwLock::new(HashMap::new()),
    }))
}

/// 𝔼_{X∼p}[f(X)] via the reproducing route ⟨f, μ_p⟩.
pub fn expectation(f: &Expansion, emb: &Arc<EmbeddingResult>) -> Result<f64> {
    let rep = Expansion::new(emb.kernel.clone(), vec![(1.0, Atom::Embed(emb.clone()))])?;
    f.inner(&rep)
}
