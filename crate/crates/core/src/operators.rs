//! Combinations of composition operators and their representers.
//!
//! An operator L = Σ αᵢ T_{vᵢ} acts by Lf(x) = Σ αᵢ f(vᵢ(x)). Its
//! representer at x is the expansion Σ αᵢ K(vᵢ(x), ·) — note this is NOT
//! L applied to K(x,·), which would compose inside the second argument.
//!
//! Operator sequences (difference quotients, averaging sums, Riemann
//! quadrature sums) approach limit operators. Whether the representers
//! converge is decided by the double sequence u_{n,m} = Lₙℓ Lₘʳ K(x,x):
//! it must settle in the uniform (Pringsheim) sense, which `loeve_table`
//! approximates with a windowed oscillation test. Iterated row/column
//! estimates are reported alongside, because iterated limits can exist
//! when the double limit does not — the tables make that visible.

use crate::embedding::{mean_embedding, DensitySpec};
use crate::error::{Error, Result};
use crate::expansions::{Atom, Expansion};
use crate::grammar;
use crate::kernels::KernelSpec;
use crate::numeric::KahanSum;
use crate::report::Verdict;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// A named parametric map 𝕏 → 𝕏.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapSpec {
    Identity,
    /// x ↦ x + u
    Shift(f64),
    /// x ↦ s·x
    Scale(f64),
    /// x ↦ a·x + b
    Affine { a: f64, b: f64 },
}

impl MapSpec {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            MapSpec::Identity => x,
            MapSpec::Shift(u) => x + u,
            MapSpec::Scale(s) => s * x,
            MapSpec::Affine { a, b } => a * x + b,
        }
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapSpec::Identity => write!(f, "identity"),
            MapSpec::Shift(u) => write!(f, "shift({u})"),
            MapSpec::Scale(s) => write!(f, "scale({s})"),
            MapSpec::Affine { a, b } => write!(f, "affine({a},{b})"),
        }
    }
}

impl FromStr for MapSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = grammar::split_call(s)?;
        match (name.as_str(), args.len()) {
            ("identity", 0) => Ok(MapSpec::Identity),
            ("shift", 1) => Ok(MapSpec::Shift(grammar::numeric_arg(&args[0], "u")?)),
            ("scale", 1) => Ok(MapSpec::Scale(grammar::numeric_arg(&args[0], "s")?)),
            ("affine", 2) => Ok(MapSpec::Affine {
                a: grammar::numeric_arg(&args[0], "a")?,
                b: grammar::numeric_arg(&args[1], "b")?,
            }),
            _ => Err(Error::InvalidArgument(format!("unknown map `{s}`"))),
        }
    }
}

/// A combination of composition operators: weights αᵢ with maps vᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    terms: Vec<(f64, MapSpec)>,
}

impl OperatorSpec {
    pub fn new(terms: Vec<(f64, MapSpec)>) -> Result<OperatorSpec> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument(
                "an operator needs at least one term".into(),
            ));
        }
        Ok(OperatorSpec { terms })
    }

    pub fn identity() -> OperatorSpec {
        OperatorSpec { terms: vec![(1.0, MapSpec::Identity)] }
    }

    pub fn terms(&self) -> &[(f64, MapSpec)] {
        &self.terms
    }

    /// Lf(x) = Σ αᵢ f(vᵢ(x)) for a plain function with an explicit domain.
    pub fn apply<F: Fn(f64) -> f64>(
        &self,
        f: F,
        domain: &crate::kernels::Interval,
        x: f64,
    ) -> Result<f64> {
        let mut sum = KahanSum::new();
        for (alpha, map) in &self.terms {
            let v = map.apply(x);
            if !domain.contains(v) {
                return Err(Error::Domain(format!(
                    "map {map} sends {x} to {v}, outside {domain}"
                )));
            }
            sum.add(alpha * f(v));
        }
        Ok(sum.value())
    }

    /// Lf(x) for f an RKHS expansion (domain taken from its kernel).
    pub fn apply_expansion(&self, f: &Expansion, x: f64) -> Result<f64> {
        let domain = f.kernel().domain();
        let mut sum = KahanSum::new();
        for (alpha, map) in &self.terms {
            let v = map.apply(x);
            if !domain.contains(v) {
                return Err(Error::Domain(format!(
                    "map {map} sends {x} to {v}, outside {domain}"
                )));
            }
            sum.add(alpha * f.eval(v)?);
        }
        Ok(sum.value())
    }

    /// The representer Σ αᵢ K(vᵢ(x), ·) of f ↦ Lf(x).
    pub fn representer(&self, k: &KernelSpec, x: f64) -> Result<Expansion> {
        let domain = k.domain();
        let mut terms = Vec::with_capacity(self.terms.len());
        for (alpha, map) in &self.terms {
            let v = map.apply(x);
            if !domain.contains(v) {
                return Err(Error::Domain(format!(
                    "map {map} sends {x} to {v}, outside {domain}"
                )));
            }
            terms.push((*alpha, Atom::Value(v)));
        }
        Expansion::new(k.clone(), terms)
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "combo([")?;
        for (i, (alpha, map)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({alpha}, {map})")?;
        }
        write!(f, "])")
    }
}

impl FromStr for OperatorSpec {
    type Err = Error;

    /// Operator grammar: a bare map (`identity`, `shift(u)`, `scale(s)`,
    /// `affine(a,b)`) is a single-term operator with weight 1;
    /// `combo([(alpha, map), ...])` gives a full combination.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = grammar::split_call(s)?;
        if name == "combo" {
            if args.len() != 1 || !args[0].starts_with('[') || !args[0].ends_with(']') {
                return Err(Error::InvalidArgument(format!(
                    "combo expects a bracketed list, got `{s}`"
                )));
            }
            let inner = grammar::split_args(&args[0][1..args[0].len() - 1]);
            let mut terms = Vec::with_capacity(inner.len());
            for pair in inner {
                let trimmed = pair.trim();
                if !trimmed.starts_with('(') || !trimmed.ends_with(')') {
                    return Err(Error::InvalidArgument(format!(
                        "combo term `{trimmed}` is not a (weight, map) pair"
                    )));
                }
                let parts = grammar::split_args(&trimmed[1..trimmed.len() - 1]);
                if parts.len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "combo term `{trimmed}` is not a (weight, map) pair"
                    )));
                }
                let weight = grammar::numeric_arg(&parts[0], "weight")?;
                let map: MapSpec = parts[1].parse()?;
                terms.push((weight, map));
            }
            OperatorSpec::new(terms)
        } else {
            let map: MapSpec = s.parse()?;
            Ok(OperatorSpec { terms: vec![(1.0, map)] })
        }
    }
}

/// ⟨L̃_B(y), L̃_A(x)⟩ computed directly on the kernel:
/// Σᵢ Σⱼ αᵢᴬ αⱼᴮ K(vᵢᴬ(x), vⱼᴮ(y)). This is the independent code path
/// against which the atom-algebra inner product is checked.
pub fn gram_entry(
    op_a: &OperatorSpec,
    op_b: &OperatorSpec,
    k: &KernelSpec,
    x: f64,
    y: f64,
) -> Result<f64> {
    let domain = k.domain();
    let mut images_a = Vec::with_capacity(op_a.terms.len());
    for (alpha, map) in &op_a.terms {
        let v = map.apply(x);
        if !domain.contains(v) {
            return Err(Error::Domain(format!(
                "map {map} sends {x} to {v}, outside {domain}"
            )));
        }
        images_a.push((*alpha, v));
    }
    let mut images_b = Vec::with_capacity(op_b.terms.len());
    for (alpha, map) in &op_b.terms {
        let v = map.apply(y);
        if !domain.contains(v) {
            return Err(Error::Domain(format!(
                "map {map} sends {y} to {v}, outside {domain}"
            )));
        }
        images_b.push((*alpha, v));
    }
    let mut sum = KahanSum::new();
    for (wa, va) in &images_a {
        for (wb, vb) in &images_b {
            sum.add(wa * wb * k.eval_unchecked(*va, *vb));
        }
    }
    Ok(sum.value())
}

/// Named parametric sequences of operators approaching a limit operator.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSequence {
    /// Lₙ = (T_shift(uₙ) − T_id)/uₙ with uₙ = base⁻ⁿ. Approaches f ↦ f′.
    DerivativeDiff { base: f64 },
    /// Lₙ = Σᵢ (1/n) T_scale(i/n). Approaches f ↦ x⁻¹∫₀ˣ f.
    Averaging,
    /// Lₙ = Σᵢ Δᵢ p(vᵢ) T_const(vᵢ) over a uniform partition of `window`.
    /// Approaches f ↦ ∫ f·p over the window.
    RiemannQuadrature { density: DensitySpec, window: (f64, f64) },
    /// Lₙ = L for every n; useful as a degenerate diagnostic case.
    Constant(OperatorSpec),
}

impl OperatorSequence {
    /// Finite-difference steps below 2⁻²⁶ lose more than half the
    /// mantissa to cancellation in Lₙℓ Lₘʳ K; windows are capped there.
    pub fn max_index(&self) -> Option<u32> {
        match self {
            OperatorSequence::DerivativeDiff { base } => {
                Some((26.0 * std::f64::consts::LN_2 / base.ln()).floor() as u32)
            }
            _ => None,
        }
    }

    pub fn operator_at(&self, n: u32) -> Result<OperatorSpec> {
        if n == 0 {
            return Err(Error::InvalidArgument("sequence index starts at 1".into()));
        }
        match self {
            OperatorSequence::DerivativeDiff { base } => {
                let u = base.powi(-(n as i32));
                if u == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "difference step base^-{n} underflowed"
                    )));
                }
                OperatorSpec::new(vec![
                    (1.0 / u, MapSpec::Shift(u)),
                    (-1.0 / u, MapSpec::Identity),
                ])
            }
            OperatorSequence::Averaging => {
                let terms = (1..=n)
                    .map(|i| (1.0 / n as f64, MapSpec::Scale(i as f64 / n as f64)))
                    .collect();
                OperatorSpec::new(terms)
            }
            OperatorSequence::RiemannQuadrature { density, window } => {
                let (a, b) = *window;
                let h = (b - a) / n as f64;
                let terms = (1..=n)
                    .map(|i| {
                        let node = a + i as f64 * h;
                        (h * density.pdf(node), MapSpec::Affine { a: 0.0, b: node })
                    })
                    .collect();
                OperatorSpec::new(terms)
            }
            OperatorSequence::Constant(op) => Ok(op.clone()),
        }
    }
}

impl fmt::Display for OperatorSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorSequence::DerivativeDiff { base } => write!(f, "seq.derivative(base={base})"),
            OperatorSequence::Averaging => write!(f, "seq.averaging"),
            OperatorSequence::RiemannQuadrature { density, window } => {
                write!(f, "seq.quadrature({density},{},{})", window.0, window.1)
            }
            OperatorSequence::Constant(op) => write!(f, "seq.constant({op})"),
        }
    }
}

impl FromStr for OperatorSequence {
    type Err = Error;

    /// Sequence grammar: `seq.derivative(base=2)` (base optional),
    /// `seq.averaging`, `seq.quadrature(density, lo, hi)`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = grammar::split_call(s)?;
        match name.as_str() {
            "seq.derivative" => {
                let base = match args.len() {
                    0 => 2.0,
                    1 => grammar::numeric_arg(&args[0], "base")?,
                    n => {
                        return Err(Error::InvalidArgument(format!(
                            "seq.derivative takes at most one parameter, got {n}"
                        )))
                    }
                };
                if !(base.is_finite() && base > 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "difference step base must exceed 1, got {base}"
                    )));
                }
                Ok(OperatorSequence::DerivativeDiff { base })
            }
            "seq.averaging" if args.is_empty() => Ok(OperatorSequence::Averaging),
            "seq.quadrature" => {
                if args.len() != 3 {
                    return Err(Error::InvalidArgument(format!(
                        "seq.quadrature expects (density, lo, hi), got `{s}`"
                    )));
                }
                let density: DensitySpec = args[0].parse()?;
                let lo = grammar::numeric_arg(&args[1], "lo")?;
                let hi = grammar::numeric_arg(&args[2], "hi")?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidArgument(format!(
                        "quadrature window must be a bounded interval, got ({lo}, {hi})"
                    )));
                }
                Ok(OperatorSequence::RiemannQuadrature { density, window: (lo, hi) })
            }
            _ => Err(Error::InvalidArgument(format!("unknown sequence `{s}`"))),
        }
    }
}

/// Exact limit representers for the named families.
#[derive(Debug, Clone)]
pub enum ExactFamily {
    /// ∂K/∂x1(x,·) — the limit of the difference-quotient representers.
    Derivative { x: f64 },
    /// μ_p — the limit of the quadrature-sum representers.
    Embedding { density: DensitySpec, tol: f64 },
}

pub fn exact_representer(family: &ExactFamily, k: &KernelSpec) -> Result<Expansion> {
    match family {
        ExactFamily::Derivative { x } => {
            Expansion::new(k.clone(), vec![(1.0, Atom::Deriv(*x))])
        }
        ExactFamily::Embedding { density, tol } => {
            let emb = mean_embedding(k, density, *tol)?;
            Expansion::new(k.clone(), vec![(1.0, Atom::Embed(emb))])
        }
    }
}

/// Options for the convergence analyzer.
#[derive(Debug, Clone, Copy)]
pub struct LoeveOptions {
    /// Oscillation over the upper window quadrant must fall below this.
    pub tol_conv: f64,
    /// |u| beyond this is divergent outright.
    pub divergence_cap: f64,
}

impl Default for LoeveOptions {
    fn default() -> Self {
        LoeveOptions { tol_conv: 1e-3, divergence_cap: 1e12 }
    }
}

/// The tabulated double sequence u_{n,m} = Lₙℓ Lₘʳ K(x,x) with its verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub x: f64,
    pub n_lo: u32,
    pub n_hi: u32,
    /// table[i][j] = u_{n_lo+i, n_lo+j}
    pub table: Vec<Vec<f64>>,
    pub verdict: Verdict,
    /// Oscillation max|u_{n,m} − u_corner| over the full window.
    pub max_oscillation: f64,
    /// The same oscillation over three nested upper quadrants; decay
    /// across these is the uniform-convergence evidence.
    pub quadrant_oscillations: [f64; 3],
    /// Iterated estimates: row n at the last column (limit in m first).
    pub row_then_column: Vec<f64>,
    /// Iterated estimates: column m at the last row (limit in n first).
    pub column_then_row: Vec<f64>,
}

impl ConvergenceReport {
    /// CSV rows `n,m,u` for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,u\n");
        for (i, row) in self.table.iter().enumerate() {
            for (j, u) in row.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{:.16e}\n",
                    self.n_lo + i as u32,
                    self.n_lo + j as u32,
                    u
                ));
            }
        }
        out
    }
}

/// Fills u_{n,m} = Lₙℓ Lₘʳ K(x,x) over the index window [n_lo, n_hi] and
/// judges Pringsheim convergence.
///
/// Verdict heuristic: let c = u at the window corner. Converged(c) when
/// the oscillation max|u − c| over the upper quadrant (n,m ≥ mid) is below
/// `tol_conv` and does not grow across three nested quadrants. Diverged
/// when any |u| exceeds the cap, or the diagonal grows monotonically by at
/// least three doublings across the window. Otherwise Inconclusive.
pub fn loeve_table(
    seq: &OperatorSequence,
    k: &KernelSpec,
    x: f64,
    n_lo: u32,
    n_hi: u32,
    opts: &LoeveOptions,
) -> Result<ConvergenceReport> {
    if n_lo < 1 || n_hi < n_lo + 4 {
        return Err(Error::InvalidArgument(format!(
            "need a window with n_lo >= 1 and n_hi >= n_lo + 4, got [{n_lo}, {n_hi}]"
        )));
    }
    if let Some(cap) = seq.max_index() {
        if n_hi > cap {
            return Err(Error::InvalidArgument(format!(
                "window top {n_hi} exceeds the cancellation cap {cap} for {seq}"
            )));
        }
    }
    let ops: Vec<OperatorSpec> = (n_lo..=n_hi)
        .map(|n| seq.operator_at(n))
        .collect::<Result<_>>()?;
    let size = ops.len();

    // cells depend only on their indices; fill the upper triangle in
    // parallel and mirror (u is symmetric at (x,x) for symmetric kernels)
    let pairs: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i..size).map(move |j| (i, j)))
        .collect();
    let entries: Vec<((usize, usize), Result<f64>)> = pairs
        .into_par_iter()
        .map(|(i, j)| ((i, j), gram_entry(&ops[i], &ops[j], k, x, x)))
        .collect();
    let mut table = vec![vec![0.0; size]; size];
    for ((i, j), value) in entries {
        let v = value?;
        table[i][j] = v;
        table[j][i] = v;
    }

    let corner = table[size - 1][size - 1];
    let osc_from = |t: usize| -> f64 {
        let mut m = 0.0f64;
        for row in &table[t..] {
            for &u in &row[t..] {
                m = m.max((u - corner).abs());
            }
        }
        m
    };
    let mid = size / 2;
    let q3 = (mid + size - 1) / 2 + 1;
    let quadrants = [osc_from(0), osc_from(mid), osc_from(q3.min(size - 1))];
    let max_oscillation = quadrants[0];

    let diag: Vec<f64> = (0..size).map(|i| table[i][i]).collect();
    let any_over_cap = table
        .iter()
        .flatten()
        .any(|u| !u.is_finite() || u.abs() > opts.divergence_cap);
    let growing = diag.windows(2).all(|w| w[1].abs() > w[0].abs())
        && diag[size - 1].abs() >= 8.0 * diag[0].abs();

    let verdict = if any_over_cap {
        Verdict::Diverged
    } else if quadrants[1] <= opts.tol_conv
        && quadrants[1] <= quadrants[0]
        && quadrants[2] <= quadrants[1]
    {
        Verdict::Converged(corner)
    } else if growing {
        Verdict::Diverged
    } else {
        Verdict::Inconclusive
    };

    let row_then_column: Vec<f64> = (0..size).map(|i| table[i][size - 1]).collect();
    let column_then_row: Vec<f64> = (0..size).map(|j| table[size - 1][j]).collect();

    Ok(ConvergenceReport {
        x,
        n_lo,
        n_hi,
        table,
        verdict,
        max_oscillation,
        quadrant_oscillations: quadrants,
        row_then_column,
        column_then_row,
    })
}

/// ‖L̃_{n_{j+1}}(x) − L̃_{n_j}(x)‖² along increasing indices, each from
/// three gram entries. Vanishing values certify Cauchy behavior.
pub fn representer_cauchy_decay(
    seq: &OperatorSequence,
    k: &KernelSpec,
    x: f64,
    indices: &[u32],
) -> Result<Vec<f64>> {
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "cauchy decay indices must be strictly increasing".into(),
        ));
    }
    let mut out = Vec::with_capacity(indices.len().saturating_sub(1));
    for w in indices.windows(2) {
        let op_a = seq.operator_at(w[0])?;
        let op_b = seq.operator_at(w[1])?;
        let gaa = gram_entry(&op_a, &op_a, k, x, x)?;
        let gbb = gram_entry(&op_b, &op_b, k, x, x)?;
        let gab = gram_entry(&op_a, &op_b, k, x, x)?;
        out.push(gbb + gaa - 2.0 * gab);
    }
    Ok(out)
}
