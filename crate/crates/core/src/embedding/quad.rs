//! Riemann quadrature and improper integration by exhaustion.
//!
//! The one-dimensional rule is composite midpoint with dyadic refinement
//! and compensated summation; midpoint never evaluates interval endpoints,
//! which keeps densities like x⁻² on [1, ∞) out of trouble at domain edges.
//!
//! Improper integrals are driven over geometric exhaustion stages
//! E_s = [max(a, −c·rˢ), min(b, c·rˢ)] intersected with the region of
//! interest. Stage partials are built incrementally: each stage adds the
//! integral over the newly uncovered rings, which is exact by additivity
//! and keeps node counts scale-free on huge intervals.
//!
//! Two-dimensional stage increments (square exhaustion) decompose into at
//! most four rectangles, each integrated as an iterated pair of midpoint
//! rules. Both axes are partitioned geometrically away from the diagonal
//! y = x — piece widths double with distance — because products
//! K(x,y)p(x)p(y) of one-dimensional kernels concentrate their mass and
//! their kinks there. A uniform mesh over a stage that spans [1, 2ˢ]
//! would either miss that band entirely or need 2ˢ nodes to see it; the
//! graded partition resolves it with O(s) smooth pieces.

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::report::{ImproperIntegralReport, StagePartial, Verdict};
use std::cell::Cell;

/// Controls for the 1-D composite midpoint rule.
#[derive(Debug, Clone, Copy)]
pub struct MeshControl {
    /// Two successive refinements must agree within `tol·(1+|I|)`.
    pub tol: f64,
    /// Node count of the first mesh; each refinement doubles it.
    pub initial_nodes: u32,
    /// Refinement cap before giving up with `NoConvergence`.
    pub max_refinements: u32,
}

impl Default for MeshControl {
    fn default() -> Self {
        MeshControl {
            tol: 1e-8,
            initial_nodes: 16,
            max_refinements: 18,
        }
    }
}

impl MeshControl {
    pub fn with_tol(tol: f64) -> Self {
        MeshControl { tol, ..Default::default() }
    }
}

fn midpoint_pass<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, n: u64) -> Result<f64> {
    let h = (hi - lo) / n as f64;
    let mut sum = KahanSum::new();
    for i in 0..n {
        let x = lo + (i as f64 + 0.5) * h;
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { at: x });
        }
        sum.add(v);
    }
    Ok(sum.value() * h)
}

/// Composite midpoint quadrature over a bounded interval, halving the mesh
/// until two successive refinements agree within the tolerance.
pub fn riemann<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, ctl: &MeshControl) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "riemann needs a bounded interval, got [{lo}, {hi}]"
        )));
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let mut n = ctl.initial_nodes.max(1) as u64;
    let mut prev = midpoint_pass(&f, lo, hi, n)?;
    for _ in 0..ctl.max_refinements {
        n *= 2;
        let cur = midpoint_pass(&f, lo, hi, n)?;
        if (cur - prev).abs() <= ctl.tol * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::NoConvergence(format!(
        "midpoint rule on [{lo}, {hi}] did not settle within {} refinements",
        ctl.max_refinements
    )))
}

/// An axis-aligned rectangle for 2-D quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Rect {
        Rect { x0, x1, y0, y1 }
    }

    fn is_degenerate(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }
}

/// Controls for the iterated 2-D rule.
#[derive(Debug, Clone, Copy)]
pub struct Quad2dControl {
    /// Absolute error target for the whole rectangle.
    pub tol: f64,
    /// Width of the innermost graded pieces next to the diagonal; pieces
    /// double from there outward. Diagonal features narrower than this
    /// are the caller's risk.
    pub anchor_scale: f64,
    /// Node count of the first mesh on every piece.
    pub initial_nodes: u32,
    /// Per-piece refinement cap.
    pub max_refinements: u32,
    /// Total evaluation budget per rectangle; exceeding it is
    /// `NoConvergence`.
    pub max_evals: u64,
}

impl Default for Quad2dControl {
    fn default() -> Self {
        Quad2dControl {
            tol: 1e-8,
            anchor_scale: 1.0,
            initial_nodes: 8,
            max_refinements: 20,
            max_evals: 200_000_000,
        }
    }
}

/// Piece boundaries of `[lo, hi]` graded geometrically away from the
/// anchor interval `[alo, ahi]` (clipped; may sit outside `[lo, hi]`, in
/// which case grading starts at the nearest endpoint) and away from both
/// endpoints. Widths double with distance, so a feature of scale `unit`
/// at the anchor — and any power-law weight profile relative to an
/// endpoint — is resolved with O(log((hi−lo)/unit)) smooth pieces.
fn graded_breakpoints(lo: f64, hi: f64, alo: f64, ahi: f64, unit: f64) -> Vec<f64> {
    let core_lo = alo.clamp(lo, hi);
    let core_hi = ahi.clamp(lo, hi);
    let mut points = vec![lo, hi, core_lo, core_hi];
    let unit = unit.max(1e-12);
    let mut step = unit;
    let mut any = true;
    while any && points.len() < 4096 {
        any = false;
        for candidate in [core_lo - step, core_hi + step, lo + step, hi - step] {
            if candidate > lo && candidate < hi {
                points.push(candidate);
                any = true;
            }
        }
        step *= 2.0;
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// Composite midpoint with dyadic refinement to an absolute tolerance,
/// accelerated by two Richardson columns (the midpoint rule has an h²
/// error expansion, so the extrapolated sequence converges at sixth
/// order on smooth pieces while remaining a combination of plain
/// midpoint passes).
fn midpoint_dyadic_abs<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol_abs: f64,
    ctl: &Quad2dControl,
    evals: &Cell<u64>,
) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let pass = |n: u64| -> Result<f64> {
        evals.set(evals.get() + n);
        if evals.get() > ctl.max_evals {
            return Err(Error::NoConvergence(format!(
                "2-D quadrature exceeded its evaluation budget of {}",
                ctl.max_evals
            )));
        }
        let h = (hi - lo) / n as f64;
        let mut sum = KahanSum::new();
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite { at: x });
            }
            sum.add(v);
        }
        Ok(sum.value() * h)
    };
    let mut n = ctl.initial_nodes.max(1) as u64;
    let mut m_prev = pass(n)?;
    let mut r1_prev = f64::NAN;
    let mut best_prev = m_prev;
    for _ in 0..ctl.max_refinements {
        n *= 2;
        let m = pass(n)?;
        let r1 = m + (m - m_prev) / 3.0;
        let best = if r1_prev.is_nan() {
            r1
        } else {
            r1 + (r1 - r1_prev) / 15.0
        };
        if (best - best_prev).abs() <= tol_abs + 4.0 * f64::EPSILON * best.abs() {
            return Ok(best);
        }
        m_prev = m;
        r1_prev = r1;
        best_prev = best;
    }
    Err(Error::NoConvergence(format!(
        "midpoint rule on [{lo}, {hi}] did not reach absolute tolerance {tol_abs:.3e}"
    )))
}

/// Integral over a graded partition. With `by_width` the tolerance is
/// allocated proportionally to piece width (right for an outer axis whose
/// noise comes from inner integrals of that width); otherwise evenly by
/// count (right for an inner axis where distant pieces are trivial).
fn graded_integral<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    anchor: (f64, f64),
    tol_abs: f64,
    by_width: bool,
    ctl: &Quad2dControl,
    evals: &Cell<u64>,
) -> Result<f64> {
    let points = graded_breakpoints(lo, hi, anchor.0, anchor.1, ctl.anchor_scale);
    let pieces = points.len().saturating_sub(1).max(1);
    let mut sum = KahanSum::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let tol_piece = if by_width {
                tol_abs * (w[1] - w[0]) / (hi - lo)
            } else {
                tol_abs / pieces as f64
            };
            sum.add(midpoint_dyadic_abs(f, w[0], w[1], tol_piece, ctl, evals)?);
        }
    }
    Ok(sum.value())
}

/// 2-D quadrature over a bounded rectangle as an iterated pair of graded
/// composite-midpoint rules, both axes anchored at the diagonal y = x.
pub fn riemann2d<F: Fn(f64, f64) -> f64>(f: F, rect: Rect, ctl: &Quad2dControl) -> Result<f64> {
    if rect.is_degenerate() {
        return Ok(0.0);
    }
    if ![rect.x0, rect.x1, rect.y0, rect.y1].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "riemann2d needs a bounded rectangle, got {rect:?}"
        )));
    }
    let evals = Cell::new(0u64);
    let width = rect.x1 - rect.x0;
    // most of the budget to the outer rule; the inner share is divided by
    // the outer width because inner errors integrate against it
    let tol_outer = 0.8 * ctl.tol;
    let tol_inner = 0.2 * ctl.tol / width;
    // errors inside the inner integral surface through a side channel so
    // the outer integrand can stay a plain Fn(f64) -> f64
    let inner_error: Cell<Option<Error>> = Cell::new(None);
    let g_plain = |x: f64| {
        let inner = graded_integral(
            &|y| f(x, y),
            rect.y0,
            rect.y1,
            (x, x),
            tol_inner,
            false,
            ctl,
            &evals,
        );
        match inner {
            Ok(v) => v,
            Err(e) => {
                inner_error.set(Some(e));
                f64::NAN
            }
        }
    };
    let result = graded_integral(
        &g_plain,
        rect.x0,
        rect.x1,
        (rect.y0, rect.y1),
        tol_outer,
        true,
        ctl,
        &evals,
    );
    if let Some(e) = inner_error.take() {
        return Err(e);
    }
    result
}

/// Geometric exhaustion: stage s covers [max(a, −c·rˢ), min(b, c·rˢ)]
/// intersected with the region of integration.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ExhaustionSpec {
    pub scale: f64,
    pub ratio: f64,
    pub max_stages: u32,
}

impl Default for ExhaustionSpec {
    fn default() -> Self {
        // covers [1, 2^60]: far beyond where double-precision tails matter
        ExhaustionSpec { scale: 1.0, ratio: 2.0, max_stages: 60 }
    }
}

impl ExhaustionSpec {
    pub fn new(scale: f64, ratio: f64, max_stages: u32) -> Result<Self> {
        if !(scale > 0.0 && ratio > 1.0 && max_stages >= 2) {
            return Err(Error::InvalidArgument(format!(
                "exhaustion needs scale > 0, ratio > 1, stages >= 2; got c={scale}, r={ratio}, {max_stages} stages"
            )));
        }
        Ok(ExhaustionSpec { scale, ratio, max_stages })
    }

    /// Stage bounds clipped to `region`; may be empty (lo >= hi).
    pub fn stage_bounds(&self, s: u32, region: (f64, f64)) -> (f64, f64) {
        let reach = self.scale * self.ratio.powi(s as i32);
        (region.0.max(-reach), region.1.min(reach))
    }
}

/// Options for the improper-integral drivers.
#[derive(Debug, Clone, Copy)]
pub struct ImproperOptions {
    /// Stage-increment tolerance: converged after two consecutive stages
    /// with |ΔI| < tol·(1+|I|).
    pub tol: f64,
    /// |I_s| beyond this is declared divergent outright.
    pub divergence_cap: f64,
    /// Also accumulate partials of |integrand| (doubles the evaluations).
    pub track_abs: bool,
}

impl Default for ImproperOptions {
    fn default() -> Self {
        ImproperOptions {
            tol: 1e-6,
            divergence_cap: 1e12,
            track_abs: true,
        }
    }
}

impl ImproperOptions {
    pub fn with_tol(tol: f64) -> Self {
        ImproperOptions { tol, ..Default::default() }
    }

    /// Per-ring quadrature tolerance: a small share of the stage tolerance
    /// so that stage noise stays far below stage increments.
    fn ring_tol(&self) -> f64 {
        self.tol * 5e-3
    }
}

/// Tracks stage partials and decides the verdict.
///
/// Converged: two consecutive stages with |ΔI| < tol·(1+|I|).
/// Diverged: |I| above the cap, or five monotone increments that are not
/// vanishing (near-constant or growing). Sign-oscillating partials are
/// never declared divergent; the stage cap yields Inconclusive.
struct StageTracker {
    tol: f64,
    cap: f64,
    partials: Vec<StagePartial>,
    abs_partials: Vec<StagePartial>,
    increments: Vec<f64>,
    small_run: u32,
}

impl StageTracker {
    fn new(tol: f64, cap: f64) -> Self {
        StageTracker {
            tol,
            cap,
            partials: Vec::new(),
            abs_partials: Vec::new(),
            increments: Vec::new(),
            small_run: 0,
        }
    }

    fn push(&mut self, stage: u32, value: f64, abs_value: Option<f64>, grew: bool) -> Option<Verdict> {
        let prev = self.partials.last().map(|p| p.value);
        self.partials.push(StagePartial { stage, value });
        if let Some(a) = abs_value {
            self.abs_partials.push(StagePartial { stage, value: a });
        }
        if value.abs() > self.cap {
            return Some(Verdict::Diverged);
        }
        // stages that added no new region carry no evidence
        if !grew {
            return None;
        }
        let delta = value - prev.unwrap_or(0.0);
        self.increments.push(delta);
        if delta.abs() < self.tol * (1.0 + value.abs()) {
            self.small_run += 1;
            if self.small_run >= 2 {
                return Some(Verdict::Converged(value));
            }
        } else {
            self.small_run = 0;
        }
        if self.increments.len() >= 5 {
            let last5 = &self.increments[self.increments.len() - 5..];
            let all_positive = last5.iter().all(|&d| d > 0.0);
            let min = last5.iter().copied().fold(f64::INFINITY, f64::min);
            let max = last5.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let near_constant = min >= 0.9 * max;
            let nondecreasing = last5.windows(2).all(|w| w[1] >= 0.999 * w[0]);
            let last_large = last5[4] >= self.tol * (1.0 + value.abs());
            if all_positive && (near_constant || nondecreasing) && last_large {
                return Some(Verdict::Diverged);
            }
        }
        None
    }

    fn finish(self, verdict: Verdict) -> ImproperIntegralReport {
        ImproperIntegralReport {
            partials: self.partials,
            abs_partials: self.abs_partials,
            verdict,
        }
    }
}

/// Improper Riemann integral of `f` over `region` (endpoints may be
/// infinite) by exhaustion. Stage partials are exact ring sums, so each
/// stage integrates only the newly uncovered intervals.
pub fn improper<F: Fn(f64) -> f64>(
    f: F,
    region: (f64, f64),
    exh: &ExhaustionSpec,
    opts: &ImproperOptions,
) -> Result<ImproperIntegralReport> {
    let mesh = MeshControl::with_tol(opts.ring_tol());
    let mut tracker = StageTracker::new(opts.tol, opts.divergence_cap);
    if region.0 >= region.1 {
        tracker.push(0, 0.0, opts.track_abs.then_some(0.0), true);
        return Ok(tracker.finish(Verdict::Converged(0.0)));
    }
    let mut value = KahanSum::new();
    let mut abs_value = KahanSum::new();
    let mut prev: Option<(f64, f64)> = None;
    for s in 0..=exh.max_stages {
        let (lo, hi) = exh.stage_bounds(s, region);
        let cur = (lo, hi.max(lo));
        let rings: Vec<(f64, f64)> = match prev {
            None => vec![cur],
            Some(p) => vec![(cur.0, p.0), (p.1, cur.1)],
        };
        let mut grew = false;
        for (a, b) in rings {
            if b > a {
                grew = true;
                value.add(riemann(&f, a, b, &mesh)?);
                if opts.track_abs {
                    abs_value.add(riemann(|x| f(x).abs(), a, b, &mesh)?);
                }
            }
        }
        let nonempty = cur.1 > cur.0;
        if nonempty {
            prev = Some(cur);
        }
        if let Some(v) = tracker.push(
            s,
            value.value(),
            opts.track_abs.then_some(abs_value.value()),
            grew || (nonempty && covers(cur, region)),
        ) {
            return Ok(tracker.finish(v));
        }
        // a bounded region fully covered cannot change any more
        if nonempty && covers(cur, region) && tracker.small_run >= 2 {
            return Ok(tracker.finish(Verdict::Converged(value.value())));
        }
    }
    Ok(tracker.finish(Verdict::Inconclusive))
}

fn covers(stage: (f64, f64), region: (f64, f64)) -> bool {
    stage.0 <= region.0 && stage.1 >= region.1
}

/// Options for the 2-D improper driver.
#[derive(Debug, Clone, Copy)]
pub struct Improper2dOptions {
    pub tol: f64,
    pub divergence_cap: f64,
    pub quad: Quad2dControl,
    pub track_abs: bool,
}

impl Improper2dOptions {
    pub fn with_tol(tol: f64) -> Self {
        Improper2dOptions {
            tol,
            divergence_cap: 1e12,
            quad: Quad2dControl::default(),
            track_abs: true,
        }
    }
}

/// Improper Riemann integral of `f(x,y)` over `region_x × region_y` with
/// square exhaustion stages E_s × E_s. Stage increments decompose into at
/// most four rectangles around the previous stage square.
pub fn improper2d<F: Fn(f64, f64) -> f64>(
    f: F,
    region_x: (f64, f64),
    region_y: (f64, f64),
    exh: &ExhaustionSpec,
    opts: &Improper2dOptions,
) -> Result<ImproperIntegralReport> {
    let mut tracker = StageTracker::new(opts.tol, opts.divergence_cap);
    if region_x.0 >= region_x.1 || region_y.0 >= region_y.1 {
        tracker.push(0, 0.0, opts.track_abs.then_some(0.0), true);
        return Ok(tracker.finish(Verdict::Converged(0.0)));
    }
    let mut value = KahanSum::new();
    let mut abs_value = KahanSum::new();
    let mut prev: Option<((f64, f64), (f64, f64))> = None;
    for s in 0..=exh.max_stages {
        let xs = exh.stage_bounds(s, region_x);
        let ys = exh.stage_bounds(s, region_y);
        let nonempty = xs.1 > xs.0 && ys.1 > ys.0;
        let rects: Vec<Rect> = match prev {
            None => vec![Rect::new(xs.0, xs.1, ys.0, ys.1)],
            Some((px, py)) => vec![
                // strips left/right of the previous square, full height
                Rect::new(xs.0, px.0, ys.0, ys.1),
                Rect::new(px.1, xs.1, ys.0, ys.1),
                // strips below/above, previous width only
                Rect::new(px.0, px.1, ys.0, py.0),
                Rect::new(px.0, px.1, py.1, ys.1),
            ],
        };
        let stage_tol = opts.tol * 0.05 * (1.0 + value.value().abs());
        let mut grew = false;
        for rect in rects {
            if rect.is_degenerate() {
                continue;
            }
            grew = true;
            let ctl = Quad2dControl { tol: stage_tol / 4.0, ..opts.quad };
            value.add(riemann2d(&f, rect, &ctl)?);
            if opts.track_abs {
                abs_value.add(riemann2d(|x, y| f(x, y).abs(), rect, &ctl)?);
            }
        }
        if nonempty {
            prev = Some((xs, ys));
        }
        let covered =
            nonempty && covers(xs, region_x) && covers(ys, region_y);
        if let Some(v) = tracker.push(
            s,
            value.value(),
            opts.track_abs.then_some(abs_value.value()),
            grew || covered,
        ) {
            return Ok(tracker.finish(v));
        }
    }
    Ok(tracker.finish(Verdict::Inconclusive))
}
