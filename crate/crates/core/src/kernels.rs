//! Catalog of analytic one-dimensional kernels with exact derivatives.
//!
//! Every entry carries closed forms for K, ∂K/∂x1, ∂K/∂x2 and the cross
//! derivative ∂²K/∂x1∂x2, plus regularity flags declared per kernel.
//! Derivatives are hand-coded; finite differences are reserved for tests.

use crate::error::{Error, Result};
use crate::grammar;
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

/// Default tolerance for "numerically PSD": Gram matrices may have
/// eigenvalues as low as −ε from double-precision eigensolver noise.
pub const EPS_PSD: f64 = 1e-8;

/// A real interval, possibly unbounded, with open or closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_closed: false,
        hi_closed: false,
    };

    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// Clips `[-half_width, half_width]` to the interval, insetting open
    /// endpoints slightly. Used to sample test points on unbounded domains.
    pub fn sample_window(&self, half_width: f64) -> (f64, f64) {
        let inset = 1e-3;
        let lo = if self.lo.is_finite() {
            if self.lo_closed { self.lo } else { self.lo + inset }
        } else {
            -half_width
        };
        let hi = if self.hi.is_finite() {
            if self.hi_closed { self.hi } else { self.hi - inset }
        } else {
            half_width
        };
        (lo, hi.max(lo + inset))
    }

    /// Intersection of two intervals. Degenerate results are allowed.
    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval { lo, hi, lo_closed, hi_closed }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Regularity flags declared per catalog entry.
///
/// `cross_derivative_on_diagonal` means ∂²K/∂x1∂x2 exists and is continuous
/// on a neighborhood of the diagonal — the condition for derivative atoms.
/// It can hold without `c2` (the rank-one oscillating kernel is the witness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regularity {
    pub c1: bool,
    pub cross_derivative_on_diagonal: bool,
    pub c2: bool,
}

/// A symmetric PSD kernel on an interval of the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// K(x,y) = exp(−(x−y)²/ℓ²) on ℝ.
    Gaussian { lengthscale: f64 },
    /// K(x,y) = f(x)f(y) with f(x) = x⁴ sin(1/x), f(0) = 0, on ℝ.
    /// Rank one; has a continuous cross derivative but is not C².
    RankOneOsc,
    /// K(x,y) = xy·exp(−(x−y)²) on [1, ∞).
    ScaledGaussian,
    /// K(x,y) = min(x,y) on (0, ∞). Not C¹; used as a negative test.
    Brownian,
}

/// Oscillating profile of the rank-one kernel: x⁴ sin(1/x), 0 at the origin.
pub fn osc_profile(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powi(4) * (1.0 / x).sin()
    }
}

/// First derivative of the oscillating profile; the value at 0 is the
/// analytic limit 0 (the closed form 4x³sin(1/x) − x²cos(1/x) is singular).
pub fn osc_profile_d1(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        let inv = 1.0 / x;
        4.0 * x.powi(3) * inv.sin() - x * x * inv.cos()
    }
}

/// Second derivative of the oscillating profile; 0 at the origin by the
/// analytic limit. Has no limit as x → 0 (the sin(1/x) term survives),
/// so the profile is twice differentiable but not C².
pub fn osc_profile_d2(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        let inv = 1.0 / x;
        12.0 * x * x * inv.sin() - 6.0 * x * inv.cos() - inv.sin()
    }
}

impl KernelSpec {
    pub fn domain(&self) -> Interval {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::RankOneOsc => Interval::REAL_LINE,
            KernelSpec::ScaledGaussian => Interval {
                lo: 1.0,
                hi: f64::INFINITY,
                lo_closed: true,
                hi_closed: false,
            },
            KernelSpec::Brownian => Interval {
                lo: 0.0,
                hi: f64::INFINITY,
                lo_closed: false,
                hi_closed: false,
            },
        }
    }

    pub fn regularity(&self) -> Regularity {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::ScaledGaussian => Regularity {
                c1: true,
                cross_derivative_on_diagonal: true,
                c2: true,
            },
            KernelSpec::RankOneOsc => Regularity {
                c1: true,
                cross_derivative_on_diagonal: true,
                c2: false,
            },
            KernelSpec::Brownian => Regularity {
                c1: false,
                cross_derivative_on_diagonal: false,
                c2: false,
            },
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain().contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point {x} outside domain {} of kernel {self}",
                self.domain()
            )))
        }
    }

    /// K(x,y). Exactly symmetric in its arguments: every closed form below
    /// is written in terms of symmetric quantities of (x, y).
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Gaussian { lengthscale } => {
                let u = x - y;
                (-(u * u) / (lengthscale * lengthscale)).exp()
            }
            KernelSpec::RankOneOsc => osc_profile(x) * osc_profile(y),
            KernelSpec::ScaledGaussian => {
                let u = x - y;
                x * y * (-(u * u)).exp()
            }
            KernelSpec::Brownian => x.min(y),
        }
    }

    /// K(x,y) ≥ 0 everywhere on the domain. Lets the embedding reuse the
    /// absolute 2-D integral as the signed one.
    pub(crate) fn is_nonnegative(&self) -> bool {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::ScaledGaussian | KernelSpec::Brownian => {
                true
            }
            KernelSpec::RankOneOsc => false,
        }
    }

    /// ∂K/∂x1 without domain or flag checks, for quadrature inner loops
    /// where the caller has already validated both.
    pub(crate) fn d1_unchecked(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Gaussian { lengthscale } => {
                let l2 = lengthscale * lengthscale;
                let u = x - y;
                -2.0 * u / l2 * (-(u * u) / l2).exp()
            }
            KernelSpec::RankOneOsc => osc_profile_d1(x) * osc_profile(y),
            KernelSpec::ScaledGaussian => {
                let u = x - y;
                y * (1.0 - 2.0 * x * u) * (-(u * u)).exp()
            }
            KernelSpec::Brownian => f64::NAN,
        }
    }

    fn check_c1(&self) -> Result<()> {
        if self.regularity().c1 {
            Ok(())
        } else {
            Err(Error::Regularity(format!("kernel {self} is not C1")))
        }
    }

    /// ∂K/∂x1(x,y) from the closed form.
    pub fn d1(&self, x: f64, y: f64) -> Result<f64> {
        self.check_c1()?;
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(self.d1_unchecked(x, y))
    }

    /// ∂K/∂x2(x,y) = ∂K/∂x1(y,x) by symmetry.
    pub fn d2(&self, x: f64, y: f64) -> Result<f64> {
        self.d1(y, x)
    }

    /// ∂²K/∂x1∂x2(x,y). Requires the cross-derivative flag.
    pub fn d12(&self, x: f64, y: f64) -> Result<f64> {
        if !self.regularity().cross_derivative_on_diagonal {
            return Err(Error::Regularity(format!(
                "kernel {self} has no continuous cross derivative"
            )));
        }
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(match self {
            KernelSpec::Gaussian { lengthscale } => {
                let l2 = lengthscale * lengthscale;
                let u = x - y;
                (2.0 / l2 - 4.0 * u * u / (l2 * l2)) * (-(u * u) / l2).exp()
            }
            KernelSpec::RankOneOsc => osc_profile_d1(x) * osc_profile_d1(y),
            KernelSpec::ScaledGaussian => {
                let u = x - y;
                (1.0 + 2.0 * x * y - 2.0 * u * u - 4.0 * x * y * u * u) * (-(u * u)).exp()
            }
            KernelSpec::Brownian => unreachable!("no cross derivative"),
        })
    }

    /// Smallest eigenvalue of the Gram matrix [K(x_i, x_j)]. The caller
    /// compares against −ε to spot-check positive semidefiniteness.
    pub fn psd_spot_check(&self, points: &[f64]) -> Result<f64> {
        if points.is_empty() || points.len() > 64 {
            return Err(Error::InvalidArgument(format!(
                "psd spot check needs 1..=64 points, got {}",
                points.len()
            )));
        }
        for (i, &p) in points.iter().enumerate() {
            self.check_domain(p)?;
            if points[..i].contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate point {p} in psd spot check"
                )));
            }
        }
        let n = points.len();
        let gram = DMatrix::from_fn(n, n, |i, j| self.eval_unchecked(points[i], points[j]));
        let eigen = gram.symmetric_eigen();
        Ok(eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { lengthscale } => write!(f, "gaussian(l={lengthscale})"),
            KernelSpec::RankOneOsc => write!(f, "rank_one_osc"),
            KernelSpec::ScaledGaussian => write!(f, "scaled_gaussian"),
            KernelSpec::Brownian => write!(f, "brownian"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses the kernel grammar: `gaussian(l=1.0)`, `rank_one_osc`,
    /// `scaled_gaussian`, `brownian`. Case-insensitive; unknown names
    /// are a hard error.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = grammar::split_call(s)?;
        match name.as_str() {
            "gaussian" => {
                let lengthscale = match args.len() {
                    0 => 1.0,
                    1 => grammar::numeric_arg(&args[0], "l")?,
                    n => {
                        return Err(Error::InvalidArgument(format!(
                            "gaussian takes at most one parameter, got {n}"
                        )))
                    }
                };
                if !(lengthscale.is_finite() && lengthscale > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian lengthscale must be positive, got {lengthscale}"
                    )));
                }
                Ok(KernelSpec::Gaussian { lengthscale })
            }
            "rank_one_osc" if args.is_empty() => Ok(KernelSpec::RankOneOsc),
            "scaled_gaussian" if args.is_empty() => Ok(KernelSpec::ScaledGaussian),
            "brownian" if args.is_empty() => Ok(KernelSpec::Brownian),
            _ => Err(Error::InvalidArgument(format!("unknown kernel `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss1() -> KernelSpec {
        KernelSpec::Gaussian { lengthscale: 1.0 }
    }

    #[test]
    fn eval_catalog_values() {
        assert_eq!(gauss1().eval(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(KernelSpec::RankOneOsc.eval(0.0, 0.7).unwrap(), 0.0);
        // 6/e, checked against high-precision evaluation 2.2072766470286539
        let v = KernelSpec::ScaledGaussian.eval(2.0, 3.0).unwrap();
        assert!((v - 2.2072766470286539).abs() < 1e-15);
        assert!((v - 6.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(
            KernelSpec::ScaledGaussian.eval(0.5, 2.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            KernelSpec::Brownian.eval(0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(gauss1().eval(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn d1_closed_forms() {
        assert_eq!(gauss1().d1(0.7, 0.7).unwrap(), 0.0);
        let (x, y) = (0.3, -0.2);
        let expected = osc_profile_d1(x) * osc_profile(y);
        let got = KernelSpec::RankOneOsc.d1(x, y).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-14);
        assert!(matches!(
            KernelSpec::Brownian.d1(1.0, 2.0),
            Err(Error::Regularity(_))
        ));
        // checked against symbolic differentiation: d1 at (2,3) = 15/e
        let v = KernelSpec::ScaledGaussian.d1(2.0, 3.0).unwrap();
        assert!((v - 5.518191617571635).abs() < 1e-14);
    }

    #[test]
    fn d12_closed_forms() {
        assert_eq!(KernelSpec::RankOneOsc.d12(0.0, 0.0).unwrap(), 0.0);
        // symbolic oracle: cross derivative of exp(-(x-y)^2) on the diagonal is 2
        assert_eq!(gauss1().d12(1.3, 1.3).unwrap(), 2.0);
        assert_eq!(gauss1().d12(-4.0, -4.0).unwrap(), 2.0);
        // symbolic oracle value at (2,3): -13/e
        let v = KernelSpec::ScaledGaussian.d12(2.0, 3.0).unwrap();
        assert!((v - (-4.78243273522875)).abs() < 1e-14);
        let (x, y) = (0.4, 0.9);
        assert_eq!(
            KernelSpec::RankOneOsc.d12(x, y).unwrap(),
            osc_profile_d1(x) * osc_profile_d1(y)
        );
        assert!(matches!(
            KernelSpec::Brownian.d12(1.0, 1.0),
            Err(Error::Regularity(_))
        ));
    }

    #[test]
    fn d1_matches_central_difference() {
        // |d1 - central difference| <= C h^2 away from removable singularities
        let kernels = [gauss1(), KernelSpec::RankOneOsc, KernelSpec::ScaledGaussian];
        let points: [(f64, f64); 3] = [(0.4, -0.3), (1.7, 2.2), (3.1, 1.4)];
        for k in &kernels {
            for &(mut x, mut y) in &points {
                if !k.domain().contains(x) || !k.domain().contains(y) {
                    x += 2.0;
                    y += 2.0;
                }
                for h in [1e-3, 1e-4] {
                    let fd =
                        (k.eval(x + h, y).unwrap() - k.eval(x - h, y).unwrap()) / (2.0 * h);
                    let exact = k.d1(x, y).unwrap();
                    assert!(
                        (fd - exact).abs() <= 200.0 * h * h,
                        "{k} at ({x},{y}) h={h}: fd={fd} exact={exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn osc_profile_second_derivative_has_no_limit() {
        // f''(0) = 0 by the analytic limit, yet f''(x_k) -> -1 along
        // x_k = 1/(2 pi k + pi/2): twice differentiable but not C2.
        assert_eq!(osc_profile_d2(0.0), 0.0);
        let k = 1.0e4;
        let x_k = 1.0 / (2.0 * std::f64::consts::PI * k + std::f64::consts::FRAC_PI_2);
        assert!((osc_profile_d2(x_k) + 1.0).abs() <= 0.05);
    }

    #[test]
    fn psd_spot_check_values() {
        // dense symmetric eigensolver oracle on the 3x3 Gram: min eig 0.0673
        let min_eig = gauss1().psd_spot_check(&[0.0, 0.5, 1.0]).unwrap();
        assert!(min_eig >= -1e-10);
        assert!((min_eig - 0.06729513).abs() < 1e-6);
        // rank-one Gram is vv^T, PSD by construction
        let m = KernelSpec::RankOneOsc
            .psd_spot_check(&[0.3, 0.5, 0.9, -0.4])
            .unwrap();
        assert!(m >= -1e-12);
        // 1x1 case: K(x,x) >= 0
        let one = KernelSpec::Brownian.psd_spot_check(&[2.0]).unwrap();
        assert_eq!(one, 2.0);
    }

    #[test]
    fn psd_spot_check_rejects_bad_input() {
        assert!(gauss1().psd_spot_check(&[0.1, 0.1]).is_err());
        assert!(gauss1().psd_spot_check(&[]).is_err());
        assert!(KernelSpec::ScaledGaussian.psd_spot_check(&[0.2]).is_err());
    }

    #[test]
    fn symmetry_on_random_pairs() {
        // closed forms are written symmetrically, so equality is exact
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in [
            gauss1(),
            KernelSpec::RankOneOsc,
            KernelSpec::ScaledGaussian,
            KernelSpec::Brownian,
        ] {
            let (lo, hi) = k.domain().sample_window(6.0);
            for _ in 0..1000 {
                let x = lo + (hi - lo) * next();
                let y = lo + (hi - lo) * next();
                assert_eq!(k.eval(x, y).unwrap(), k.eval(y, x).unwrap());
            }
        }
    }

    #[test]
    fn psd_spot_check_random_sets() {
        // 20 random 8-point sets per catalog kernel stay PSD up to noise
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in [
            gauss1(),
            KernelSpec::RankOneOsc,
            KernelSpec::ScaledGaussian,
            KernelSpec::Brownian,
        ] {
            let (lo, hi) = k.domain().sample_window(8.0);
            for _ in 0..20 {
                let mut points: Vec<f64> = Vec::with_capacity(8);
                while points.len() < 8 {
                    let p = lo + (hi - lo) * next();
                    if !points.contains(&p) {
                        points.push(p);
                    }
                }
                let min_eig = k.psd_spot_check(&points).unwrap();
                assert!(min_eig >= -1e-8, "{k}: min eigenvalue {min_eig}");
            }
        }
    }

    #[test]
    fn d1_d2_consistency() {
        let k = KernelSpec::ScaledGaussian;
        let (x, y) = (1.5, 3.25);
        assert_eq!(k.d1(x, y).unwrap(), k.d2(y, x).unwrap());
    }

    #[test]
    fn parse_kernel_grammar() {
        assert_eq!(
            "Gaussian(L=2.5)".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { lengthscale: 2.5 }
        );
        assert_eq!(
            "gaussian".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { lengthscale: 1.0 }
        );
        assert_eq!(
            "RANK_ONE_OSC".parse::<KernelSpec>().unwrap(),
            KernelSpec::RankOneOsc
        );
        assert!("matern(0.5)".parse::<KernelSpec>().is_err());
        assert!("gaussian(l=-1)".parse::<KernelSpec>().is_err());
    }
}
