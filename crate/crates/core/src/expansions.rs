//! Finite elements of the RKHS: weighted sums of kernel sections K(c,·),
//! derivative sections ∂K/∂x1(c,·), and mean embeddings μ_p.
//!
//! Inner products reduce bilinearly to closed-form base cases — K(c,d) for
//! value pairs, ∂K/∂x1(c,d) for derivative/value pairs, ∂²K/∂x1∂x2(c,d)
//! for derivative pairs — so norms of representers are exact kernel
//! evaluations, not quadrature. Only pairings against embeddings
//! integrate.

use crate::embedding::{self, EmbeddingResult};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, EPS_PSD};
use crate::numeric::KahanSum;
use std::sync::Arc;

/// One atom of an expansion.
#[derive(Debug, Clone)]
pub enum Atom {
    /// K(c, ·)
    Value(f64),
    /// ∂K/∂x1(c, ·); requires the cross-derivative regularity flag.
    Deriv(f64),
    /// μ_p for a completed embedding.
    Embed(Arc<EmbeddingResult>),
}

/// A finite RKHS element: Σ wᵢ · atomᵢ over a single kernel.
///
/// Term lists are kept literal — no deduplication or compaction — so an
/// expansion mirrors exactly the representer it was built from.
#[derive(Debug, Clone)]
pub struct Expansion {
    kernel: KernelSpec,
    terms: Vec<(f64, Atom)>,
}

impl Expansion {
    /// Validates that every atom is compatible with `kernel`: centers in
    /// the domain, derivative atoms only on kernels with a continuous
    /// cross derivative, embeddings built over the same kernel.
    pub fn new(kernel: KernelSpec, terms: Vec<(f64, Atom)>) -> Result<Expansion> {
        for (_, atom) in &terms {
            match atom {
                Atom::Value(c) => {
                    if !kernel.domain().contains(*c) {
                        return Err(Error::Domain(format!(
                            "atom center {c} outside domain {} of kernel {kernel}",
                            kernel.domain()
                        )));
                    }
                }
                Atom::Deriv(c) => {
                    if !kernel.regularity().cross_derivative_on_diagonal {
                        return Err(Error::Regularity(format!(
                            "derivative atoms need a continuous cross derivative; kernel {kernel} has none"
                        )));
                    }
                    if !kernel.domain().contains(*c) {
                        return Err(Error::Domain(format!(
                            "atom center {c} outside domain {} of kernel {kernel}",
                            kernel.domain()
                        )));
                    }
                }
                Atom::Embed(emb) => {
                    if emb.kernel() != &kernel {
                        return Err(Error::KernelMismatch(format!(
                            "embedding over {} attached to expansion over {kernel}",
                            emb.kernel()
                        )));
                    }
                }
            }
        }
        Ok(Expansion { kernel, terms })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn terms(&self) -> &[(f64, Atom)] {
        &self.terms
    }

    /// Pointwise evaluation: Value(c) ↦ K(c,x), Deriv(c) ↦ ∂K/∂x1(c,x),
    /// Embed ↦ μ_p(x).
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.kernel.domain().contains(x) {
            return Err(Error::Domain(format!(
                "evaluation point {x} outside domain {} of kernel {}",
                self.kernel.domain(),
                self.kernel
            )));
        }
        let mut sum = KahanSum::new();
        for (w, atom) in &self.terms {
            let v = match atom {
                Atom::Value(c) => self.kernel.eval(*c, x)?,
                Atom::Deriv(c) => self.kernel.d1(*c, x)?,
                Atom::Embed(emb) => emb.mu(x)?,
            };
            sum.add(w * v);
        }
        Ok(sum.value())
    }

    /// RKHS inner product, bilinear over atom pairs.
    pub fn inner(&self, other: &Expansion) -> Result<f64> {
        if self.kernel != other.kernel {
            return Err(Error::KernelMismatch(format!(
                "inner product between expansions over {} and {}",
                self.kernel, other.kernel
            )));
        }
        let mut sum = KahanSum::new();
        for (wa, a) in &self.terms {
            for (wb, b) in &other.terms {
                sum.add(wa * wb * self.atom_inner(a, b)?);
            }
        }
        Ok(sum.value())
    }

    fn atom_inner(&self, a: &Atom, b: &Atom) -> Result<f64> {
        let k = &self.kernel;
        match (a, b) {
            (Atom::Value(c), Atom::Value(d)) => k.eval(*c, *d),
            (Atom::Deriv(c), Atom::Value(d)) => k.d1(*c, *d),
            (Atom::Value(c), Atom::Deriv(d)) => k.d1(*d, *c),
            (Atom::Deriv(c), Atom::Deriv(d)) => k.d12(*c, *d),
            (Atom::Embed(e), Atom::Value(d)) | (Atom::Value(d), Atom::Embed(e)) => e.mu(*d),
            (Atom::Embed(e), Atom::Deriv(d)) | (Atom::Deriv(d), Atom::Embed(e)) => {
                e.deriv_inner(*d)
            }
            (Atom::Embed(e1), Atom::Embed(e2)) => {
                if Arc::ptr_eq(e1, e2) {
                    Ok(e1.norm2())
                } else {
                    embedding::cross_inner(e1, e2)
                }
            }
        }
    }

    /// ‖e‖² = ⟨e, e⟩ with tiny negatives in [−ε, 0] clamped to zero
    /// (bilinear cancellation noise on PSD kernels).
    pub fn norm2(&self) -> Result<f64> {
        let v = self.inner(self)?;
        if v < 0.0 && v >= -EPS_PSD {
            Ok(0.0)
        } else {
            Ok(v)
        }
    }

    /// a·e1 + b·e2 as a literal concatenation of scaled term lists.
    pub fn combine(a: f64, e1: &Expansion, b: f64, e2: &Expansion) -> Result<Expansion> {
        if e1.kernel != e2.kernel {
            return Err(Error::KernelMismatch(format!(
                "combining expansions over {} and {}",
                e1.kernel, e2.kernel
            )));
        }
        let mut terms = Vec::with_capacity(e1.terms.len() + e2.terms.len());
        terms.extend(e1.terms.iter().map(|(w, atom)| (a * w, atom.clone())));
        terms.extend(e2.terms.iter().map(|(w, atom)| (b * w, atom.clone())));
        Ok(Expansion { kernel: e1.kernel.clone(), terms })
    }

    /// JSON document `{kernel, terms:[{weight, kind, center?, density?, tol?}]}`
    /// with every float printed to 17 significant digits (exact f64
    /// round-trip).
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{{\"kernel\":\"{}\",\"terms\":[", self.kernel));
        for (i, (w, atom)) in self.terms.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match atom {
                Atom::Value(c) => out.push_str(&format!(
                    "{{\"weight\":{w:.16e},\"kind\":\"value\",\"center\":{c:.16e}}}"
                )),
                Atom::Deriv(c) => out.push_str(&format!(
                    "{{\"weight\":{w:.16e},\"kind\":\"deriv\",\"center\":{c:.16e}}}"
                )),
                Atom::Embed(e) => out.push_str(&format!(
                    "{{\"weight\":{w:.16e},\"kind\":\"embed\",\"density\":\"{}\",\"tol\":{:.16e}}}",
                    e.density(),
                    e.tol()
                )),
            }
        }
        out.push_str("]}");
        out
    }

    /// Parses the document produced by [`Expansion::to_json`]. Embed terms
    /// rebuild their embedding, which reruns the integrability gates.
    pub fn from_json(text: &str) -> Result<Expansion> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct TermDoc {
            weight: f64,
            kind: String,
            center: Option<f64>,
            density: Option<String>,
            tol: Option<f64>,
        }
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            kernel: String,
            terms: Vec<TermDoc>,
        }
        let doc: Doc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("expansion JSON: {e}")))?;
        let kernel: KernelSpec = doc.kernel.parse()?;
        let mut terms = Vec::with_capacity(doc.terms.len());
        for t in doc.terms {
            let missing = |field: &str| {
                Error::InvalidArgument(format!("{} term missing `{field}`", t.kind))
            };
            let atom = match t.kind.as_str() {
                "value" => Atom::Value(t.center.ok_or_else(|| missing("center"))?),
                "deriv" => Atom::Deriv(t.center.ok_or_else(|| missing("center"))?),
                "embed" => {
                    let density: crate::embedding::DensitySpec =
                        t.density.ok_or_else(|| missing("density"))?.parse()?;
                    let tol = t.tol.ok_or_else(|| missing("tol"))?;
                    Atom::Embed(embedding::mean_embedding(&kernel, &density, tol)?)
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown atom kind `{other}`"
                    )))
                }
            };
            terms.push((t.weight, atom));
        }
        Expansion::new(kernel, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss1() -> KernelSpec {
        KernelSpec::Gaussian { lengthscale: 1.0 }
    }

    fn expansion(terms: Vec<(f64, Atom)>) -> Expansion {
        Expansion::new(gauss1(), terms).unwrap()
    }

    #[test]
    fn eval_single_atoms() {
        let e = expansion(vec![(1.0, Atom::Value(0.0))]);
        assert!((e.eval(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let d = expansion(vec![(1.0, Atom::Deriv(0.0))]);
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_two_term_sum() {
        // 2K(0,x) - K(1,x) at x = 0: 2 - e^{-1}, plain arithmetic
        let e = expansion(vec![(2.0, Atom::Value(0.0)), (-1.0, Atom::Value(1.0))]);
        let expected = 2.0 - (-1.0f64).exp();
        assert!((e.eval(0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn inner_base_cases() {
        let x = 0.37;
        let v = expansion(vec![(1.0, Atom::Value(x))]);
        assert_eq!(v.inner(&v).unwrap(), 1.0);
        let d = expansion(vec![(1.0, Atom::Deriv(x))]);
        // cross derivative of the unit gaussian on the diagonal
        assert_eq!(d.inner(&d).unwrap(), 2.0);
        // mixed pair on the rank-one kernel: f(c) f'(x), closed form
        let k = KernelSpec::RankOneOsc;
        let (c, xx) = (0.8, 0.3);
        let val = Expansion::new(k.clone(), vec![(1.0, Atom::Value(c))]).unwrap();
        let der = Expansion::new(k.clone(), vec![(1.0, Atom::Deriv(xx))]).unwrap();
        let got = val.inner(&der).unwrap();
        let want = crate::kernels::osc_profile(c) * crate::kernels::osc_profile_d1(xx);
        assert!((got - want).abs() < 1e-15);
        // cross-check against a finite difference of <Value(c), Value(x+h)>
        let h = 1e-5;
        let fd = (k.eval(c, xx + h).unwrap() - k.eval(c, xx - h).unwrap()) / (2.0 * h);
        assert!((got - fd).abs() < 1e-7);
    }

    #[test]
    fn norm2_cases() {
        let e = expansion(vec![(1.0, Atom::Value(2.2))]);
        assert_eq!(e.norm2().unwrap(), 1.0);
        // derivative section of the rank-one kernel at 0 is the zero function
        let z = Expansion::new(KernelSpec::RankOneOsc, vec![(1.0, Atom::Deriv(0.0))]).unwrap();
        assert_eq!(z.norm2().unwrap(), 0.0);
        // ||K(0,.) - K(h,.)||^2 = 2 - 2 e^{-h^2} by bilinear expansion
        let h = 0.3;
        let diff = expansion(vec![(1.0, Atom::Value(0.0)), (-1.0, Atom::Value(h))]);
        let want = 2.0 - 2.0 * (-h * h).exp();
        assert!((diff.norm2().unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn combine_cancels_exactly() {
        let e = expansion(vec![(1.0, Atom::Value(0.4)), (0.5, Atom::Deriv(-0.2))]);
        let zero = Expansion::combine(1.0, &e, -1.0, &e).unwrap();
        assert!(zero.norm2().unwrap() <= 1e-12);
        let doubled = Expansion::combine(1.0, &e, 1.0, &e).unwrap();
        let x = 0.9;
        assert!((doubled.eval(x).unwrap() - 2.0 * e.eval(x).unwrap()).abs() < 1e-14);
        let scaled = Expansion::combine(2.0, &e, 0.0, &expansion(vec![])).unwrap();
        assert!((scaled.eval(x).unwrap() - 2.0 * e.eval(x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn kernel_mismatch_rejected() {
        let a = expansion(vec![(1.0, Atom::Value(0.0))]);
        let b = Expansion::new(KernelSpec::RankOneOsc, vec![(1.0, Atom::Value(0.0))]).unwrap();
        assert!(matches!(a.inner(&b), Err(Error::KernelMismatch(_))));
        assert!(matches!(
            Expansion::combine(1.0, &a, 1.0, &b),
            Err(Error::KernelMismatch(_))
        ));
    }

    #[test]
    fn deriv_atom_needs_cross_derivative() {
        let err = Expansion::new(KernelSpec::Brownian, vec![(1.0, Atom::Deriv(1.0))]);
        assert!(matches!(err, Err(Error::Regularity(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let e = expansion(vec![
            (std::f64::consts::PI, Atom::Value(1.0 / 3.0)),
            (-1.0e-7, Atom::Deriv(2.0_f64.sqrt())),
        ]);
        let text = e.to_json();
        let back = Expansion::from_json(&text).unwrap();
        assert_eq!(back.terms.len(), e.terms.len());
        for ((w1, a1), (w2, a2)) in e.terms.iter().zip(back.terms.iter()) {
            assert_eq!(w1.to_bits(), w2.to_bits());
            match (a1, a2) {
                (Atom::Value(c1), Atom::Value(c2)) | (Atom::Deriv(c1), Atom::Deriv(c2)) => {
                    assert_eq!(c1.to_bits(), c2.to_bits())
                }
                _ => panic!("atom kind changed in round trip"),
            }
        }
        assert!(Expansion::from_json("{\"kernel\":\"gaussian\",\"terms\":[{\"weight\":1.0,\"kind\":\"spline\"}]}").is_err());
    }
}
