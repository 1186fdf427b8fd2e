//! Operator representers in reproducing-kernel Hilbert spaces.
//!
//! A positive semidefinite kernel K on an interval 𝕏 ⊂ ℝ determines a
//! Hilbert space of functions in which evaluation is an inner product:
//! f(x) = ⟨f, K(x,·)⟩. The same mechanism extends to operators built from
//! compositions, L = Σ αᵢ T_{vᵢ}, whose action at a point is represented
//! by the expansion Σ αᵢ K(vᵢ(x),·), and — by taking limits — to
//! derivatives and integrals:
//!
//! * [`kernels`] — a small catalog of analytic kernels with exact closed
//!   form derivatives and regularity flags, including a rank-one kernel
//!   that is not C² yet has a continuous cross derivative.
//! * [`expansions`] — exact Hilbert-space algebra on finite elements:
//!   evaluation, inner products, norms, linear combinations.
//! * [`operators`] — combinations of composition operators, their
//!   representers, and a convergence analyzer that tabulates the double
//!   sequence Lₙℓ Lₘʳ K(x,x) and judges it in the uniform (Pringsheim)
//!   sense: representers converge exactly when this table settles.
//! * [`embedding`] — improper Riemann integration by exhaustion and mean
//!   embeddings μ_p with 𝔼f(X) = ⟨f, μ_p⟩, gated on absolute
//!   integrability of K·p⊗p rather than the stronger √K(x,x) condition.
//! * [`regression`] — a representer-theorem solver for penalized least
//!   squares over mixed value / operator / derivative / expectation
//!   observations.
//!
//! Everything is deterministic: immutable values, pure operations, and
//! parallel fills that depend only on indices.

pub mod embedding;
pub mod error;
pub mod expansions;
pub mod kernels;
pub mod operators;
pub mod regression;
pub mod report;

mod grammar;
mod numeric;

pub use error::{Error, Result};
pub use expansions::{Atom, Expansion};
pub use kernels::{Interval, KernelSpec, Regularity};
pub use operators::{
    gram_entry, loeve_table, representer_cauchy_decay, ConvergenceReport, ExactFamily,
    LoeveOptions, MapSpec, OperatorSequence, OperatorSpec,
};
pub use report::{ImproperIntegralReport, StagePartial, Verdict};
