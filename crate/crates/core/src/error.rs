//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by kernel evaluation, expansion algebra, quadrature,
/// convergence analysis, and the regression solver.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A point fell outside the kernel or integrand domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation required a regularity flag the kernel does not declare.
    #[error("regularity error: {0}")]
    Regularity(String),

    /// Two expansions (or an expansion and an embedding) use different kernels.
    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),

    /// An integrand returned NaN or an infinity at a quadrature node.
    #[error("non-finite integrand value at x = {at}")]
    NonFinite { at: f64 },

    /// The kernel diagonal K(x,x) was negative beyond tolerance at a node.
    #[error("negative kernel diagonal K(x,x) = {value} at x = {at}")]
    NegativeDiagonal { at: f64, value: f64 },

    /// Quadrature refinement hit its cap without meeting the tolerance.
    #[error("quadrature did not converge: {0}")]
    NoConvergence(String),

    /// A theorem hypothesis required by the operation does not hold numerically.
    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    /// The regression system is rank-deficient beyond the jitter policy.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// A precondition on arguments was violated (window sizes, parse errors, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
