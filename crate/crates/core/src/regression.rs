//! Penalized regression with heterogeneous operator observations.
//!
//! Observations are linear functionals of the unknown function h: point
//! values, combination-of-composition operators at a point, derivatives,
//! or expectations under a density. The minimizer of
//! Σ (Lᵢh(xᵢ) − yᵢ)² + λ‖h‖² lies in the span of the observation
//! representers; solving (G + λI)c = y over that span is exact, with
//! G[i][j] the RKHS inner product of representers i and j.

use crate::embedding::{mean_embedding, DensitySpec, EmbeddingResult};
use crate::error::{Error, Result};
use crate::expansions::{Atom, Expansion};
use crate::kernels::KernelSpec;
use crate::numeric::KahanSum;
use crate::operators::OperatorSpec;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A linear functional of the unknown function.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationOp {
    /// h ↦ h(x)
    Value { x: f64 },
    /// h ↦ Lh(x)
    Operator { op: OperatorSpec, x: f64 },
    /// h ↦ h′(x)
    Derivative { x: f64 },
    /// h ↦ 𝔼_{X∼p}[h(X)]
    Expectation { density: DensitySpec },
}

/// One observation: a functional with its observed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub op: ObservationOp,
    pub y: f64,
}

/// Solver options.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Tolerance for embeddings backing expectation observations.
    pub embedding_tol: f64,
    /// λ = 0 is allowed only while the Gram condition estimate stays
    /// below this cap.
    pub condition_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { embedding_tol: 1e-8, condition_cap: 1e12 }
    }
}

/// Diagonal jitter ladder tried before declaring the system singular.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Builds representers for observation functionals, sharing one embedding
/// per distinct density.
struct RepresenterBuilder<'a> {
    kernel: &'a KernelSpec,
    embedding_tol: f64,
    embeddings: Vec<(DensitySpec, Arc<EmbeddingResult>)>,
}

impl<'a> RepresenterBuilder<'a> {
    fn new(kernel: &'a KernelSpec, embedding_tol: f64) -> Self {
        RepresenterBuilder { kernel, embedding_tol, embeddings: Vec::new() }
    }

    fn embedding_for(&mut self, density: &DensitySpec) -> Result<Arc<EmbeddingResult>> {
        if let Some((_, emb)) = self.embeddings.iter().find(|(d, _)| d == density) {
            return Ok(emb.clone());
        }
        let emb = mean_embedding(self.kernel, density, self.embedding_tol)?;
        self.embeddings.push((density.clone(), emb.clone()));
        Ok(emb)
    }

    fn representer(&mut self, op: &ObservationOp) -> Result<Expansion> {
        match op {
            ObservationOp::Value { x } => {
                Expansion::new(self.kernel.clone(), vec![(1.0, Atom::Value(*x))])
            }
            ObservationOp::Operator { op, x } => op.representer(self.kernel, *x),
            ObservationOp::Derivative { x } => {
                Expansion::new(self.kernel.clone(), vec![(1.0, Atom::Deriv(*x))])
            }
            ObservationOp::Expectation { density } => {
                let emb = self.embedding_for(density)?;
                Expansion::new(self.kernel.clone(), vec![(1.0, Atom::Embed(emb))])
            }
        }
    }
}

/// G[i][j] = ⟨representer_i, representer_j⟩ over the exact atom algebra.
/// The upper triangle is computed and mirrored.
pub fn assemble_gram(
    observations: &[Observation],
    kernel: &KernelSpec,
    opts: &FitOptions,
) -> Result<DMatrix<f64>> {
    let mut builder = RepresenterBuilder::new(kernel, opts.embedding_tol);
    let reps: Vec<Expansion> = observations
        .iter()
        .map(|o| builder.representer(&o.op))
        .collect::<Result<_>>()?;
    gram_of(&reps)
}

fn gram_of(reps: &[Expansion]) -> Result<DMatrix<f64>> {
    let n = reps.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = reps[i].inner(&reps[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// A fitted model: coefficients over the observation representers.
#[derive(Debug)]
pub struct Model {
    kernel: KernelSpec,
    lambda: f64,
    observations: Vec<Observation>,
    representers: Vec<Expansion>,
    coefficients: Vec<f64>,
    gram: DMatrix<f64>,
    condition_estimate: f64,
    jitter_used: f64,
    embeddings: Vec<(DensitySpec, Arc<EmbeddingResult>)>,
    embedding_tol: f64,
}

impl Model {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Ratio of extreme |eigenvalues| of G + λI.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// Diagonal jitter that was needed to factorize, 0 in the clean case.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// The fitted function h = Σ cⱼ·representerⱼ as an expansion.
    pub fn fitted_expansion(&self) -> Result<Expansion> {
        let mut h = Expansion::new(self.kernel.clone(), vec![])?;
        for (c, rep) in self.coefficients.iter().zip(&self.representers) {
            h = Expansion::combine(1.0, &h, *c, rep)?;
        }
        Ok(h)
    }

    /// Applies a query functional to the fitted function:
    /// Σⱼ cⱼ ⟨representer_query, representerⱼ⟩.
    pub fn predict(&self, query: &ObservationOp) -> Result<f64> {
        let mut builder = RepresenterBuilder::new(&self.kernel, self.embedding_tol);
        builder.embeddings = self.embeddings.clone();
        let q = builder.representer(query)?;
        let mut sum = KahanSum::new();
        for (c, rep) in self.coefficients.iter().zip(&self.representers) {
            sum.add(c * q.inner(rep)?);
        }
        Ok(sum.value())
    }

    /// Residuals Lᵢh(xᵢ) − yᵢ at the training functionals.
    pub fn training_residuals(&self) -> Result<Vec<f64>> {
        self.observations
            .iter()
            .map(|o| Ok(self.predict(&o.op)? - o.y))
            .collect()
    }

    /// The penalized objective ‖Gc − y‖² + λ cᵀGc at arbitrary
    /// coefficients, for optimality checks.
    pub fn penalized_objective(&self, coefficients: &[f64]) -> f64 {
        let c = DVector::from_column_slice(coefficients);
        let y = DVector::from_iterator(
            self.observations.len(),
            self.observations.iter().map(|o| o.y),
        );
        let gc = &self.gram * &c;
        let resid = &gc - &y;
        resid.dot(&resid) + self.lambda * c.dot(&gc)
    }
}

/// Solves min_h Σ (Lᵢh(xᵢ) − yᵢ)² + λ‖h‖² over the representer span:
/// (G + λI)c = y by Cholesky, with a small diagonal jitter ladder before
/// giving up. λ = 0 is guarded by a condition estimate.
pub fn fit(
    observations: &[Observation],
    kernel: &KernelSpec,
    lambda: f64,
    opts: &FitOptions,
) -> Result<Model> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations to fit".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty must be finite and nonnegative, got {lambda}"
        )));
    }
    let mut builder = RepresenterBuilder::new(kernel, opts.embedding_tol);
    let representers: Vec<Expansion> = observations
        .iter()
        .map(|o| builder.representer(&o.op))
        .collect::<Result<_>>()?;
    let gram = gram_of(&representers)?;
    let n = observations.len();

    let regularized = {
        let mut g = gram.clone();
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        g
    };
    let eigen = regularized.clone().symmetric_eigen();
    let max_abs = eigen.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min_abs = eigen
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    let condition_estimate = if min_abs > 0.0 { max_abs / min_abs } else { f64::INFINITY };
    if lambda == 0.0 && condition_estimate > opts.condition_cap {
        return Err(Error::SingularSystem(format!(
            "interpolation (λ = 0) with Gram condition estimate {condition_estimate:.3e} beyond cap {:.1e}",
            opts.condition_cap
        )));
    }

    let y = DVector::from_iterator(n, observations.iter().map(|o| o.y));
    let mut solution = None;
    let mut jitter_used = 0.0;
    for jitter in JITTER_LADDER {
        let mut g = regularized.clone();
        if jitter > 0.0 {
            for i in 0..n {
                g[(i, i)] += jitter;
            }
        }
        if let Some(chol) = g.cholesky() {
            solution = Some(chol.solve(&y));
            jitter_used = jitter;
            break;
        }
    }
    let c = solution.ok_or_else(|| {
        Error::SingularSystem(format!(
            "Cholesky failed for all jitters up to {:.1e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        ))
    })?;

    Ok(Model {
        kernel: kernel.clone(),
        lambda,
        observations: observations.to_vec(),
        representers,
        coefficients: c.iter().copied().collect(),
        gram,
        condition_estimate,
        jitter_used,
        embeddings: builder.embeddings,
        embedding_tol: opts.embedding_tol,
    })
}

/// One observation or query in a problem file.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalDoc {
    #[serde(rename = "type")]
    pub kind: String,
    pub x: Option<f64>,
    pub operator: Option<String>,
    pub density: Option<String>,
    pub y: Option<f64>,
}

/// Problem file: kernel and penalty plus observation and query lists.
/// Unknown keys anywhere are a hard error.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kernel: String,
    pub lambda: f64,
    pub observations: Vec<FunctionalDoc>,
    #[serde(default)]
    pub queries: Vec<FunctionalDoc>,
}

impl FunctionalDoc {
    fn to_op(&self) -> Result<ObservationOp> {
        let need_x = || {
            self.x.ok_or_else(|| {
                Error::InvalidArgument(format!("`{}` observation needs `x`", self.kind))
            })
        };
        match self.kind.as_str() {
            "value" => Ok(ObservationOp::Value { x: need_x()? }),
            "derivative" => Ok(ObservationOp::Derivative { x: need_x()? }),
            "operator" => {
                let spec = self.operator.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("`operator` observation needs `operator`".into())
                })?;
                Ok(ObservationOp::Operator { op: spec.parse()?, x: need_x()? })
            }
            "expectation" => {
                let spec = self.density.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("`expectation` observation needs `density`".into())
                })?;
                Ok(ObservationOp::Expectation { density: spec.parse()? })
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown observation type `{other}`"
            ))),
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<ProblemFile> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("problem file: {e}")))
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        self.kernel.parse()
    }

    pub fn observations(&self) -> Result<Vec<Observation>> {
        self.observations
            .iter()
            .map(|doc| {
                let y = doc.y.ok_or_else(|| {
                    Error::InvalidArgument("observations need a `y` value".into())
                })?;
                Ok(Observation { op: doc.to_op()?, y })
            })
            .collect()
    }

    pub fn queries(&self) -> Result<Vec<ObservationOp>> {
        self.queries.iter().map(|doc| doc.to_op()).collect()
    }
}
