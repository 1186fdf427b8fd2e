//! Cross-module consistency: convergence analysis against exact
//! representers, quadrature sequences against embeddings, and the two
//! routes through every reproducing identity.

use kernelrep::embedding::{
    abs_condition, expectation, improper, mean_embedding, standard_variation, DensitySpec,
    ExhaustionSpec, ImproperOptions,
};
use kernelrep::expansions::{Atom, Expansion};
use kernelrep::kernels::KernelSpec;
use kernelrep::operators::{
    exact_representer, loeve_table, ExactFamily, LoeveOptions, OperatorSequence,
};
use kernelrep::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss1() -> KernelSpec {
    KernelSpec::Gaussian { lengthscale: 1.0 }
}

// high-precision value of the 2-D integral of exp(-(x-y)^2) over the unit
// square: sqrt(pi)*erf(1) + exp(-1) - 1, cross-checked by two oracles
const UNIT_SQUARE_GAUSSIAN: f64 = 0.86152770679629637;

#[test]
fn norm_identity_for_derivative_sequence() {
    // the table limit at (x,x) equals the squared norm of the exact
    // derivative representer — both are the cross derivative on the
    // diagonal, but computed along different routes
    let k = gauss1();
    let seq = OperatorSequence::DerivativeDiff { base: 2.0 };
    for x in [-1.3, 0.0, 0.8] {
        let report = loeve_table(&seq, &k, x, 4, 12, &LoeveOptions::default()).unwrap();
        let limit = report.verdict.limit().expect("converges on the gaussian");
        let exact = exact_representer(&ExactFamily::Derivative { x }, &k).unwrap();
        let norm2 = exact.norm2().unwrap();
        assert_eq!(norm2, 2.0);
        assert!((limit - norm2).abs() <= 1e-3, "x={x}: {limit} vs {norm2}");
    }
}

#[test]
fn representers_converge_pointwise_to_the_exact_one() {
    // convergence in the Hilbert space implies pointwise convergence;
    // the evaluation gap must shrink with n once the verdict converges
    let k = gauss1();
    let seq = OperatorSequence::DerivativeDiff { base: 2.0 };
    let x = 0.3;
    let report = loeve_table(&seq, &k, x, 4, 12, &LoeveOptions::default()).unwrap();
    assert!(report.verdict.is_converged());
    let exact = exact_representer(&ExactFamily::Derivative { x }, &k).unwrap();
    for y in [-1.0, 0.0, 0.5, 2.0] {
        let target = exact.eval(y).unwrap();
        let gap = |n: u32| {
            let rep = seq.operator_at(n).unwrap().representer(&k, x).unwrap();
            (rep.eval(y).unwrap() - target).abs()
        };
        assert!(gap(12) < gap(4), "no decay at y={y}");
        assert!(gap(12) <= 1e-3, "gap at y={y}: {}", gap(12));
    }
}

#[test]
fn averaging_sequence_converges_to_double_integral() {
    // u_{n,m} -> ∫∫ K(sx, tx) ds dt over the unit square; at x = 1 on the
    // unit gaussian that is the erf-form constant
    let report = loeve_table(
        &OperatorSequence::Averaging,
        &gauss1(),
        1.0,
        16,
        256,
        &LoeveOptions::default(),
    )
    .unwrap();
    let limit = report.verdict.limit().expect("averaging converges");
    assert!(
        (limit - UNIT_SQUARE_GAUSSIAN).abs() <= 1e-5,
        "limit {limit} vs oracle {UNIT_SQUARE_GAUSSIAN}"
    );
    // the report carries the iterated-limit diagnostics
    assert_eq!(report.row_then_column.len(), report.table.len());
    assert_eq!(report.column_then_row.len(), report.table.len());
    assert!(report.quadrant_oscillations[2] <= report.quadrant_oscillations[0]);
    // symmetric sequence and kernel: symmetric table
    assert!((report.table[3][19] - report.table[19][3]).abs() <= 1e-10);
}

#[test]
fn quadrature_sequence_matches_embedding_norm() {
    // the Riemann-sum operator sequence over uniform(0,1) has table limit
    // ∬ K p p — the embedding's squared norm, computed independently
    let k = gauss1();
    let p = DensitySpec::uniform(0.0, 1.0).unwrap();
    let seq = OperatorSequence::RiemannQuadrature { density: p.clone(), window: (0.0, 1.0) };
    let report = loeve_table(&seq, &k, 0.0, 16, 128, &LoeveOptions::default()).unwrap();
    let limit = report.verdict.limit().expect("quadrature sums converge");
    let emb = mean_embedding(&k, &p, 1e-8).unwrap();
    assert!(
        (limit - emb.norm2()).abs() <= 5e-3,
        "table limit {limit} vs embedding norm {}",
        emb.norm2()
    );
    assert!((emb.norm2() - UNIT_SQUARE_GAUSSIAN).abs() <= 1e-6);
}

#[test]
fn exhaustion_choice_does_not_move_converged_limits() {
    let tol = 1e-8;
    let cases: Vec<(Box<dyn Fn(f64) -> f64>, (f64, f64))> = vec![
        (Box::new(|x: f64| x.powi(-2)), (1.0, f64::INFINITY)),
        (Box::new(|x: f64| (-x * x).exp()), (f64::NEG_INFINITY, f64::INFINITY)),
    ];
    for (f, region) in cases {
        let a = improper(
            &f,
            region,
            &ExhaustionSpec::new(1.0, 2.0, 60).unwrap(),
            &ImproperOptions::with_tol(tol),
        )
        .unwrap()
        .limit()
        .expect("converges");
        let b = improper(
            &f,
            region,
            &ExhaustionSpec::new(1.0, 1.5, 120).unwrap(),
            &ImproperOptions::with_tol(tol),
        )
        .unwrap()
        .limit()
        .expect("converges");
        assert!((a - b).abs() <= 3.0 * tol, "{a} vs {b}");
    }
}

#[test]
fn fubini_route_matches_norm() {
    // ⟨μ_p, μ_p⟩ by the 2-D integral vs the iterated route
    // ∫ μ_p(x) p(x) dx
    let tol = 1e-7;
    let k = gauss1();
    let p = DensitySpec::uniform(0.0, 1.0).unwrap();
    let emb = mean_embedding(&k, &p, tol).unwrap();
    let support = p.support();
    let iterated = improper(
        |x| emb.mu(x).unwrap() * p.pdf(x),
        (support.lo, support.hi),
        &ExhaustionSpec::default(),
        &ImproperOptions::with_tol(tol),
    )
    .unwrap()
    .limit()
    .expect("iterated route converges");
    assert!(
        (emb.norm2() - iterated).abs() <= 3.0 * tol,
        "2-D route {} vs iterated {iterated}",
        emb.norm2()
    );
}

#[test]
fn expectation_agrees_with_direct_quadrature() {
    // both sides of the embedding reproducing identity, computed
    // independently, for random value-only expansions
    let tol = 1e-8;
    let k = gauss1();
    let p = DensitySpec::uniform(0.0, 1.0).unwrap();
    let emb = mean_embedding(&k, &p, tol).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let terms: Vec<(f64, Atom)> = (0..rng.gen_range(1..=4))
            .map(|_| {
                (
                    rng.gen_range(-1.5..1.5),
                    Atom::Value(rng.gen_range(-1.0..2.0)),
                )
            })
            .collect();
        let f = Expansion::new(k.clone(), terms).unwrap();
        let via_embedding = expectation(&f, &emb).unwrap();
        let direct = improper(
            |x| f.eval(x).unwrap() * p.pdf(x),
            (0.0, 1.0),
            &ExhaustionSpec::default(),
            &ImproperOptions { tol: 1e-10, track_abs: false, ..Default::default() },
        )
        .unwrap()
        .limit()
        .expect("direct route converges");
        assert!(
            (via_embedding - direct).abs() <= 3.0 * tol,
            "reproducing {via_embedding} vs direct {direct}"
        );
    }
}

#[test]
fn standard_variation_dominates_absolute_condition() {
    // when ∫√K(x,x) p converges with value S, the absolute condition is
    // bounded by S²; the converse fails (the scaled gaussian under x⁻²)
    let tol = 1e-7;
    let cases = [
        (gauss1(), DensitySpec::uniform(0.0, 1.0).unwrap()),
        (KernelSpec::Brownian, DensitySpec::uniform(1.0, 2.0).unwrap()),
    ];
    for (k, p) in cases {
        let sv = standard_variation(&k, &p, tol).unwrap();
        let s = sv.limit().expect("standard variation converges here");
        let abs = abs_condition(&k, &p, tol).unwrap();
        let a = abs.limit().expect("absolute condition follows");
        assert!(a <= s * s + 3.0 * tol, "{k:?}: abs {a} vs bound {}", s * s);
    }
    // the separating example: standard variation diverges, absolute holds
    let sv = standard_variation(&KernelSpec::ScaledGaussian, &DensitySpec::inv_square(), 1e-6)
        .unwrap();
    assert_eq!(sv.verdict, Verdict::Diverged);
    let abs = abs_condition(&KernelSpec::ScaledGaussian, &DensitySpec::inv_square(), 1e-6)
        .unwrap();
    assert!(abs.verdict.is_converged());
}

#[test]
fn brownian_embedding_diagnostics_behave() {
    // unbounded kernel with a heavy-tailed density: both diagnostics
    // converge and the embedding is produced without incident
    let k = KernelSpec::Brownian;
    let p = DensitySpec::inv_square();
    let sv = standard_variation(&k, &p, 1e-6).unwrap();
    // ∫ sqrt(x) x^-2 dx over [1, inf) = 2
    assert!((sv.limit().expect("converges") - 2.0).abs() < 1e-5);
    let emb = mean_embedding(&k, &p, 1e-6).unwrap();
    // ∬ min(x,y) x^-2 y^-2 = 2 by direct integration
    assert!((emb.norm2() - 2.0).abs() < 1e-4, "norm2 = {}", emb.norm2());
    assert!(emb.mu(4.0).unwrap() > 0.0);
}
