//! Property tests for the expansion algebra and operator representers.

use kernelrep::expansions::{Atom, Expansion};
use kernelrep::kernels::KernelSpec;
use kernelrep::operators::{gram_entry, MapSpec, OperatorSpec};
use proptest::prelude::*;

fn gauss1() -> KernelSpec {
    KernelSpec::Gaussian { lengthscale: 1.0 }
}

fn atom_strategy() -> impl Strategy<Value = Atom> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(Atom::Value),
        (-2.0..2.0f64).prop_map(Atom::Deriv),
    ]
}

fn expansion_strategy() -> impl Strategy<Value = Expansion> {
    prop::collection::vec(((-2.0..2.0f64), atom_strategy()), 1..5)
        .prop_map(|terms| Expansion::new(gauss1(), terms).unwrap())
}

fn map_strategy() -> impl Strategy<Value = MapSpec> {
    prop_oneof![
        Just(MapSpec::Identity),
        (-1.0..1.0f64).prop_map(MapSpec::Shift),
        (0.2..1.5f64).prop_map(MapSpec::Scale),
        ((-1.0..1.0f64), (-1.0..1.0f64)).prop_map(|(a, b)| MapSpec::Affine { a, b }),
    ]
}

fn operator_strategy() -> impl Strategy<Value = OperatorSpec> {
    prop::collection::vec(((-3.0..3.0f64), map_strategy()), 1..4)
        .prop_map(|terms| OperatorSpec::new(terms).unwrap())
}

proptest! {
    #[test]
    fn inner_product_is_symmetric(e1 in expansion_strategy(), e2 in expansion_strategy()) {
        let a = e1.inner(&e2).unwrap();
        let b = e2.inner(&e1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn inner_product_is_bilinear(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        e1 in expansion_strategy(),
        e2 in expansion_strategy(),
        e3 in expansion_strategy(),
    ) {
        let lhs = Expansion::combine(a, &e1, b, &e2).unwrap().inner(&e3).unwrap();
        let rhs = a * e1.inner(&e3).unwrap() + b * e2.inner(&e3).unwrap();
        prop_assert!(
            (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())),
            "bilinearity: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn cauchy_schwarz_holds(e1 in expansion_strategy(), e2 in expansion_strategy()) {
        let cross = e1.inner(&e2).unwrap();
        let n1 = e1.norm2().unwrap();
        let n2 = e2.norm2().unwrap();
        prop_assert!(cross * cross <= n1 * n2 * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn evaluation_is_inner_product_with_section(
        f in expansion_strategy(),
        x in -2.0..2.0f64,
    ) {
        let section = Expansion::new(gauss1(), vec![(1.0, Atom::Value(x))]).unwrap();
        let via_inner = f.inner(&section).unwrap();
        let direct = f.eval(x).unwrap();
        prop_assert!((via_inner - direct).abs() <= 1e-14 * (1.0 + direct.abs()));
    }

    #[test]
    fn derivative_section_reproduces_slope(
        terms in prop::collection::vec(((-2.0..2.0f64), (-2.0..2.0f64)), 1..5),
        x in -2.0..2.0f64,
    ) {
        // f a value-only expansion: pairing with the derivative section
        // must equal the analytic f'(x) and the central difference
        let k = gauss1();
        let f = Expansion::new(
            k.clone(),
            terms.iter().map(|&(w, c)| (w, Atom::Value(c))).collect(),
        ).unwrap();
        let deriv_section = Expansion::new(k.clone(), vec![(1.0, Atom::Deriv(x))]).unwrap();
        let via_inner = f.inner(&deriv_section).unwrap();
        let analytic: f64 = terms.iter().map(|&(w, c)| w * k.d2(c, x).unwrap()).sum();
        prop_assert!(
            (via_inner - analytic).abs() <= 1e-10 * (1.0 + analytic.abs()),
            "{via_inner} vs analytic {analytic}"
        );
        let h = 1e-5;
        let fd = (f.eval(x + h).unwrap() - f.eval(x - h).unwrap()) / (2.0 * h);
        prop_assert!((via_inner - fd).abs() <= 1e-7 * (1.0 + fd.abs()));
    }

    #[test]
    fn gram_entry_factorizes_through_representers(
        op_a in operator_strategy(),
        op_b in operator_strategy(),
        x in -2.0..2.0f64,
        y in -2.0..2.0f64,
    ) {
        // two independent code paths: direct double sum over the kernel
        // vs the atom algebra of the two representers
        let k = gauss1();
        let direct = gram_entry(&op_a, &op_b, &k, x, y).unwrap();
        let via_atoms = op_a.representer(&k, x).unwrap()
            .inner(&op_b.representer(&k, y).unwrap()).unwrap();
        prop_assert!(
            (direct - via_atoms).abs() <= 1e-12 * (1.0 + direct.abs()),
            "{direct} vs {via_atoms}"
        );
    }

    #[test]
    fn representer_duality(
        op in operator_strategy(),
        terms in prop::collection::vec(((-2.0..2.0f64), (-2.0..2.0f64)), 1..4),
        x in -2.0..2.0f64,
    ) {
        // Lf(x) = <f, representer(L, x)> for value-only f
        let k = gauss1();
        let f = Expansion::new(
            k.clone(),
            terms.iter().map(|&(w, c)| (w, Atom::Value(c))).collect(),
        ).unwrap();
        let applied = op.apply_expansion(&f, x).unwrap();
        let via_rep = f.inner(&op.representer(&k, x).unwrap()).unwrap();
        prop_assert!(
            (applied - via_rep).abs() <= 1e-10 * (1.0 + applied.abs()),
            "{applied} vs {via_rep}"
        );
    }

    #[test]
    fn norm_is_nonnegative_after_clamp(e in expansion_strategy()) {
        prop_assert!(e.norm2().unwrap() >= 0.0);
    }
}
