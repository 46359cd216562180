//! Randomized law checking. Each block states an algebraic identity the
//! public API must satisfy and lets proptest hunt for a counterexample.
//! Case counts are kept modest because composition and logarithms are not
//! cheap at order 5.

use num_complex::Complex64;
use proptest::prelude::*;

use ffg::fixtures::{random_bl, random_ss};
use ffg::flows::{exp_flow, log_transform};
use ffg::resonance::find_resonances;
use ffg::textio::{emit_map, parse_map, to_transformation};
use ffg::transform::random_invertible;
use ffg::{Exponent, GroupTag, Series, Tolerance, Transformation};

fn tol() -> Tolerance {
    Tolerance::new(1e-9)
}

/// Comparison threshold for two floating routes to the same series. The
/// normalization cut alone can separate them by ~1e-9 relative to the
/// largest coefficient, so anything below 1e-8 * scale is "equal".
fn close(scale: f64) -> f64 {
    1e-8 * (1.0 + scale)
}

fn coeff() -> impl Strategy<Value = Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
}

/// A series over `n` variables at the given order, with every monomial
/// coefficient either absent or drawn from the unit box.
fn series(n: usize, order: u32) -> impl Strategy<Value = Series> {
    let exps: Vec<Exponent> = (0..=order)
        .flat_map(|d| Exponent::enumerate_degree(n, d))
        .collect();
    let len = exps.len();
    proptest::collection::vec(proptest::option::of(coeff()), len).prop_map(move |cs| {
        let terms = exps
            .iter()
            .cloned()
            .zip(cs)
            .filter_map(|(e, c)| c.map(|c| (e, c)));
        Series::from_terms(n, order, terms).expect("terms fit the declared shape")
    })
}

/// Series with zero constant term, usable as a substitution target.
fn pointed_series(n: usize, order: u32) -> impl Strategy<Value = Series> {
    let exps: Vec<Exponent> = (1..=order)
        .flat_map(|d| Exponent::enumerate_degree(n, d))
        .collect();
    let len = exps.len();
    proptest::collection::vec(proptest::option::of(coeff()), len).prop_map(move |cs| {
        let terms = exps
            .iter()
            .cloned()
            .zip(cs)
            .filter_map(|(e, c)| c.map(|c| (e, c)));
        Series::from_terms(n, order, terms).expect("terms fit the declared shape")
    })
}

fn series_diff(a: &Series, b: &Series) -> f64 {
    a.sub(b).expect("same ring").max_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn addition_commutes_and_associates(
        f in series(2, 4), g in series(2, 4), h in series(2, 4)
    ) {
        let fg = f.add(&g).unwrap();
        let gf = g.add(&f).unwrap();
        prop_assert!(series_diff(&fg, &gf) == 0.0);

        let left = fg.add(&h).unwrap();
        let right = f.add(&g.add(&h).unwrap()).unwrap();
        let scale = f.max_norm() + g.max_norm() + h.max_norm();
        prop_assert!(series_diff(&left, &right) <= close(scale));
    }

    #[test]
    fn multiplication_commutes_and_distributes(
        f in series(2, 4), g in series(2, 4), h in series(2, 4)
    ) {
        let fg = f.mul(&g).unwrap();
        let gf = g.mul(&f).unwrap();
        let scale = f.max_norm() * g.max_norm();
        prop_assert!(series_diff(&fg, &gf) <= close(scale));

        let left = f.mul(&g.add(&h).unwrap()).unwrap();
        let right = fg.add(&f.mul(&h).unwrap()).unwrap();
        let scale = f.max_norm() * (g.max_norm() + h.max_norm());
        prop_assert!(series_diff(&left, &right) <= close(scale));
    }

    #[test]
    fn multiplication_associates(
        f in series(2, 3), g in series(2, 3), h in series(2, 3)
    ) {
        let left = f.mul(&g).unwrap().mul(&h).unwrap();
        let right = f.mul(&g.mul(&h).unwrap()).unwrap();
        let scale = f.max_norm() * g.max_norm() * h.max_norm();
        prop_assert!(series_diff(&left, &right) <= close(scale));
    }

    #[test]
    fn one_is_the_multiplicative_identity(f in series(3, 4)) {
        let one = Series::constant(3, 4, Complex64::new(1.0, 0.0));
        prop_assert!(series_diff(&f.mul(&one).unwrap(), &f) == 0.0);
        prop_assert!(series_diff(&one.mul(&f).unwrap(), &f) == 0.0);
    }

    #[test]
    fn pow_adds_exponents(f in series(2, 4), a in 0u32..4, b in 0u32..4) {
        let left = f.pow(a + b);
        let right = f.pow(a).mul(&f.pow(b)).unwrap();
        let scale = f.max_norm().max(1.0).powi((a + b) as i32);
        prop_assert!(series_diff(&left, &right) <= close(scale));
    }

    #[test]
    fn truncation_commutes_with_multiplication(
        f in series(2, 5), g in series(2, 5), k in 1u32..5
    ) {
        let whole = f.mul(&g).unwrap().truncated(k).unwrap();
        let cut = f.truncated(k).unwrap().mul(&g.truncated(k).unwrap()).unwrap();
        let scale = f.max_norm() * g.max_norm();
        prop_assert!(series_diff(&whole, &cut) <= close(scale));
    }

    #[test]
    fn substitution_is_a_ring_homomorphism(
        f in series(2, 4), g in series(2, 4),
        u in pointed_series(2, 4), v in pointed_series(2, 4)
    ) {
        let target = [u, v];
        let left = f.mul(&g).unwrap().substitute(&target).unwrap();
        let right = f
            .substitute(&target)
            .unwrap()
            .mul(&g.substitute(&target).unwrap())
            .unwrap();
        let t = 1.0 + target[0].max_norm().max(target[1].max_norm());
        let scale = f.max_norm() * g.max_norm() * t.powi(8);
        prop_assert!(series_diff(&left, &right) <= close(scale));

        let sum = f.add(&g).unwrap().substitute(&target).unwrap();
        let parts = f
            .substitute(&target)
            .unwrap()
            .add(&g.substitute(&target).unwrap())
            .unwrap();
        prop_assert!(series_diff(&sum, &parts) <= close(scale));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composition_associates(seed in 0u64..10_000, n in 1usize..4) {
        let u = random_invertible(n, 5, seed);
        let v = random_invertible(n, 5, seed.wrapping_add(77));
        let w = random_invertible(n, 5, seed.wrapping_add(154));
        let left = u.compose(&v).unwrap().compose(&w).unwrap();
        let right = u.compose(&v.compose(&w).unwrap()).unwrap();
        let scale = left.max_norm().max(right.max_norm());
        prop_assert!(left.distance(&right).unwrap() <= close(scale));
    }

    #[test]
    fn identity_is_neutral(seed in 0u64..10_000, n in 1usize..4) {
        let u = random_invertible(n, 5, seed);
        let id = Transformation::identity(n, 5);
        prop_assert!(u.compose(&id).unwrap().distance(&u).unwrap() == 0.0);
        prop_assert!(id.compose(&u).unwrap().distance(&u).unwrap() == 0.0);
    }

    #[test]
    fn inverse_cancels_on_both_sides(seed in 0u64..10_000, n in 1usize..4) {
        let u = random_invertible(n, 5, seed);
        let inv = u.inverse(&tol()).unwrap();
        let id = Transformation::identity(n, 5);
        let scale = u.max_norm() * inv.max_norm();
        prop_assert!(u.compose(&inv).unwrap().distance(&id).unwrap() <= close(scale));
        prop_assert!(inv.compose(&u).unwrap().distance(&id).unwrap() <= close(scale));
    }

    #[test]
    fn composition_truncates_consistently(
        seed in 0u64..10_000, n in 1usize..3, k in 1u32..5
    ) {
        let u = random_invertible(n, 5, seed);
        let v = random_invertible(n, 5, seed.wrapping_add(31));
        let whole = u.compose(&v).unwrap().truncated(k).unwrap();
        let cut = u
            .truncated(k)
            .unwrap()
            .compose(&v.truncated(k).unwrap())
            .unwrap();
        let scale = whole.max_norm();
        prop_assert!(whole.distance(&cut).unwrap() <= close(scale));
    }

    #[test]
    fn linear_part_of_composition_is_the_matrix_product(
        seed in 0u64..10_000, n in 1usize..4
    ) {
        let u = random_invertible(n, 4, seed);
        let v = random_invertible(n, 4, seed.wrapping_add(13));
        let uv = u.compose(&v).unwrap();
        let prod = u.linear_part().mul(v.linear_part());
        let gap = uv.linear_part().sub(&prod).max_abs();
        prop_assert!(gap <= close(prod.max_abs()));
    }

    #[test]
    fn volume_preserving_maps_stay_closed(seed in 0u64..5_000, n in 2usize..4) {
        let u = random_ss(n, 4, seed);
        let v = random_ss(n, 4, seed.wrapping_add(401));
        // det(jacobian) - 1 carries normalization noise amplified through
        // the jacobian's cofactors (measured worst case over this whole
        // seed range: 3.9e-8 relative), so membership is judged relative
        // to the coefficient scale
        let member = |w: &Transformation| {
            let cut = Tolerance::new(1e-7 * (1.0 + w.max_norm()));
            w.classify(&cut).unwrap().contains(&GroupTag::SS)
        };
        prop_assert!(member(&u));
        prop_assert!(member(&v));
        prop_assert!(member(&u.compose(&v).unwrap()));
    }

    #[test]
    fn triangular_maps_stay_closed(seed in 0u64..5_000, n in 2usize..4) {
        let u = random_bl(n, 4, seed);
        let v = random_bl(n, 4, seed.wrapping_add(907));
        let t = tol();
        prop_assert!(u.classify(&t).unwrap().contains(&GroupTag::BL));
        prop_assert!(u.compose(&v).unwrap().classify(&t).unwrap().contains(&GroupTag::BL));
        prop_assert!(u.inverse(&t).unwrap().classify(&t).unwrap().contains(&GroupTag::BL));
    }

    #[test]
    fn text_round_trip_is_byte_exact(seed in 0u64..100_000, n in 1usize..4) {
        let u = random_invertible(n, 4, seed);
        let text = emit_map(&u);
        let doc = parse_map(&text).unwrap();
        let back = to_transformation(&doc).unwrap();
        prop_assert_eq!(emit_map(&back), text);
    }

    #[test]
    fn resonance_reports_are_deterministic(
        res in prop::collection::vec((0.3f64..2.0, -3.0f64..3.0), 2..4)
    ) {
        let values: Vec<Complex64> = res
            .iter()
            .map(|&(r, a)| Complex64::from_polar(r, a))
            .collect();
        let first = find_resonances(&values, 5, 1e-9).unwrap();
        let second = find_resonances(&values, 5, 1e-9).unwrap();
        prop_assert_eq!(&first.witnesses, &second.witnesses);
        let a = serde_json::to_string(&first).unwrap();
        let b = serde_json::to_string(&second).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The parser must reject garbage with an error, never a panic.
    #[test]
    fn parser_never_panics(text in "[ -~\\n\\t]{0,80}") {
        let _ = parse_map(&text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Triangular maps always have a logarithm, and flowing it for unit
    /// time recovers the map.
    #[test]
    fn log_then_exp_recovers_triangular_maps(seed in 0u64..1_000, n in 2usize..4) {
        let u = random_bl(n, 4, seed);
        let x = log_transform(&u, &tol()).unwrap();
        let back = exp_flow(&x, 1.0).unwrap();
        let scale = u.max_norm();
        prop_assert!(u.distance(&back).unwrap() <= close(scale));
    }
}
