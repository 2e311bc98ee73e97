use proptest::prelude::*;
use wfr_split::flows::WfrContext;
use wfr_split::logconcavity::{
    fr_alpha, gaussian_constants, riccati_check, true_alpha_gaussian, w_horizon, w_riccati_check, wfr_alpha,
    ConvexityConstants, WfrAlphaCurve,
};
use wfr_split::GaussianDist;

fn scalar_constants(c_pi: f64, c0: f64, delta: f64) -> Option<ConvexityConstants> {
    gaussian_constants(&GaussianDist::scalar(0.0, c_pi).unwrap(), &GaussianDist::scalar(0.0, c0).unwrap(), delta).ok()
}

fn times(t_max: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| t_max * i as f64 / (n - 1) as f64)
}

proptest! {
    #[test]
    fn fr_alpha_moves_monotonically_between_endpoints(c_pi in 0.2..50.0f64, c0 in 0.05..5.0f64, delta in 0.1..0.9f64) {
        let c = scalar_constants(c_pi, c0, delta);
        prop_assume!(c.is_some());
        let c = c.unwrap();
        let (lo, hi) = (c.alpha_0.min(c.alpha_pi), c.alpha_0.max(c.alpha_pi));
        let towards = (c.alpha_pi - c.alpha_0).signum();
        let mut prev = fr_alpha(&c, 0.0);
        for t in times(30.0, 300).skip(1) {
            let a = fr_alpha(&c, t);
            prop_assert!(a >= lo * (1.0 - 1e-14) && a <= hi * (1.0 + 1e-14));
            prop_assert!(towards * (a - prev) >= -1e-15);
            prev = a;
        }
    }

    #[test]
    fn wfr_alpha_approaches_limit_without_crossing(c_pi in 2.05..200.0f64, c0 in 0.05..1.0f64, delta in 0.1..0.9f64) {
        let c = scalar_constants(c_pi, c0, delta);
        prop_assume!(c.is_some());
        let curve = WfrAlphaCurve::new(&c.unwrap());
        prop_assume!(curve.is_ok());
        let curve = curve.unwrap();
        let lim = curve.limit();
        let side = (wfr_alpha(&curve, 0.0) - lim).signum();
        let mut prev = wfr_alpha(&curve, 0.0);
        for t in times(40.0, 400).skip(1) {
            let a = wfr_alpha(&curve, t);
            prop_assert!(side * (a - lim) >= -1e-12);
            prop_assert!(side * (prev - a) >= -1e-12);
            prev = a;
        }
    }

    #[test]
    fn curves_solve_their_riccati_equations(c_pi in 2.05..200.0f64, c0 in 0.05..1.0f64) {
        let c = scalar_constants(c_pi, c0, 0.5);
        prop_assume!(c.is_some());
        let c = c.unwrap();
        if let Ok(curve) = WfrAlphaCurve::new(&c) {
            prop_assert!(riccati_check(&curve, 20.0, 1e-4).unwrap() < 1e-8);
        }
        let h = w_horizon(&c).unwrap();
        let t_end = if h.t_star.is_finite() { h.t_star.min(20.0) } else { 20.0 };
        prop_assert!(w_riccati_check(&h, t_end, 1e-4).unwrap() < 1e-8);
    }
}

#[test]
fn admissibility_threshold_is_c_pi_two() {
    for c_pi in [1.5, 1.99, 2.0, 2.01, 2.1, 5.0, 100.0] {
        let c = scalar_constants(c_pi, 1.0, 0.5).unwrap();
        assert_eq!(c.theorem_admissible, c_pi > 2.0, "C_pi = {c_pi}");
        assert!((c.b * c.b - 1.0 / (c_pi * c_pi)).abs() < 1e-15);
    }
}

#[test]
fn scalar_constants_by_hand() {
    let c = scalar_constants(5.0, 1.0, 0.5).unwrap();
    assert!((c.alpha_pi - 0.2).abs() < 1e-15);
    assert!((c.alpha_0 - 1.0).abs() < 1e-15);
    assert!((c.alpha_d - (1.0 - 0.75 * 0.2)).abs() < 1e-15);
    assert!((c.alpha_h - (2.0 * 0.04 + 0.2)).abs() < 1e-15);
    assert!((c.c0 - (c.alpha_d + 0.25 * 0.2)).abs() < 1e-15);
    assert!((c.lemma_b() - 0.08f64.sqrt()).abs() < 1e-15);
}

#[test]
fn theorem_curve_agrees_with_truth_at_the_ends() {
    for c_pi in [100.0, 5.0, 2.1] {
        let ctx = WfrContext::new(GaussianDist::scalar(0.0, c_pi).unwrap()).unwrap();
        let init = GaussianDist::scalar(0.0, 1.0).unwrap();
        let curve = WfrAlphaCurve::new(&scalar_constants(c_pi, 1.0, 0.5).unwrap()).unwrap();
        let start = true_alpha_gaussian(&ctx, &init, 0.0).unwrap();
        assert!((wfr_alpha(&curve, 0.0) - start).abs() < 1e-12);
        assert!(curve.limit() < 1.0 / c_pi);
        assert!(wfr_alpha(&curve, 60.0) < true_alpha_gaussian(&ctx, &init, 60.0).unwrap());
    }
}

#[test]
fn true_alpha_decreases_to_target_precision() {
    let ctx = WfrContext::new(GaussianDist::scalar(0.0, 100.0).unwrap()).unwrap();
    let init = GaussianDist::scalar(0.0, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for t in times(20.0, 201) {
        let a = true_alpha_gaussian(&ctx, &init, t).unwrap();
        assert!(a <= prev && a >= 0.01 * (1.0 - 1e-12));
        prev = a;
    }
    assert!((prev - 0.01).abs() < 1e-6);
}

