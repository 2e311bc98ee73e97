mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wfr_split::decay::{
    asymptotic_ratio, bound_min_rule, bound_sharp, classify_definiteness, j_n, jeffreys_bound, jeffreys_bound_fixed,
    kl_ratio, log_phi_j, omega, phi_n, DecaySetup, DefinitenessCase, SchemeKind,
};
use wfr_split::divergences::{jeffreys_gaussian, kl_gaussian};
use wfr_split::flows::{iterate_split, wfr_exact, SplitOrder, WfrContext};
use wfr_split::linalg::{max_eig, min_eig};
use wfr_split::logconcavity::gaussian_constants;
use wfr_split::{GaussianDist, SpdMatrix};

fn kind_point(ctx: &WfrContext, init: &GaussianDist, kind: SchemeKind, gamma: f64, n: usize) -> GaussianDist {
    match kind {
        SchemeKind::Exact => wfr_exact(ctx, init, n as f64 * gamma).unwrap(),
        SchemeKind::SplitWFR => iterate_split(ctx, init, SplitOrder::WThenFR, gamma, n).unwrap().pop().unwrap().dist,
        SchemeKind::SplitFRW => iterate_split(ctx, init, SplitOrder::FRThenW, gamma, n).unwrap().pop().unwrap().dist,
    }
}

fn ten_d() -> DecaySetup {
    let c_pi: Vec<f64> = (1..=10).map(f64::from).collect();
    let c0: Vec<f64> = c_pi.iter().map(|c| c + 1.0).collect();
    let target = GaussianDist::new(DVector::from_element(10, 1.0), SpdMatrix::from_diag(&c_pi).unwrap()).unwrap();
    let init = GaussianDist::new(DVector::zeros(10), SpdMatrix::from_diag(&c0).unwrap()).unwrap();
    DecaySetup::new(WfrContext::new(target).unwrap(), init, 0.7).unwrap()
}

/// Target and an initial law whose covariance exceeds the target's by an SPD gap.
fn positive_gap(max_d: usize) -> impl Strategy<Value = (GaussianDist, GaussianDist)> {
    (1..=max_d).prop_flat_map(|d| (common::gaussian(d), common::spd(d), prop::collection::vec(-2.0..2.0f64, d))).prop_map(
        |(target, gap, m0)| {
            let c0 = SpdMatrix::from_matrix(target.cov().matrix() + gap.matrix()).unwrap();
            (target, GaussianDist::new(DVector::from_vec(m0), c0).unwrap())
        },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn functional_matches_trajectory_kl((target, init) in positive_gap(3), gamma in 0.05..1.0f64) {
        let ctx = WfrContext::new(target).unwrap();
        let setup = DecaySetup::new(ctx.clone(), init.clone(), gamma).unwrap();
        for kind in SchemeKind::ALL {
            for n in [1usize, 2, 5, 13, 30] {
                let kl = kl_gaussian(&kind_point(&ctx, &init, kind, gamma, n), ctx.target()).unwrap();
                let phi = phi_n(&j_n(&omega(kind, &setup), n, &setup).unwrap(), n, &setup).unwrap();
                prop_assert!((phi - kl).abs() <= 1e-9 * kl.max(1.0), "{kind:?} n={n}: {phi} vs {kl}");
                if kl > 1e-6 {
                    let log_phi = log_phi_j(kind, n, &setup).unwrap();
                    prop_assert!((log_phi - kl.ln()).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn positive_gap_keeps_j_positive((target, init) in positive_gap(4), gamma in 0.05..1.0f64) {
        let ctx = WfrContext::new(target).unwrap();
        let lam = ctx.gamma_eigenvalues();
        let spread = lam[lam.len() - 1] - lam[0];
        let setup = DecaySetup::new(ctx, init, gamma).unwrap();
        prop_assert_eq!(classify_definiteness(&setup).case, DefinitenessCase::PositiveGap);
        for kind in SchemeKind::ALL {
            for n in 0..=100 {
                let j = j_n(&omega(kind, &setup), n, &setup).unwrap();
                let (low, high) = (min_eig(&j), max_eig(&j));
                prop_assert!(high > 0.0 || high == 0.0 && low == 0.0);
                if 2.0 * n as f64 * gamma * spread < 25.0 {
                    prop_assert!(low > 0.0);
                } else {
                    prop_assert!(low >= -1e-14 * high);
                }
            }
        }
    }

    #[test]
    fn dominated_negative_gap_keeps_j_negative(c_pi in 5.0..200.0f64, ratio in 0.01..0.5f64, gamma in 0.05..1.0f64) {
        let target = GaussianDist::scalar(1.0, c_pi).unwrap();
        let init = GaussianDist::scalar(0.0, ratio * c_pi).unwrap();
        let setup = DecaySetup::new(WfrContext::new(target).unwrap(), init, gamma).unwrap();
        prop_assume!(classify_definiteness(&setup).case == DefinitenessCase::DominatedNegativeGap);
        for kind in SchemeKind::ALL {
            for n in 0..=100 {
                prop_assert!(max_eig(&j_n(&omega(kind, &setup), n, &setup).unwrap()) < 0.0);
            }
        }
    }

    #[test]
    fn one_d_ratio_ignores_mean_gap_size(c_pi in 0.5..50.0f64, c0 in 0.5..50.0f64, gamma in 0.1..1.0f64) {
        prop_assume!((c0 - c_pi).abs() > 0.1);
        let ctx = common::scalar_ctx(0.0, c_pi);
        let r = |eps: f64| {
            let setup = DecaySetup::new(ctx.clone(), GaussianDist::scalar(-eps, c0).unwrap(), gamma).unwrap();
            asymptotic_ratio(SchemeKind::SplitWFR, &setup)
        };
        if let (Ok(a), Ok(b)) = (r(5.0), r(50.0)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn split_omegas_approach_exact_omega() {
    let (ctx, init) = common::fig1_left();
    let mut last = [f64::INFINITY; 2];
    for k in 2..=6 {
        let setup = DecaySetup::new(ctx.clone(), init.clone(), 10f64.powi(-k)).unwrap();
        let base = omega(SchemeKind::Exact, &setup);
        for (slot, kind) in [SchemeKind::SplitWFR, SchemeKind::SplitFRW].into_iter().enumerate() {
            let err = omega(kind, &setup).sub(&base).max_abs();
            assert!(err < last[slot], "{kind:?} at k={k}: {err} not below {}", last[slot]);
            last[slot] = err;
        }
    }
    assert!(last.iter().all(|&e| e < 1e-5), "{last:?}");
}

#[test]
fn ratio_converges_on_both_instances() {
    let (ctx, init) = common::fig1_left();
    let left = DecaySetup::new(ctx, init, 0.7).unwrap();
    let (ctx, init) = common::fig1_right();
    let right = DecaySetup::new(ctx, init, 0.7).unwrap();
    for setup in [left, right, ten_d()] {
        for kind in [SchemeKind::SplitWFR, SchemeKind::SplitFRW] {
            let gap = (kl_ratio(kind, 400, &setup).unwrap() - asymptotic_ratio(kind, &setup).unwrap()).abs();
            assert!(gap < 1e-4, "{kind:?}: {gap}");
        }
    }
}

#[test]
fn ten_d_limits_bracket_one() {
    let setup = ten_d();
    assert!(asymptotic_ratio(SchemeKind::SplitWFR, &setup).unwrap() > 1.0);
    assert!(asymptotic_ratio(SchemeKind::SplitFRW, &setup).unwrap() < 1.0);
}

#[test]
fn scalar_asymptotic_ratio_matches_one_mode_formula() {
    // In 1D the ratio reduces to ((E_0⁻¹C_π + Ω)/(E_0⁻¹C_π + Ω_kind))².
    let (c_pi, c0, gamma) = (4.0, 1.5, 0.3);
    let setup = DecaySetup::new(common::scalar_ctx(2.0, c_pi), GaussianDist::scalar(0.0, c0).unwrap(), gamma).unwrap();
    let s = c_pi / (c0 - c_pi);
    let w = |k| omega(k, &setup).get(0, 0);
    for kind in [SchemeKind::SplitWFR, SchemeKind::SplitFRW] {
        let want = ((s + w(SchemeKind::Exact)) / (s + w(kind))).powi(2);
        assert!(rel(asymptotic_ratio(kind, &setup).unwrap(), want) < 1e-12);
    }
}

#[test]
fn scalar_omega_matches_closed_form() {
    let (c_pi, gamma) = (4.0, 0.3);
    let setup = DecaySetup::new(common::scalar_ctx(0.0, c_pi), GaussianDist::scalar(0.0, 1.0).unwrap(), gamma).unwrap();
    let big_gamma = 1.0 / c_pi + 0.5;
    assert!(rel(omega(SchemeKind::Exact, &setup).get(0, 0), 0.5 / big_gamma) < 1e-14);
}

#[test]
fn min_rule_dominates_exact_kl() {
    for (ctx, init) in [common::fig1_left(), common::fig1_right()] {
        let setup = DecaySetup::new(ctx.clone(), init.clone(), 1.0).unwrap();
        for i in 0..200 {
            let t = 20.0 * i as f64 / 199.0;
            let kl = kl_gaussian(&wfr_exact(&ctx, &init, t).unwrap(), ctx.target()).unwrap();
            assert!(bound_min_rule(&setup, t).unwrap() >= kl, "t = {t}");
        }
    }
}

#[test]
fn sharp_and_jeffreys_bounds_dominate() {
    let (ctx, init) = common::fig1_left();
    let setup = DecaySetup::new(ctx.clone(), init.clone(), 1.0).unwrap();
    let constants = gaussian_constants(ctx.target(), &init, 0.5).unwrap();
    let mut sharp_seen = false;
    for i in 0..200 {
        let t = 20.0 * i as f64 / 199.0;
        let mu = wfr_exact(&ctx, &init, t).unwrap();
        let kl = kl_gaussian(&mu, ctx.target()).unwrap();
        if let Some(b) = bound_sharp(&setup, t, 0.1).unwrap() {
            sharp_seen = true;
            assert!(b >= kl, "sharp bound at t = {t}");
        }
        let j = jeffreys_gaussian(&mu, ctx.target()).unwrap();
        let jb = jeffreys_bound(&setup, &constants, t).unwrap();
        assert!(jb >= j, "Jeffreys bound at t = {t}");
        assert!(jeffreys_bound_fixed(&setup, &constants, t).unwrap() >= jb * (1.0 - 1e-9));
    }
    assert!(sharp_seen);
}

#[test]
fn sharp_bound_requires_bounded_log_ratio() {
    let (ctx, init) = common::fig1_right();
    let setup = DecaySetup::new(ctx, init, 1.0).unwrap();
    assert_eq!(bound_sharp(&setup, 10.0, 0.1).unwrap(), None);
}

#[test]
fn zero_mean_gap_has_no_ratio() {
    let setup = DecaySetup::new(common::scalar_ctx(0.0, 2.0), GaussianDist::scalar(0.0, 3.0).unwrap(), 0.5).unwrap();
    assert!(asymptotic_ratio(SchemeKind::SplitWFR, &setup).is_err());
}

#[test]
fn mixed_gap_is_neither_case() {
    let target = GaussianDist::new(DVector::zeros(2), SpdMatrix::from_diag(&[1.0, 1.0]).unwrap()).unwrap();
    let init = GaussianDist::new(DVector::from_vec(vec![1.0, 1.0]), SpdMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap()).unwrap();
    let setup = DecaySetup::new(WfrContext::new(target).unwrap(), init, 0.5).unwrap();
    assert_eq!(classify_definiteness(&setup).case, DefinitenessCase::Neither);
    assert!(asymptotic_ratio(SchemeKind::SplitFRW, &setup).is_err());
}
