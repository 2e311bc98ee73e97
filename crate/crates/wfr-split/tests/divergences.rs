mod common;

use proptest::prelude::*;
use wfr_split::divergences::{divergence_report, fisher_info_gaussian, jeffreys_gaussian, kl_gaussian, kl_grid};
use wfr_split::pde1d::{Grid1D, TargetSpec1D};
use wfr_split::GaussianDist;

fn scalar_kl(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}

/// `E_a[(d/dx log(a/b))²]` by midpoint quadrature over ±14 sd of `a`.
fn scalar_fisher_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let sd = v1.sqrt();
    let n = 200_000;
    let (lo, hi) = (m1 - 14.0 * sd, m1 + 14.0 * sd);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            let dens = (-(x - m1).powi(2) / (2.0 * v1)).exp() / (2.0 * std::f64::consts::PI * v1).sqrt();
            let score = -(x - m1) / v1 + (x - m2) / v2;
            dens * score * score * h
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_is_nonnegative((a, b) in common::pair(5)) {
        let kl = kl_gaussian(&a, &b).unwrap();
        prop_assert!(kl >= 0.0);
        if a.max_diff(&b) > 1e-3 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn kl_vanishes_on_the_diagonal(a in (1usize..=5).prop_flat_map(common::gaussian)) {
        prop_assert_eq!(kl_gaussian(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn report_is_consistent((a, b) in common::pair(5)) {
        let r = divergence_report(&a, &b).unwrap();
        prop_assert!((r.jeffreys - (r.kl_forward + r.kl_reverse)).abs() <= 1e-12 * r.jeffreys.max(1.0));
        prop_assert!((r.kl_reverse - kl_gaussian(&b, &a).unwrap()).abs() <= 1e-12 * r.kl_reverse.max(1.0));
        prop_assert!(r.fisher_info >= 0.0);
    }

    #[test]
    fn scalar_kl_matches_hand_formula(m1 in -5.0..5.0f64, v1 in 0.05..20.0f64, m2 in -5.0..5.0f64, v2 in 0.05..20.0f64) {
        let a = GaussianDist::scalar(m1, v1).unwrap();
        let b = GaussianDist::scalar(m2, v2).unwrap();
        let want = scalar_kl(m1, v1, m2, v2);
        prop_assert!((kl_gaussian(&a, &b).unwrap() - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn kl_is_tiny_for_nearby_laws(a in (1usize..=4).prop_flat_map(common::gaussian), eps in 1e-9..1e-6f64) {
        let shifted = GaussianDist::new(a.mean().add_scalar(eps), a.cov().clone()).unwrap();
        let kl = kl_gaussian(&shifted, &a).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert!(kl < 1e-9);
    }
}

#[test]
fn fisher_information_matches_quadrature() {
    for &(m1, v1, m2, v2) in &[(0.0, 1.0, 20.0, 100.0), (0.0, 100.0, 20.0, 1.0), (1.0, 0.5, -1.0, 2.0), (0.3, 3.0, 0.3, 3.0)] {
        let a = GaussianDist::scalar(m1, v1).unwrap();
        let b = GaussianDist::scalar(m2, v2).unwrap();
        let closed = fisher_info_gaussian(&a, &b).unwrap();
        let quad = scalar_fisher_quadrature(m1, v1, m2, v2);
        assert!((closed - quad).abs() <= 1e-8 * quad.max(1.0), "{closed} vs {quad}");
    }
}

#[test]
fn jeffreys_is_symmetric() {
    let a = GaussianDist::from_slices(&[1.0, 0.0], &[2.0, 0.5, 0.5, 1.0]).unwrap();
    let b = GaussianDist::from_slices(&[0.0, -1.0], &[1.0, 0.0, 0.0, 3.0]).unwrap();
    let ab = jeffreys_gaussian(&a, &b).unwrap();
    assert!((ab - jeffreys_gaussian(&b, &a).unwrap()).abs() < 1e-14);
}

fn grid_gaps(sizes: &[usize]) -> Vec<f64> {
    let (m1, v1, m2, v2) = (0.5, 0.8, -0.5, 2.0);
    let exact = scalar_kl(m1, v1, m2, v2);
    let p_spec = TargetSpec1D::gaussian(m1, v1).unwrap();
    let q_spec = TargetSpec1D::gaussian(m2, v2).unwrap();
    sizes
        .iter()
        .map(|&n| {
            let grid = Grid1D::covering(&[(m1, v1.sqrt()), (m2, v2.sqrt())], 10.0, n).unwrap();
            let kl = kl_grid(&p_spec.discretize(grid).unwrap(), &q_spec.discretize(grid).unwrap()).unwrap();
            (kl - exact).abs()
        })
        .collect()
}

#[test]
fn grid_kl_converges_to_closed_form() {
    let gaps = grid_gaps(&[1001, 4001, 16001]);
    assert!(gaps[1] <= gaps[0] + 1e-13 && gaps[2] <= gaps[1] + 1e-13, "{gaps:?}");
    assert!(gaps[2] < 1e-6, "{gaps:?}");
}

#[test]
fn grid_kl_requires_shared_grid() {
    let p = TargetSpec1D::gaussian(0.0, 1.0).unwrap();
    let a = p.discretize(Grid1D::new(-10.0, 10.0, 101).unwrap()).unwrap();
    let b = p.discretize(Grid1D::new(-10.0, 10.0, 201).unwrap()).unwrap();
    assert!(kl_grid(&a, &b).is_err());
}
