#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wfr_split::flows::WfrContext;
use wfr_split::{GaussianDist, SpdMatrix, SymMatrix};

pub fn spd_from(d: usize, entries: &[f64], shift: f64) -> SpdMatrix {
    let a = DMatrix::from_row_slice(d, d, entries);
    let m = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * shift;
    SpdMatrix::from_matrix(m).unwrap()
}

pub fn spd(d: usize) -> impl Strategy<Value = SpdMatrix> {
    (prop::collection::vec(-1.0..1.0f64, d * d), 0.3..1.5f64).prop_map(move |(e, s)| spd_from(d, &e, s))
}

pub fn sym(d: usize, scale: f64) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-scale..scale, d * d)
        .prop_map(move |e| SymMatrix::new(DMatrix::from_row_slice(d, d, &e)).unwrap())
}

pub fn gaussian(d: usize) -> impl Strategy<Value = GaussianDist> {
    (prop::collection::vec(-2.0..2.0f64, d), spd(d))
        .prop_map(|(m, c)| GaussianDist::new(DVector::from_vec(m), c).unwrap())
}

/// Target and initial law of a common dimension in `1..=max_d`.
pub fn pair(max_d: usize) -> impl Strategy<Value = (GaussianDist, GaussianDist)> {
    (1..=max_d).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

pub fn scalar_ctx(m: f64, c: f64) -> WfrContext {
    WfrContext::new(GaussianDist::scalar(m, c).unwrap()).unwrap()
}

pub fn fig1_left() -> (WfrContext, GaussianDist) {
    (scalar_ctx(20.0, 100.0), GaussianDist::scalar(0.0, 1.0).unwrap())
}

pub fn fig1_right() -> (WfrContext, GaussianDist) {
    (scalar_ctx(20.0, 1.0), GaussianDist::scalar(0.0, 100.0).unwrap())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}
