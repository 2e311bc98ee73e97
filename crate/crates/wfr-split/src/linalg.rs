//! Dense symmetric and SPD matrix utilities.
//!
//! Every matrix function goes through a symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 64;

/// Relative eigenvalue floor for positive definiteness.
pub const SPD_REL_TOL: f64 = 1e-12;

/// Symmetric matrix. Symmetry is exact: the input is averaged with its transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    /// `V diag(f(λ_i)) Vᵀ`.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        self.compose_diag(&d)
    }

    /// `V diag(d) Vᵀ` for explicit diagonal entries.
    pub fn compose_diag(&self, d: &[f64]) -> SymMatrix {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (j, &dj) in d.iter().enumerate() {
            scaled.column_mut(j).scale_mut(dj);
        }
        SymMatrix::from_unchecked(&scaled * v.transpose())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericInput("matrix has non-finite entries".into()))
    }
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Domain(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
        }
        let d = m.nrows();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Domain(format!("dimension {d} outside 1..={MAX_DIM}")));
        }
        check_finite(&m)?;
        Ok(Self::from_unchecked(m))
    }

    /// Symmetrizes without validation; callers guarantee a square finite input.
    pub(crate) fn from_unchecked(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self { m: (m + t) * 0.5 }
    }

    pub fn from_row_slice(d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::Domain(format!("expected {} entries, got {}", d * d, data.len())));
        }
        Self::new(DMatrix::from_row_slice(d, d, data))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(d: usize) -> Self {
        Self { m: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn eigen(&self) -> Eigen {
        let se = SymmetricEigen::new(self.m.clone());
        let d = self.dim();
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = DVector::from_iterator(d, idx.iter().map(|&i| se.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(d, d);
        for (j, &i) in idx.iter().enumerate() {
            vectors.set_column(j, &se.eigenvectors.column(i));
        }
        Eigen { values, vectors }
    }

    pub fn max_abs(&self) -> f64 {
        self.m.amax()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        Self::from_unchecked(&self.m + &other.m)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self::from_unchecked(&self.m - &other.m)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        Self { m: &self.m * s }
    }

    /// `A B A` for symmetric `A` (this) and `B`.
    pub fn sandwich(&self, b: &SymMatrix) -> SymMatrix {
        Self::from_unchecked(&self.m * &b.m * &self.m)
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.m * v
    }
}

/// Symmetric positive definite matrix with a cached eigendecomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    base: SymMatrix,
    eig: Eigen,
}

impl SpdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        let eig = base.eigen();
        let tol = SPD_REL_TOL * eig.max().abs();
        if eig.min() <= tol || eig.max() <= 0.0 {
            return Err(Error::Singular { min_eig: eig.min(), tol });
        }
        Ok(Self { base, eig })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diag(diag)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(SymMatrix::identity(d)).expect("identity is SPD")
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn eig(&self) -> &Eigen {
        &self.eig
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn inverse(&self) -> SpdMatrix {
        spd_inverse(self)
    }

    /// `A^{-1/2}`.
    pub fn inv_sqrt(&self) -> SymMatrix {
        self.eig.compose(|l| 1.0 / l.sqrt())
    }

    pub fn sqrt(&self) -> SymMatrix {
        self.eig.compose(f64::sqrt)
    }

    /// `A^{-1} v` through the eigendecomposition.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let vt = self.eig.vectors.transpose() * v;
        let scaled = DVector::from_iterator(vt.len(), vt.iter().zip(self.eig.values.iter()).map(|(a, l)| a / l));
        &self.eig.vectors * scaled
    }
}

/// `e^{sA}` for symmetric `A`.
pub fn sym_expm(a: &SymMatrix, s: f64) -> Result<SymMatrix> {
    if !s.is_finite() {
        return Err(Error::NumericInput("non-finite scale in sym_expm".into()));
    }
    check_finite(a.matrix())?;
    if s == 0.0 {
        return Ok(SymMatrix::identity(a.dim()));
    }
    Ok(a.eigen().compose(|l| (s * l).exp()))
}

pub fn spd_inverse(a: &SpdMatrix) -> SpdMatrix {
    let base = a.eig.compose(|l| 1.0 / l);
    let values = DVector::from_iterator(a.dim(), a.eig.values.iter().rev().map(|l| 1.0 / l));
    let mut vectors = DMatrix::zeros(a.dim(), a.dim());
    for (j, i) in (0..a.dim()).rev().enumerate() {
        vectors.set_column(j, &a.eig.vectors.column(i));
    }
    SpdMatrix { base, eig: Eigen { values, vectors } }
}

pub fn logdet(a: &SpdMatrix) -> f64 {
    a.eig.values.iter().map(|l| l.ln()).sum()
}

pub fn min_eig(a: &SymMatrix) -> f64 {
    a.eigen().min()
}

pub fn max_eig(a: &SymMatrix) -> f64 {
    a.eigen().max()
}

/// Gaussian law `N(mean, cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Domain(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericInput("mean has non-finite entries".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_slices(mean: &[f64], cov_rows: &[f64]) -> Result<Self> {
        let d = mean.len();
        Self::new(DVector::from_column_slice(mean), SpdMatrix::new(SymMatrix::from_row_slice(d, cov_rows)?)?)
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::from_slices(&[mean], &[var])
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest absolute entry difference over mean and covariance.
    pub fn max_diff(&self, other: &GaussianDist) -> f64 {
        let dm = (&self.mean - &other.mean).amax();
        let dc = (self.cov.matrix() - other.cov.matrix()).amax();
        dm.max(dc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_logs() {
        let a = SymMatrix::from_diag(&[2f64.ln(), 3f64.ln()]).unwrap();
        let e = sym_expm(&a, 1.0).unwrap();
        assert!((e.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((e.get(1, 1) - 3.0).abs() < 1e-14);
        assert_eq!(e.get(0, 1), 0.0);
    }

    #[test]
    fn expm_at_zero_is_identity() {
        let a = SymMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, -3.0]).unwrap();
        assert_eq!(sym_expm(&a, 0.0).unwrap(), SymMatrix::identity(2));
    }

    #[test]
    fn construction_symmetrizes() {
        let a = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0])).unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
    }

    #[test]
    fn rejects_oversize_and_nan() {
        assert!(SymMatrix::new(DMatrix::zeros(65, 65)).is_err());
        assert!(SymMatrix::from_diag(&[f64::NAN]).is_err());
        assert!(sym_expm(&SymMatrix::identity(2), f64::INFINITY).is_err());
    }

    #[test]
    fn diagonal_inverse_and_logdet() {
        let a = SpdMatrix::from_diag(&[2.0, 4.0]).unwrap();
        let inv = spd_inverse(&a);
        assert!((inv.matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((inv.matrix()[(1, 1)] - 0.25).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((logdet(&SpdMatrix::from_diag(&[e, e * e]).unwrap()) - 3.0).abs() < 1e-14);
        assert_eq!(logdet(&SpdMatrix::identity(3)), 0.0);
    }

    #[test]
    fn singular_rejected() {
        let err = SpdMatrix::from_diag(&[1.0, 1e-14]).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
        assert!(SpdMatrix::from_diag(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn min_eig_of_indefinite_diag() {
        assert_eq!(min_eig(&SymMatrix::from_diag(&[3.0, -2.0]).unwrap()), -2.0);
        assert_eq!(min_eig(&SymMatrix::identity(4)), 1.0);
    }

    #[test]
    fn inverse_eigen_cache_is_ascending() {
        let a = SpdMatrix::from_diag(&[1.0, 2.0, 8.0]).unwrap();
        let inv = a.inverse();
        let v = &inv.eig().values;
        assert!(v[0] <= v[1] && v[1] <= v[2]);
        assert!((v[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gaussian_dimension_mismatch() {
        let cov = SpdMatrix::identity(2);
        assert!(GaussianDist::new(DVector::zeros(3), cov).is_err());
    }
}
