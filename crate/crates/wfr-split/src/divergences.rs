//! Gaussian divergences in closed form and grid divergences by quadrature.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::GaussianDist;
use crate::pde1d::DensityField;

/// Values in `(−CLAMP_TOL, 0)` are treated as round-off and clamped to zero.
pub const CLAMP_TOL: f64 = 1e-8;

/// Cells with density below this value contribute zero to grid integrals.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceReport {
    pub kl_forward: f64,
    pub kl_reverse: f64,
    pub jeffreys: f64,
    pub fisher_info: f64,
}

/// `x − ln(1 + x)`, accurate for tiny `x`.
pub fn log1p_gap(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * 0.2)))
    } else {
        x - x.ln_1p()
    }
}

fn clamp(value: f64, what: &str) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value > -CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!("{what} is negative: {value:e}")))
    }
}

fn check_dims(a: &GaussianDist, b: &GaussianDist) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Eigenvalues of `C_b^{-1/2}(C_a − C_b)C_b^{-1/2}`.
fn relative_spectrum(a: &GaussianDist, b: &GaussianDist) -> DVector<f64> {
    let e = a.cov().sym().sub(b.cov().sym());
    b.cov().inv_sqrt().sandwich(&e).eigen().values
}

/// `KL(a‖b)`.
pub fn kl_gaussian(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    check_dims(a, b)?;
    let x = relative_spectrum(a, b);
    if x.iter().any(|&xi| xi <= -1.0) {
        return Err(Error::Domain("det(I + C_b⁻¹E) is not positive".into()));
    }
    let eps = a.mean() - b.mean();
    let quad = eps.dot(&b.cov().solve(&eps));
    let trace_logdet: f64 = x.iter().map(|&xi| log1p_gap(xi)).sum();
    clamp(0.5 * (trace_logdet + quad), "KL")
}

/// Relative Fisher information `E_a|∇log(a/b)|²`.
pub fn fisher_info_gaussian(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    check_dims(a, b)?;
    let pa = a.cov().inverse();
    let pb = b.cov().inverse();
    let diff = pa.sym().sub(pb.sym());
    let cov_term = (diff.matrix() * a.cov().matrix() * diff.matrix()).trace();
    let w = pb.sym().mul_vec(&(a.mean() - b.mean()));
    clamp(cov_term + w.dot(&w), "Fisher information")
}

pub fn divergence_report(a: &GaussianDist, b: &GaussianDist) -> Result<DivergenceReport> {
    let kl_forward = kl_gaussian(a, b)?;
    let kl_reverse = kl_gaussian(b, a)?;
    Ok(DivergenceReport { kl_forward, kl_reverse, jeffreys: kl_forward + kl_reverse, fisher_info: fisher_info_gaussian(a, b)? })
}

/// `J(a, b) = KL(a‖b) + KL(b‖a)`.
pub fn jeffreys_gaussian(a: &GaussianDist, b: &GaussianDist) -> Result<f64> {
    Ok(kl_gaussian(a, b)? + kl_gaussian(b, a)?)
}

/// Trapezoid `KL(p‖q)` on a shared grid.
pub fn kl_grid(p: &DensityField, q: &DensityField) -> Result<f64> {
    if p.grid() != q.grid() {
        return Err(Error::Domain("densities live on different grids".into()));
    }
    for (name, f) in [("p", p), ("q", q)] {
        let mass = f.integral();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!("{name} is not normalized: mass {mass}")));
        }
    }
    let mut integrand = vec![0.0; p.values().len()];
    for (i, (&pi, &qi)) in p.values().iter().zip(q.values()).enumerate() {
        if pi < DENSITY_FLOOR {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::Domain(format!("q vanishes at node {i} where p = {pi:e}")));
        }
        integrand[i] = pi * (pi / qi).ln();
    }
    clamp(p.grid().trapezoid(&integrand), "grid KL")
}
