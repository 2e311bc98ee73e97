//! Strong log-concavity constants along FR, W and WFR flows.

use crate::error::{Error, Result};
use crate::flows::{wfr_exact, WfrContext};
use crate::linalg::{max_eig, min_eig, GaussianDist, SymMatrix};

pub const DEFAULT_DELTA: f64 = 0.5;

/// Hessian bounds and derived constants for a Gaussian pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityConstants {
    pub alpha_pi: f64,
    pub l_pi: f64,
    pub alpha_0: f64,
    pub l_0: f64,
    pub delta: f64,
    pub alpha_d: f64,
    pub alpha_h: f64,
    /// `sqrt(|α_h − L_π| / 2)`, the uniform-in-time statement's constant.
    pub b: f64,
    pub c0: f64,
    /// `b² < α_π / 2`.
    pub theorem_admissible: bool,
}

impl ConvexityConstants {
    /// `sqrt(|α_h − L_π|)`, the fixed-horizon statement's constant.
    pub fn lemma_b(&self) -> f64 {
        (self.alpha_h - self.l_pi).abs().sqrt()
    }
}

pub fn gaussian_constants(target: &GaussianDist, init: &GaussianDist, delta: f64) -> Result<ConvexityConstants> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if target.dim() != init.dim() {
        return Err(Error::Domain("target and initial law differ in dimension".into()));
    }
    let a_pi = target.cov().inverse();
    let a_0 = init.cov().inverse();
    let alpha_pi = a_pi.eig().min();
    let l_pi = a_pi.eig().max();
    let alpha_0 = a_0.eig().min();
    let l_0 = a_0.eig().max();
    let alpha_d = min_eig(&a_0.sym().sub(&a_pi.sym().scale(0.5 * (1.0 + delta))));
    if alpha_d <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "V_0 − (1+δ)/2·V_π is not strongly convex (alpha_d = {alpha_d:e})"
        )));
    }
    // ∇²R = 2C_π⁻², ∇²H = ∇²R + C_π⁻¹.
    let a2 = a_pi.sym().sandwich(&SymMatrix::identity(target.dim()));
    let hess_h = a2.scale(2.0).add(a_pi.sym());
    let alpha_h = min_eig(&hess_h);
    let b = ((alpha_h - l_pi).abs() / 2.0).sqrt();
    let c0 = alpha_d + 0.5 * delta * alpha_pi;
    Ok(ConvexityConstants {
        alpha_pi,
        l_pi,
        alpha_0,
        l_0,
        delta,
        alpha_d,
        alpha_h,
        b,
        c0,
        theorem_admissible: b * b < alpha_pi / 2.0,
    })
}

/// FR flow: `(1 − e^{−t})α_π + e^{−t}α_0`.
pub fn fr_alpha(c: &ConvexityConstants, t: f64) -> f64 {
    let w = (-t).exp();
    -(-t).exp_m1() * c.alpha_pi + w * c.alpha_0
}

/// Fixed-horizon W-flow curve `c_t = b tan(atan(c_0/b) − b t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WHorizon {
    pub b: f64,
    pub c0: f64,
    /// `atan(c_0/b)/b`; infinite when `b = 0`.
    pub t_star: f64,
    /// Set when `b = 0` and the curve is constant.
    pub flat: bool,
}

impl WHorizon {
    pub fn c_at(&self, t: f64) -> f64 {
        if self.flat {
            self.c0
        } else {
            self.b * ((self.c0 / self.b).atan() - self.b * t).tan()
        }
    }

    /// W-flow log-concavity constant `α_π/2 + c_t`.
    pub fn alpha_at(&self, alpha_pi: f64, t: f64) -> f64 {
        alpha_pi / 2.0 + self.c_at(t)
    }
}

pub fn w_horizon(c: &ConvexityConstants) -> Result<WHorizon> {
    if c.c0 <= 0.0 {
        return Err(Error::Hypothesis(format!("c_0 must be positive, got {}", c.c0)));
    }
    let b = c.lemma_b();
    if b == 0.0 {
        return Ok(WHorizon { b, c0: c.c0, t_star: f64::INFINITY, flat: true });
    }
    Ok(WHorizon { b, c0: c.c0, t_star: (c.c0 / b).atan() / b, flat: false })
}

/// Closed-form solution of `dc/dt = −c² − c − b² + α_π/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WfrAlphaCurve {
    pub constants: ConvexityConstants,
    pub c_inf_1: f64,
    pub c_inf_2: f64,
    pub l0: f64,
}

impl WfrAlphaCurve {
    pub fn new(constants: &ConvexityConstants) -> Result<Self> {
        let c = *constants;
        if !c.theorem_admissible {
            return Err(Error::Hypothesis(format!(
                "b² = {:e} is not below α_π/2 = {:e}",
                c.b * c.b,
                c.alpha_pi / 2.0
            )));
        }
        let root = (1.0 + 4.0 * (c.alpha_pi / 2.0 - c.b * c.b)).sqrt();
        let c_inf_1 = (-1.0 + root) / 2.0;
        let c_inf_2 = (-1.0 - root) / 2.0;
        Ok(Self { constants: c, c_inf_1, c_inf_2, l0: (c.c0 - c_inf_1) / (c.c0 - c_inf_2) })
    }

    pub fn c_at(&self, t: f64) -> f64 {
        let e = self.l0 * (-t * (self.c_inf_1 - self.c_inf_2)).exp();
        (self.c_inf_1 - self.c_inf_2 * e) / (1.0 - e)
    }

    pub fn limit(&self) -> f64 {
        self.constants.alpha_pi / 2.0 + self.c_inf_1
    }

    pub fn rhs(&self, c: f64) -> f64 {
        -c * c - c - self.constants.b * self.constants.b + self.constants.alpha_pi / 2.0
    }
}

/// WFR log-concavity constant `α_π/2 + c_t`.
pub fn wfr_alpha(curve: &WfrAlphaCurve, t: f64) -> f64 {
    curve.constants.alpha_pi / 2.0 + curve.c_at(t)
}

fn rk4_max_deviation(
    c0: f64,
    t_max: f64,
    dt: f64,
    rhs: impl Fn(f64) -> f64,
    exact: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !(dt > 0.0 && t_max >= 0.0) {
        return Err(Error::Domain(format!("need dt > 0 and t_max ≥ 0, got dt={dt}, t_max={t_max}")));
    }
    let n = (t_max / dt).ceil() as usize;
    let h = if n == 0 { 0.0 } else { t_max / n as f64 };
    let mut c = c0;
    let mut worst = (c - exact(0.0)).abs();
    for k in 0..n {
        let k1 = rhs(c);
        let k2 = rhs(c + 0.5 * h * k1);
        let k3 = rhs(c + 0.5 * h * k2);
        let k4 = rhs(c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        worst = worst.max((c - exact((k + 1) as f64 * h)).abs());
    }
    Ok(worst)
}

/// Max deviation of RK4 on `dc/dt = −c² − c − b² + α_π/2` from the closed form over `[0, t_max]`.
pub fn riccati_check(curve: &WfrAlphaCurve, t_max: f64, dt: f64) -> Result<f64> {
    rk4_max_deviation(curve.constants.c0, t_max, dt, |c| curve.rhs(c), |t| curve.c_at(t))
}

/// Same check for the fixed-horizon curve, `dc/dt = −c² − b²`.
pub fn w_riccati_check(h: &WHorizon, t_max: f64, dt: f64) -> Result<f64> {
    rk4_max_deviation(h.c0, t_max, dt, |c| -c * c - h.b * h.b, |t| h.c_at(t))
}

/// Smallest eigenvalue of the precision of the exact WFR flow at `t`.
pub fn true_alpha_gaussian(ctx: &WfrContext, init: &GaussianDist, t: f64) -> Result<f64> {
    let v = wfr_exact(ctx, init, t)?;
    Ok(v.cov().inverse().eig().min())
}

/// Largest eigenvalue of the precision of the exact WFR flow at `t`.
pub fn true_smoothness_gaussian(ctx: &WfrContext, init: &GaussianDist, t: f64) -> Result<f64> {
    let v = wfr_exact(ctx, init, t)?;
    Ok(max_eig(v.cov().inverse().sym()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3(c_pi: f64) -> ConvexityConstants {
        gaussian_constants(&GaussianDist::scalar(0.0, c_pi).unwrap(), &GaussianDist::scalar(0.0, 1.0).unwrap(), 0.5)
            .unwrap()
    }

    #[test]
    fn left_panel_constants() {
        let c = fig3(100.0);
        assert!((c.alpha_pi - 0.01).abs() < 1e-15);
        assert!((c.l_pi - 0.01).abs() < 1e-15);
        assert!((c.alpha_h - (2e-4 + 0.01)).abs() < 1e-15);
        assert!((c.b - 1e-2).abs() < 1e-12);
        assert!(c.theorem_admissible);
    }

    #[test]
    fn admissibility_threshold() {
        assert!(fig3(2.1).theorem_admissible);
        assert!(!fig3(2.0).theorem_admissible);
        assert!(WfrAlphaCurve::new(&fig3(2.0)).is_err());
    }

    #[test]
    fn alpha_d_at_target() {
        let pi = GaussianDist::scalar(0.0, 3.0).unwrap();
        let c = gaussian_constants(&pi, &pi, 0.2).unwrap();
        assert!((c.alpha_d - 0.4 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_d_violation() {
        let err = gaussian_constants(&GaussianDist::scalar(0.0, 1.0).unwrap(), &GaussianDist::scalar(0.0, 2.0).unwrap(), 0.5);
        assert!(matches!(err, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn fr_alpha_values() {
        let c = fig3(100.0);
        assert_eq!(fr_alpha(&c, 0.0), 1.0);
        assert!((fr_alpha(&c, 2f64.ln()) - 0.505).abs() < 1e-15);
        assert!((fr_alpha(&c, 50.0) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn wfr_alpha_endpoints() {
        let curve = WfrAlphaCurve::new(&fig3(100.0)).unwrap();
        let c = curve.constants;
        assert!((wfr_alpha(&curve, 0.0) - (c.alpha_pi / 2.0 + c.c0)).abs() < 1e-14);
        assert!((wfr_alpha(&curve, 1000.0) - curve.limit()).abs() < 1e-12);
        assert!(curve.c_inf_1 > 0.0 && curve.c_inf_2 < 0.0);
    }

    #[test]
    fn horizon_hits_zero() {
        let h = w_horizon(&fig3(100.0)).unwrap();
        assert!(h.c_at(h.t_star).abs() < 1e-12);
        assert!((h.c_at(0.0) - h.c0).abs() < 1e-14);
    }
}
