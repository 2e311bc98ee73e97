//! Closed-form Gaussian evolution under the WFR flow, its two pure parts and their sequential splittings.

use nalgebra::{DMatrix, DVector};

use crate::divergences::kl_gaussian;
use crate::error::{Error, Result};
use crate::linalg::{sym_expm, Eigen, GaussianDist, SpdMatrix, SymMatrix};

/// Relative size of `C_0 − C_π` below which the covariance is treated as already at target.
pub const DEGENERATE_TOL: f64 = 1e-10;

/// Relative singular-value floor for the inner resolvent.
const RESOLVENT_TOL: f64 = 1e-13;

/// Precomputed target data.
///
/// All matrices in this module commute with `C_π`, so they are diagonal in the
/// eigenbasis of `Γ = C_π⁻¹ + ½I`. The spectral arrays are stored in ascending
/// order of the eigenvalues of `Γ`.
#[derive(Clone, Debug)]
pub struct WfrContext {
    target: GaussianDist,
    c_pi_inv: SpdMatrix,
    gamma_mat: SpdMatrix,
    basis: DMatrix<f64>,
    c: Vec<f64>,
    kappa: Vec<f64>,
    lambda: Vec<f64>,
}

/// Perturbation matrix `M_t` of the generalized flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MtKind {
    Zero,
    WfrSplitWFR,
    WfrSplitFRW,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MtSpec {
    pub kind: MtKind,
    pub gamma_step: f64,
}

impl MtSpec {
    pub fn zero() -> Self {
        Self { kind: MtKind::Zero, gamma_step: 0.0 }
    }

    pub fn new(kind: MtKind, gamma_step: f64) -> Result<Self> {
        if kind != MtKind::Zero && !(gamma_step > 0.0 && gamma_step.is_finite()) {
            return Err(Error::Domain(format!("gamma_step must be positive, got {gamma_step}")));
        }
        Ok(Self { kind, gamma_step })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitOrder {
    WThenFR,
    FRThenW,
}

#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub index: usize,
    pub time: f64,
    pub dist: GaussianDist,
    pub kl: f64,
}

impl WfrContext {
    pub fn new(target: GaussianDist) -> Result<Self> {
        let d = target.dim();
        let eig = target.cov().eig();
        // Γ ascending ⇔ C_π descending.
        let order: Vec<usize> = (0..d).rev().collect();
        let c: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
        let mut basis = DMatrix::zeros(d, d);
        for (j, &i) in order.iter().enumerate() {
            basis.set_column(j, &eig.vectors.column(i));
        }
        let kappa: Vec<f64> = c.iter().map(|c| 1.0 / c).collect();
        let lambda: Vec<f64> = kappa.iter().map(|k| k + 0.5).collect();
        let c_pi_inv = target.cov().inverse();
        let gamma_mat = SpdMatrix::new(c_pi_inv.sym().add(&SymMatrix::identity(d).scale(0.5)))?;
        Ok(Self { target, c_pi_inv, gamma_mat, basis, c, kappa, lambda })
    }

    pub fn target(&self) -> &GaussianDist {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn c_pi(&self) -> &SpdMatrix {
        self.target.cov()
    }

    pub fn c_pi_inv(&self) -> &SpdMatrix {
        &self.c_pi_inv
    }

    pub fn gamma_mat(&self) -> &SpdMatrix {
        &self.gamma_mat
    }

    /// Eigenvalues `λ_1 ≤ … ≤ λ_d` of `Γ`.
    pub fn gamma_eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Eigenvectors of `Γ` as columns, matching [`Self::gamma_eigenvalues`].
    pub fn gamma_eigenvectors(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Eigenvalues of `C_π⁻¹` in the `Γ` order.
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Eigenvalues of `C_π` in the `Γ` order.
    pub fn c_pi_eigenvalues(&self) -> &[f64] {
        &self.c
    }

    /// Builds `Σ_i f(i) p_i p_iᵀ` from per-eigenvalue values.
    pub fn spectral(&self, f: impl Fn(usize) -> f64) -> SymMatrix {
        let d: Vec<f64> = (0..self.dim()).map(f).collect();
        Eigen { values: DVector::from_column_slice(&self.lambda), vectors: self.basis.clone() }.compose_diag(&d)
    }

    /// Coordinates of `v` in the eigenbasis of `Γ`.
    pub fn to_basis(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * v
    }

    /// Rejects states whose dimension differs from the target.
    pub fn check_init(&self, v: &GaussianDist) -> Result<()> {
        if v.dim() != self.dim() {
            return Err(Error::Domain(format!("state has dimension {} but target has {}", v.dim(), self.dim())));
        }
        Ok(())
    }

    fn is_degenerate(&self, e0: &SymMatrix) -> bool {
        e0.max_abs() < DEGENERATE_TOL * self.c_pi().sym().max_abs()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and non-negative, got {t}")))
    }
}

/// `(I + A)^{-1} B` with a singularity check on `I + A`.
pub(crate) fn resolvent_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let k = DMatrix::identity(d, d) + a;
    let sv = k.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin.is_nan() || smin <= RESOLVENT_TOL * smax.max(1.0) {
        let eigenvalue = k
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        return Err(Error::SingularConfiguration { eigenvalue });
    }
    k.lu().solve(b).ok_or(Error::SingularConfiguration { eigenvalue: smin })
}

/// Evolution of the form `C_t − C_π = e^{−Γt}E_0(I + G E_0)^{-1}e^{−Γt}` and
/// `m_t − m_π = e^{−t/2}e^{−Γt}(I + E_0 G)^{-1}(m_0 − m_π)`, with `G` diagonal in the `Γ` basis.
fn resolvent_evolution(ctx: &WfrContext, init: &GaussianDist, g: &[f64], t: f64) -> Result<GaussianDist> {
    ctx.check_init(init)?;
    let e0 = init.cov().sym().sub(ctx.c_pi().sym());
    let eps0 = init.mean() - ctx.target().mean();
    let decay = ctx.spectral(|i| (-ctx.lambda[i] * t).exp());
    if ctx.is_degenerate(&e0) {
        let mean = ctx.target().mean() + ctx.spectral(|i| (-(ctx.kappa[i] + 1.0) * t).exp()).mul_vec(&eps0);
        return GaussianDist::new(mean, ctx.c_pi().clone());
    }
    let gm = ctx.spectral(|i| g[i]);
    let e0m = e0.matrix();
    // (I + E_0 G)^{-1} [E_0 | ε_0]
    let mut rhs = DMatrix::zeros(ctx.dim(), ctx.dim() + 1);
    rhs.view_mut((0, 0), (ctx.dim(), ctx.dim())).copy_from(e0m);
    rhs.set_column(ctx.dim(), &eps0);
    let sol = resolvent_solve(&(e0m * gm.matrix()), &rhs)?;
    let x = SymMatrix::from_unchecked(sol.columns(0, ctx.dim()).into_owned());
    let u = sol.column(ctx.dim()).into_owned();
    let et = decay.sandwich(&x);
    let cov = SpdMatrix::new(ctx.c_pi().sym().add(&et))?;
    let mean = ctx.target().mean() + decay.mul_vec(&u) * (-0.5 * t).exp();
    GaussianDist::new(mean, cov)
}

/// `Z_t^M` per eigenvalue of `Γ`.
fn z_integral(kind: MtKind, kappa: f64, lambda: f64, t: f64) -> f64 {
    match kind {
        MtKind::Zero => 0.0,
        MtKind::WfrSplitWFR => {
            2.0 * (-(-2.0 * kappa * t).exp_m1() / (2.0 * kappa) + (-2.0 * lambda * t).exp_m1() / (2.0 * lambda))
        }
        MtKind::WfrSplitFRW => -(-(-t).exp_m1() + (-2.0 * lambda * t).exp_m1() / (2.0 * lambda)) / kappa,
    }
}

/// Generalized flow with perturbation `M_t`.
pub fn general_mt_solution(ctx: &WfrContext, init: &GaussianDist, spec: MtSpec, t: f64) -> Result<GaussianDist> {
    check_time(t)?;
    if t == 0.0 {
        ctx.check_init(init)?;
        return Ok(init.clone());
    }
    let g: Vec<f64> = (0..ctx.dim())
        .map(|i| {
            let (k, l) = (ctx.kappa[i], ctx.lambda[i]);
            let s = 1.0 / (2.0 + ctx.c[i]);
            -s * (-2.0 * l * t).exp_m1() - k * k * z_integral(spec.kind, k, l, t)
        })
        .collect();
    resolvent_evolution(ctx, init, &g, t)
}

/// Exact WFR flow.
pub fn wfr_exact(ctx: &WfrContext, init: &GaussianDist, t: f64) -> Result<GaussianDist> {
    general_mt_solution(ctx, init, MtSpec::zero(), t)
}

/// Pure Wasserstein flow (Ornstein–Uhlenbeck map).
pub fn w_step(ctx: &WfrContext, v: &GaussianDist, t: f64) -> Result<GaussianDist> {
    check_time(t)?;
    ctx.check_init(v)?;
    if t == 0.0 {
        return Ok(v.clone());
    }
    let e = sym_expm(ctx.c_pi_inv().sym(), -t)?;
    let mean = ctx.target().mean() + e.mul_vec(&(v.mean() - ctx.target().mean()));
    // e C_0 e + C_π(I − e²) = C_π + e (C_0 − C_π) e, since e commutes with C_π.
    let cov = ctx.c_pi().sym().add(&e.sandwich(&v.cov().sym().sub(ctx.c_pi().sym())));
    GaussianDist::new(mean, SpdMatrix::new(cov)?)
}

/// Pure Fisher–Rao flow: geometric interpolation of densities.
pub fn fr_step(ctx: &WfrContext, v: &GaussianDist, t: f64) -> Result<GaussianDist> {
    check_time(t)?;
    ctx.check_init(v)?;
    if t == 0.0 {
        return Ok(v.clone());
    }
    let w0 = (-t).exp();
    let wpi = -(-t).exp_m1();
    let p0 = v.cov().inverse();
    let prec = SpdMatrix::new(ctx.c_pi_inv().sym().scale(wpi).add(&p0.sym().scale(w0)))?;
    let eta = ctx.c_pi_inv().sym().mul_vec(ctx.target().mean()) * wpi + p0.sym().mul_vec(v.mean()) * w0;
    let cov = prec.inverse();
    let mean = cov.sym().mul_vec(&eta);
    GaussianDist::new(mean, cov)
}

/// One sequential split step of size `γ`.
pub fn split_step(ctx: &WfrContext, v: &GaussianDist, order: SplitOrder, gamma: f64) -> Result<GaussianDist> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("step size must be positive, got {gamma}")));
    }
    let h: Vec<f64> = (0..ctx.dim())
        .map(|i| {
            let k = ctx.kappa[i];
            match order {
                SplitOrder::WThenFR => gamma.exp_m1() * k * (-2.0 * ctx.lambda[i] * gamma).exp(),
                SplitOrder::FRThenW => -(-gamma).exp_m1() * k,
            }
        })
        .collect();
    resolvent_evolution(ctx, v, &h, gamma)
}

/// `n` split steps; point `k` carries the KL to target.
pub fn iterate_split(
    ctx: &WfrContext,
    init: &GaussianDist,
    order: SplitOrder,
    gamma: f64,
    n: usize,
) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = init.clone();
    out.push(TrajectoryPoint { index: 0, time: 0.0, kl: kl_gaussian(&cur, ctx.target())?, dist: cur.clone() });
    for k in 1..=n {
        cur = split_step(ctx, &cur, order, gamma)?;
        out.push(TrajectoryPoint { index: k, time: k as f64 * gamma, kl: kl_gaussian(&cur, ctx.target())?, dist: cur.clone() });
    }
    Ok(out)
}

fn mt_matrix(ctx: &WfrContext, kind: MtKind, s: f64) -> SymMatrix {
    match kind {
        MtKind::Zero => SymMatrix::zeros(ctx.dim()),
        MtKind::WfrSplitWFR => SymMatrix::identity(ctx.dim()).scale(s.exp_m1()),
        MtKind::WfrSplitFRW => ctx.spectral(|i| -0.5 * ctx.c[i] * (2.0 * s * ctx.kappa[i]).exp_m1()),
    }
}

fn moment_rhs(
    ctx: &WfrContext,
    kind: MtKind,
    s: f64,
    m: &DVector<f64>,
    c: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = ctx.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let a = ctx.c_pi_inv().matrix();
    let mm = mt_matrix(ctx, kind, s);
    let mt = mm.matrix();
    let ca = c * a;
    let inner = &ca * (&id - mt * a * 2.0);
    let shift = &id - ctx.c_pi().matrix() * 0.5 + mt * 2.0;
    let dc = -(&inner * c) - &shift * a * c - &ca * &shift + (&id + mt) * 2.0;
    let dm = -((inner + (&id + mt * 2.0) * a) * (m - ctx.target().mean()));
    (dm, dc)
}

/// RK4 integration of the moment ODEs with `M_t` from `spec`.
pub fn moment_ode_integrate(ctx: &WfrContext, init: &GaussianDist, spec: MtSpec, t: f64, dt: f64) -> Result<GaussianDist> {
    check_time(t)?;
    ctx.check_init(init)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if t / dt > 1e7 {
        return Err(Error::StepSize(format!("t/dt = {} exceeds 1e7 steps", t / dt)));
    }
    if t == 0.0 {
        return Ok(init.clone());
    }
    let n = (t / dt).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let mut m = init.mean().clone();
    let mut c = init.cov().matrix().clone();
    for step in 0..n {
        let s = step as f64 * h;
        let (k1m, k1c) = moment_rhs(ctx, spec.kind, s, &m, &c);
        let (k2m, k2c) = moment_rhs(ctx, spec.kind, s + 0.5 * h, &(&m + &k1m * (0.5 * h)), &(&c + &k1c * (0.5 * h)));
        let (k3m, k3c) = moment_rhs(ctx, spec.kind, s + 0.5 * h, &(&m + &k2m * (0.5 * h)), &(&c + &k2c * (0.5 * h)));
        let (k4m, k4c) = moment_rhs(ctx, spec.kind, s + h, &(&m + &k3m * h), &(&c + &k3c * h));
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        c += (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (h / 6.0);
        c = (&c + c.transpose()) * 0.5;
        if c.iter().any(|x| !x.is_finite()) || c.clone().cholesky().is_none() {
            return Err(Error::StepSize(format!(
                "covariance lost positive definiteness at t = {}; reduce dt below {dt}",
                s + h
            )));
        }
    }
    GaussianDist::new(m, SpdMatrix::from_matrix(c)?)
}

/// Partial sum `Σ_{k=1}^{k_max} γ^k/k! (2C_π⁻¹)^{k−1}` and its limit `(C_π/2)(e^{2γC_π⁻¹} − I)`.
pub fn gfrw_series_check(ctx: &WfrContext, gamma: f64, k_max: usize) -> Result<(SymMatrix, SymMatrix)> {
    if k_max < 1 {
        return Err(Error::Domain("k_max must be at least 1".into()));
    }
    let d = ctx.dim();
    let two_a = ctx.c_pi_inv().matrix() * 2.0;
    let mut term = DMatrix::<f64>::identity(d, d) * gamma;
    let mut sum = term.clone();
    for k in 2..=k_max {
        term = &term * &two_a * (gamma / k as f64);
        sum += &term;
    }
    let e = sym_expm(ctx.c_pi_inv().sym(), 2.0 * gamma)?;
    let closed = SymMatrix::from_unchecked(ctx.c_pi().matrix() * (e.matrix() - DMatrix::identity(d, d)) * 0.5);
    Ok((SymMatrix::from_unchecked(sum), closed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn left() -> (WfrContext, GaussianDist) {
        (WfrContext::new(GaussianDist::scalar(20.0, 100.0).unwrap()).unwrap(), GaussianDist::scalar(0.0, 1.0).unwrap())
    }

    #[test]
    fn context_spectrum_is_ascending() {
        let ctx = WfrContext::new(GaussianDist::from_slices(&[0.0, 0.0], &[1.0, 0.0, 0.0, 4.0]).unwrap()).unwrap();
        assert!((ctx.gamma_eigenvalues()[0] - 0.75).abs() < 1e-15);
        assert!((ctx.gamma_eigenvalues()[1] - 1.5).abs() < 1e-15);
        let diff = ctx.gamma_mat().matrix() - ctx.c_pi_inv().matrix() - DMatrix::identity(2, 2) * 0.5;
        assert!(diff.amax() < 1e-12);
    }

    #[test]
    fn time_zero_is_identity() {
        let (ctx, init) = left();
        assert_eq!(wfr_exact(&ctx, &init, 0.0).unwrap(), init);
        assert_eq!(w_step(&ctx, &init, 0.0).unwrap(), init);
        assert_eq!(fr_step(&ctx, &init, 0.0).unwrap(), init);
    }

    #[test]
    fn fr_step_scalar_value() {
        let ctx = WfrContext::new(GaussianDist::scalar(0.0, 4.0).unwrap()).unwrap();
        let v = fr_step(&ctx, &GaussianDist::scalar(0.0, 1.0).unwrap(), 2f64.ln()).unwrap();
        assert!((v.cov().matrix()[(0, 0)] - 1.6).abs() < 1e-13);
    }

    #[test]
    fn exact_flow_reaches_target() {
        let (ctx, init) = left();
        let v = wfr_exact(&ctx, &init, 50.0).unwrap();
        assert!((v.mean()[0] - 20.0).abs() < 1e-8);
        assert!((v.cov().matrix()[(0, 0)] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_covariance_freezes() {
        let ctx = WfrContext::new(GaussianDist::scalar(1.0, 3.0).unwrap()).unwrap();
        let v = wfr_exact(&ctx, &GaussianDist::scalar(0.0, 3.0).unwrap(), 0.4).unwrap();
        assert_eq!(v.cov().matrix()[(0, 0)], 3.0);
        let expect = 1.0 - (-(1.0 / 3.0 + 1.0) * 0.4f64).exp();
        assert!((v.mean()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn orders_do_not_commute() {
        let (ctx, init) = left();
        let q = split_step(&ctx, &init, SplitOrder::WThenFR, 0.7).unwrap();
        let p = split_step(&ctx, &init, SplitOrder::FRThenW, 0.7).unwrap();
        assert!((q.cov().matrix()[(0, 0)] - p.cov().matrix()[(0, 0)]).abs() > 1e-3);
    }

    #[test]
    fn rk4_rejects_too_many_steps() {
        let (ctx, init) = left();
        assert!(matches!(moment_ode_integrate(&ctx, &init, MtSpec::zero(), 20.0, 1e-7), Err(Error::StepSize(_))));
    }

    #[test]
    fn mtspec_requires_positive_step() {
        assert!(MtSpec::new(MtKind::WfrSplitWFR, 0.0).is_err());
        assert!(MtSpec::new(MtKind::Zero, 0.0).is_ok());
    }

    #[test]
    fn series_at_zero_gamma() {
        let (ctx, _) = left();
        let (s, c) = gfrw_series_check(&ctx, 0.0, 5).unwrap();
        assert_eq!(s.max_abs(), 0.0);
        assert_eq!(c.max_abs(), 0.0);
    }
}
