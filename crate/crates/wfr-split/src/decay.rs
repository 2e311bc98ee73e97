//! n-step KL decay of the Gaussian schemes, their asymptotic ratio, and the convergence bounds.

use nalgebra::{DMatrix, DVector};

use crate::divergences::{jeffreys_gaussian, kl_gaussian, log1p_gap};
use crate::error::{Error, Result};
use crate::flows::{fr_step, resolvent_solve, w_step, WfrContext};
use crate::linalg::{logdet, GaussianDist, SymMatrix};
use crate::logconcavity::{wfr_alpha, ConvexityConstants, WfrAlphaCurve};

/// Relative tolerance for eigenvalue sign tests.
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Simpson step for the time integral in the Jeffreys bound.
pub const JEFFREYS_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Exact,
    SplitWFR,
    SplitFRW,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Exact, SchemeKind::SplitWFR, SchemeKind::SplitFRW];
}

#[derive(Clone, Debug)]
pub struct DecaySetup {
    ctx: WfrContext,
    init: GaussianDist,
    e0: SymMatrix,
    eps0: DVector<f64>,
    gamma: f64,
}

impl DecaySetup {
    pub fn new(ctx: WfrContext, init: GaussianDist, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("step size must be positive, got {gamma}")));
        }
        if init.dim() != ctx.dim() {
            return Err(Error::Domain("initial law and target differ in dimension".into()));
        }
        let e0 = init.cov().sym().sub(ctx.c_pi().sym());
        let eps0 = init.mean() - ctx.target().mean();
        Ok(Self { ctx, init, e0, eps0, gamma })
    }

    pub fn ctx(&self) -> &WfrContext {
        &self.ctx
    }

    pub fn init(&self) -> &GaussianDist {
        &self.init
    }

    pub fn e0(&self) -> &SymMatrix {
        &self.e0
    }

    pub fn eps0(&self) -> &DVector<f64> {
        &self.eps0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Sign pattern of `E_0`.
    pub fn e0_signature(&self) -> Signature {
        signature(&self.e0)
    }

    fn require_definite(&self) -> Result<()> {
        match self.e0_signature() {
            Signature::Positive | Signature::Negative => Ok(()),
            s => Err(Error::Domain(format!("E_0 must be strictly definite, found {s:?}"))),
        }
    }

    fn e0_solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.e0
            .matrix()
            .clone()
            .lu()
            .solve(v)
            .ok_or(Error::SingularConfiguration { eigenvalue: 0.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signature {
    Positive,
    Negative,
    Mixed,
    Singular,
}

fn signature(a: &SymMatrix) -> Signature {
    let eig = a.eigen();
    let tol = DEFINITENESS_TOL * a.max_abs();
    if eig.min() > tol {
        Signature::Positive
    } else if eig.max() < -tol {
        Signature::Negative
    } else if eig.min() < -tol && eig.max() > tol {
        Signature::Mixed
    } else {
        Signature::Singular
    }
}

fn omega_scalar(kind: SchemeKind, lambda: f64, kappa: f64, gamma: f64) -> f64 {
    match kind {
        SchemeKind::Exact => 0.5 / lambda,
        SchemeKind::SplitWFR => gamma.exp_m1() / (2.0 * gamma * lambda).exp_m1(),
        SchemeKind::SplitFRW => gamma.exp_m1() / (2.0 * gamma * lambda).exp_m1() * (2.0 * gamma * kappa).exp(),
    }
}

fn omega_diag(kind: SchemeKind, setup: &DecaySetup) -> Vec<f64> {
    let ctx = &setup.ctx;
    (0..ctx.dim())
        .map(|i| omega_scalar(kind, ctx.gamma_eigenvalues()[i], ctx.kappa()[i], setup.gamma))
        .collect()
}

/// `Ω`, `Ω^β` or `Ω^α`.
pub fn omega(kind: SchemeKind, setup: &DecaySetup) -> SymMatrix {
    let w = omega_diag(kind, setup);
    setup.ctx.spectral(|i| w[i])
}

/// `J_n(B) = e^{−nγΓ}(E_0⁻¹ + B C_π⁻¹(I − e^{−2nγΓ}))⁻¹e^{−nγΓ}`, evaluated without inverting `E_0`.
pub fn j_n(b: &SymMatrix, n: usize, setup: &DecaySetup) -> Result<SymMatrix> {
    setup.require_definite()?;
    let ctx = &setup.ctx;
    let nt = n as f64 * setup.gamma;
    let lam = ctx.gamma_eigenvalues();
    let tail = ctx.spectral(|i| -(-2.0 * nt * lam[i]).exp_m1());
    let g = b.matrix() * ctx.c_pi_inv().matrix() * tail.matrix();
    // E_0(I + G E_0)⁻¹ = [(I + E_0 Gᵀ)⁻¹ E_0]ᵀ
    let x = resolvent_solve(&(setup.e0.matrix() * g.transpose()), setup.e0.matrix())?.transpose();
    let decay = ctx.spectral(|i| (-nt * lam[i]).exp());
    Ok(decay.sandwich(&SymMatrix::from_unchecked(x)))
}

/// `φ_n(A) = ½[−log det(I + C_π⁻¹A) + Tr(C_π⁻¹A) + ε_0ᵀE_0⁻¹e^{nγC_π⁻¹}A C_π⁻¹A e^{nγC_π⁻¹}E_0⁻¹ε_0]`.
pub fn phi_n(a: &SymMatrix, n: usize, setup: &DecaySetup) -> Result<f64> {
    setup.require_definite()?;
    let ctx = &setup.ctx;
    let x = ctx.c_pi().inv_sqrt().sandwich(a).eigen().values;
    if x.iter().any(|&xi| xi <= -1.0) {
        return Err(Error::Domain("det(I + C_π⁻¹A) is not positive".into()));
    }
    let nt = n as f64 * setup.gamma;
    let grow = ctx.spectral(|i| (nt * ctx.kappa()[i]).exp());
    let v = grow.mul_vec(&setup.e0_solve(&setup.eps0)?);
    let av = a.mul_vec(&v);
    let quad = av.dot(&ctx.c_pi_inv().sym().mul_vec(&av));
    let trace_logdet: f64 = x.iter().map(|&xi| log1p_gap(xi)).sum();
    Ok(0.5 * (trace_logdet + quad))
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln φ_n(J_n(Ω_kind))`, evaluated in scaled form so that it stays finite when the KL underflows.
pub fn log_phi_j(kind: SchemeKind, n: usize, setup: &DecaySetup) -> Result<f64> {
    setup.require_definite()?;
    let ctx = &setup.ctx;
    let d = ctx.dim();
    let nt = n as f64 * setup.gamma;
    let lam = ctx.gamma_eigenvalues();
    let kap = ctx.kappa();
    let w = omega_diag(kind, setup);
    let g = ctx.spectral(|i| w[i] * kap[i] * -(-2.0 * nt * lam[i]).exp_m1());
    let e0m = setup.e0.matrix();
    let mut rhs = DMatrix::zeros(d, d + 1);
    rhs.view_mut((0, 0), (d, d)).copy_from(e0m);
    rhs.set_column(d, &setup.eps0);
    // (I + E_0 G)⁻¹[E_0 | ε_0] = [R | R E_0⁻¹ε_0]
    let sol = resolvent_solve(&(e0m * g.matrix()), &rhs)?;
    let basis = ctx.gamma_eigenvectors();
    let r = SymMatrix::from_unchecked(basis.transpose() * sol.columns(0, d) * basis);
    let u = basis.transpose() * sol.column(d);

    let mut terms = Vec::with_capacity(2 * d);
    let scale: Vec<f64> = (0..d).map(|i| kap[i].sqrt() * (-nt * (lam[i] - lam[0])).exp()).collect();
    let mut y = r.into_matrix();
    for i in 0..d {
        for j in 0..d {
            y[(i, j)] *= scale[i] * scale[j];
        }
    }
    let shift = 2.0 * nt * lam[0];
    for &yi in SymMatrix::from_unchecked(y).eigen().values.iter() {
        if yi == 0.0 {
            continue;
        }
        let xi = yi * (-shift).exp();
        if xi.abs() >= 1e-4 {
            if xi <= -1.0 {
                return Err(Error::Domain("det(I + C_π⁻¹J_n) is not positive".into()));
            }
            terms.push(log1p_gap(xi).ln());
        } else {
            let series = 0.5 - xi * (1.0 / 3.0 - xi * (0.25 - xi * 0.2));
            terms.push(2.0 * yi.abs().ln() - 2.0 * shift + series.ln());
        }
    }
    for i in 0..d {
        if u[i] != 0.0 {
            terms.push(-nt - 2.0 * nt * lam[i] + kap[i].ln() + 2.0 * u[i].abs().ln());
        }
    }
    Ok(log_sum_exp(&terms) - std::f64::consts::LN_2)
}

/// `φ_n(J_n(Ω_kind)) / φ_n(J_n(Ω))`.
pub fn kl_ratio(kind: SchemeKind, n: usize, setup: &DecaySetup) -> Result<f64> {
    Ok((log_phi_j(kind, n, setup)? - log_phi_j(SchemeKind::Exact, n, setup)?).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DefinitenessCase {
    /// `E_0 ≻ 0`.
    PositiveGap,
    /// `E_0⁻¹C_π ≺ −Ω, −Ω^β, −Ω^α`.
    DominatedNegativeGap,
    Neither,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Definiteness {
    pub case: DefinitenessCase,
    pub e0_min_eig: f64,
    pub e0_max_eig: f64,
    /// Largest eigenvalue of `C_π^{1/2}E_0⁻¹C_π^{1/2} + Ω_kind` for Exact, SplitWFR, SplitFRW
    /// (NaN unless `E_0 ≺ 0`).
    pub negative_margins: [f64; 3],
}

pub fn classify_definiteness(setup: &DecaySetup) -> Definiteness {
    let eig = setup.e0.eigen();
    let mut margins = [f64::NAN; 3];
    let case = match setup.e0_signature() {
        Signature::Positive => DefinitenessCase::PositiveGap,
        Signature::Negative => {
            let e0_inv = setup.e0.eigen().compose(|l| 1.0 / l);
            let core = setup.ctx.c_pi().sqrt().sandwich(&e0_inv);
            let mut all = true;
            for (k, kind) in SchemeKind::ALL.iter().enumerate() {
                let m = core.add(&omega(*kind, setup));
                let top = m.eigen().max();
                margins[k] = top;
                all &= top < -DEFINITENESS_TOL * m.max_abs();
            }
            if all {
                DefinitenessCase::DominatedNegativeGap
            } else {
                DefinitenessCase::Neither
            }
        }
        _ => DefinitenessCase::Neither,
    };
    Definiteness { case, e0_min_eig: eig.min(), e0_max_eig: eig.max(), negative_margins: margins }
}

/// Large-n limit of the split-to-exact KL ratio.
pub fn asymptotic_ratio(kind: SchemeKind, setup: &DecaySetup) -> Result<f64> {
    let class = classify_definiteness(setup);
    if class.case == DefinitenessCase::Neither {
        return Err(Error::Domain("E_0 is neither positive definite nor dominated negative definite".into()));
    }
    if kind == SchemeKind::Exact {
        return Ok(1.0);
    }
    if setup.eps0.iter().all(|&e| e == 0.0) {
        return Err(Error::DegenerateRatio("ε_0 = 0 makes both quadratic forms vanish".into()));
    }
    let ctx = &setup.ctx;
    let d = ctx.dim();
    let e0_inv = setup
        .e0
        .matrix()
        .clone()
        .try_inverse()
        .ok_or(Error::SingularConfiguration { eigenvalue: class.e0_min_eig })?;
    let v = &e0_inv * &setup.eps0;
    let d0 = &v * v.transpose() * ctx.c_pi().matrix();
    let lam = ctx.gamma_eigenvalues();
    let lead: Vec<usize> = (0..d).filter(|&i| lam[i] - lam[0] <= DEFINITENESS_TOL * lam[0]).collect();
    let form = |k: SchemeKind| -> Result<(f64, f64)> {
        let m = &e0_inv * ctx.c_pi().matrix() + omega(k, setup).matrix();
        let kinv = m.try_inverse().ok_or(Error::SingularConfiguration { eigenvalue: 0.0 })?;
        let n = &kinv * &d0 * &kinv;
        let mut total = 0.0;
        for &i in &lead {
            let p = ctx.gamma_eigenvectors().column(i);
            total += p.dot(&(&n * p));
        }
        Ok((total, kinv.norm().powi(2) * d0.norm()))
    };
    let (num, _) = form(kind)?;
    let (den, scale) = form(SchemeKind::Exact)?;
    if den.abs() <= 1e-24 * scale {
        return Err(Error::DegenerateRatio("leading quadratic form of the exact flow vanishes".into()));
    }
    Ok(num / den)
}

/// `min{KL(μ_t^FR‖π), KL(μ_t^W‖π)}`.
pub fn bound_min_rule(setup: &DecaySetup, t: f64) -> Result<f64> {
    let ctx = &setup.ctx;
    let fr = kl_gaussian(&fr_step(ctx, &setup.init, t)?, ctx.target())?;
    let w = kl_gaussian(&w_step(ctx, &setup.init, t)?, ctx.target())?;
    Ok(fr.min(w))
}

/// Exponential bound valid from `t0` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpBound {
    /// `inf_x log(π/μ_0)`.
    pub log_ratio_min: f64,
    /// `−inf_x log(π/μ_0) ≥ 0`.
    pub m: f64,
    pub t0: f64,
    pub rate: f64,
    pub kl0: f64,
    pub delta: f64,
}

impl SharpBound {
    pub fn at(&self, t: f64) -> Option<f64> {
        (t >= self.t0).then(|| self.kl0 * (-self.rate * (t - self.t0)).exp())
    }

    pub fn with_t0(self, t0: f64) -> Self {
        Self { t0, ..self }
    }
}

/// `inf_x log(π(x)/μ_0(x))`, or `None` when unbounded below.
pub fn log_ratio_infimum(setup: &DecaySetup) -> Option<f64> {
    let ctx = &setup.ctx;
    let a = ctx.c_pi_inv();
    let b = setup.init.cov().inverse();
    let p = b.sym().sub(a.sym());
    let m0 = setup.init.mean();
    let mp = ctx.target().mean();
    let r = b.sym().mul_vec(m0) - a.sym().mul_vec(mp);
    let constant = -0.5 * mp.dot(&a.sym().mul_vec(mp)) + 0.5 * m0.dot(&b.sym().mul_vec(m0))
        + 0.5 * (logdet(setup.init.cov()) - logdet(ctx.c_pi()));
    let eig = p.eigen();
    let tol = DEFINITENESS_TOL * p.max_abs().max(a.eig().max());
    let rt = eig.vectors.transpose() * &r;
    let mut value = constant;
    for i in 0..eig.values.len() {
        let pi = eig.values[i];
        if pi < -tol {
            return None;
        }
        if pi <= tol {
            if rt[i].abs() > DEFINITENESS_TOL * (1.0 + r.norm()) {
                return None;
            }
            continue;
        }
        value -= 0.5 * rt[i] * rt[i] / pi;
    }
    Some(value)
}

pub fn sharp_bound(setup: &DecaySetup, delta: f64) -> Result<Option<SharpBound>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let Some(log_ratio_min) = log_ratio_infimum(setup) else {
        return Ok(None);
    };
    let m = (-log_ratio_min).max(0.0);
    let t0 = if m > 0.0 { (m / delta.powi(3)).ln() } else { 0.0 };
    let rate = 2.0 / setup.ctx.c_pi().eig().max() + 2.0 - 3.0 * delta;
    let kl0 = kl_gaussian(&setup.init, setup.ctx.target())?;
    Ok(Some(SharpBound { log_ratio_min, m, t0, rate, kl0, delta }))
}

/// Sharp exponential bound at `t`, absent before `t0` or when no lower bound exists.
pub fn bound_sharp(setup: &DecaySetup, t: f64, delta: f64) -> Result<Option<f64>> {
    Ok(sharp_bound(setup, delta)?.and_then(|b| b.at(t)))
}

fn kappa_rate(curve: &WfrAlphaCurve, s: f64) -> f64 {
    2.0 * curve.constants.alpha_pi.min(wfr_alpha(curve, s)) + 1.0
}

/// `∫_0^t κ(s) ds` by composite Simpson with step at most [`JEFFREYS_STEP`].
pub fn kappa_integral(curve: &WfrAlphaCurve, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let panels = 2 * ((t / (2.0 * JEFFREYS_STEP)).ceil() as usize).max(1);
    let h = t / panels as f64;
    let mut sum = kappa_rate(curve, 0.0) + kappa_rate(curve, t);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * kappa_rate(curve, k as f64 * h);
    }
    sum * h / 3.0
}

/// `J(μ_0, π) exp(−∫_0^t κ(s) ds)` with `κ = 2 min(α_π, α_s) + 1`.
pub fn jeffreys_bound(setup: &DecaySetup, constants: &ConvexityConstants, t: f64) -> Result<f64> {
    let curve = WfrAlphaCurve::new(constants)?;
    let j0 = jeffreys_gaussian(&setup.init, setup.ctx.target())?;
    Ok(j0 * (-kappa_integral(&curve, t)).exp())
}

/// `J(μ_0, π) e^{−tκ(t)}` with `α_t` frozen at its value at `t`.
pub fn jeffreys_bound_fixed(setup: &DecaySetup, constants: &ConvexityConstants, t: f64) -> Result<f64> {
    let curve = WfrAlphaCurve::new(constants)?;
    let j0 = jeffreys_gaussian(&setup.init, setup.ctx.target())?;
    Ok(j0 * (-t * kappa_rate(&curve, t)).exp())
}
