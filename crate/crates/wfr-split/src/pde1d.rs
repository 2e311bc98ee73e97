//! Grid solver for the 1D WFR flow and its splittings with a general target.

use crate::divergences::DENSITY_FLOOR;
use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 64;

/// Cap on the default number of W substeps.
pub const MAX_SUBSTEPS: usize = 1_000_000;

/// Excluded mass above which a diagnostic is flagged unreliable.
pub const EXCLUDED_MASS_TOL: f64 = 1e-6;

/// Uniform grid on `[x_min, x_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::Domain(format!("invalid interval [{x_min}, {x_max}]")));
        }
        if n_points < MIN_POINTS {
            return Err(Error::Domain(format!("need at least {MIN_POINTS} points, got {n_points}")));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    /// Union of `[m − n_sigma·s, m + n_sigma·s]` over `(m, s)` pairs.
    pub fn covering(parts: &[(f64, f64)], n_sigma: f64, n_points: usize) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Domain("no laws to cover".into()));
        }
        let lo = parts.iter().map(|&(m, s)| m - n_sigma * s).fold(f64::INFINITY, f64::min);
        let hi = parts.iter().map(|&(m, s)| m + n_sigma * s).fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, n_points)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Composite trapezoid rule.
    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n_points, "field length does not match grid");
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        self.h() * (inner + 0.5 * (f[0] + f[f.len() - 1]))
    }
}

/// Normalized nonnegative density sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    values: Vec<f64>,
    clamped_mass: f64,
}

impl DensityField {
    /// Clamps negatives to zero and normalizes.
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Domain(format!("{} values for {} nodes", values.len(), grid.n_points())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("density has non-finite values".into()));
        }
        Self::normalized(grid, values, 0.0)
    }

    /// Density proportional to `exp(log_values)`.
    pub fn from_log_values(grid: Grid1D, log_values: &[f64]) -> Result<Self> {
        if log_values.len() != grid.n_points() {
            return Err(Error::Domain(format!("{} values for {} nodes", log_values.len(), grid.n_points())));
        }
        let top = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::DegenerateDensity("log density has no finite maximum".into()));
        }
        Self::normalized(grid, log_values.iter().map(|l| (l - top).exp()).collect(), 0.0)
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    fn normalized(grid: Grid1D, mut values: Vec<f64>, clamped_before: f64) -> Result<Self> {
        let negative: Vec<f64> = values.iter().map(|&v| v.min(0.0).abs()).collect();
        let clamped = grid.trapezoid(&negative);
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        let mass = grid.trapezoid(&values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::DegenerateDensity(format!("total mass is {mass:e}")));
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(Self { grid, values, clamped_mass: clamped_before + clamped / mass })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    /// Accumulated mass removed by clamping negative values.
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w: Vec<f64> = self.grid.nodes().into_iter().zip(&self.values).map(|(x, &v)| v * f(x)).collect();
        self.grid.trapezoid(&w)
    }

    /// Mean and variance.
    pub fn moments(&self) -> (f64, f64) {
        let m = self.expectation(|x| x);
        (m, self.expectation(|x| (x - m) * (x - m)))
    }

    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Domain("densities live on different grids".into()));
        }
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.grid.trapezoid(&d))
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub var: f64,
}

/// Target law `π ∝ e^{−V_π}` on the line.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetSpec1D {
    Gaussian { mean: f64, var: f64 },
    Mixture(Vec<MixtureComponent>),
}

fn check_component(mean: f64, var: f64) -> Result<()> {
    if !mean.is_finite() || !(var > 0.0 && var.is_finite()) {
        return Err(Error::NumericInput(format!("invalid component mean {mean}, variance {var}")));
    }
    Ok(())
}

fn gauss_log(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean) * (x - mean) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

impl TargetSpec1D {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        check_component(mean, var)?;
        Ok(Self::Gaussian { mean, var })
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture has no components".into()));
        }
        for c in &components {
            check_component(c.mean, c.var)?;
            if c.weight.is_nan() || c.weight <= 0.0 {
                return Err(Error::Domain(format!("mixture weight {} is not positive", c.weight)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("mixture weights sum to {total}")));
        }
        Ok(Self::Mixture(components))
    }

    /// `0.5·N(−4, 1) + 0.5·N(4, 1)`.
    pub fn demo_mixture() -> Self {
        Self::Mixture(vec![
            MixtureComponent { weight: 0.5, mean: -4.0, var: 1.0 },
            MixtureComponent { weight: 0.5, mean: 4.0, var: 1.0 },
        ])
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, var } => gauss_log(x, *mean, *var),
            Self::Mixture(cs) => {
                let logs: Vec<f64> = cs.iter().map(|c| c.weight.ln() + gauss_log(x, c.mean, c.var)).collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
            }
        }
    }

    /// `∇log π(x)`.
    pub fn score(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, var } => -(x - mean) / var,
            Self::Mixture(cs) => {
                let logs: Vec<f64> = cs.iter().map(|c| c.weight.ln() + gauss_log(x, c.mean, c.var)).collect();
                let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut num = 0.0;
                let mut den = 0.0;
                for (c, l) in cs.iter().zip(&logs) {
                    let w = (l - top).exp();
                    num += w * -(x - c.mean) / c.var;
                    den += w;
                }
                num / den
            }
        }
    }

    /// Overall mean and standard deviation.
    pub fn mean_sd(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, var } => (*mean, var.sqrt()),
            Self::Mixture(cs) => {
                let m: f64 = cs.iter().map(|c| c.weight * c.mean).sum();
                let second: f64 = cs.iter().map(|c| c.weight * (c.var + c.mean * c.mean)).sum();
                (m, (second - m * m).sqrt())
            }
        }
    }

    pub fn discretize(&self, grid: Grid1D) -> Result<DensityField> {
        let logs: Vec<f64> = grid.nodes().into_iter().map(|x| self.log_density(x)).collect();
        DensityField::from_log_values(grid, &logs)
    }
}

/// `B(z) = z / (e^z − 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Exponentially fitted Fokker–Planck generator `μ ↦ ∂_x(∂_xμ + μ∂_xV_π)` with zero-flux ends.
#[derive(Clone, Debug)]
pub struct WGenerator {
    grid: Grid1D,
    /// Coefficient of `μ_{i+1}` in row `i`.
    upper: Vec<f64>,
    diag: Vec<f64>,
    /// Coefficient of `μ_{i−1}` in row `i`.
    lower: Vec<f64>,
}

impl WGenerator {
    pub fn new(target: &TargetSpec1D, grid: Grid1D) -> Self {
        let n = grid.n_points();
        let h2 = grid.h() * grid.h();
        let v: Vec<f64> = grid.nodes().into_iter().map(|x| -target.log_density(x)).collect();
        let mut upper = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; n];
        for i in 0..n - 1 {
            let a = v[i + 1] - v[i];
            let bp = bernoulli(-a) / h2;
            let bm = bernoulli(a) / h2;
            // F_{i+½} = −h⁻¹[B(−a)μ_{i+1} − B(a)μ_i]
            upper[i] += bp;
            diag[i] -= bm;
            diag[i + 1] -= bp;
            lower[i + 1] += bm;
        }
        Self { grid, upper, diag, lower }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Transposed generator, the backward equation `u ↦ ∂_x²u − ∂_xV_π ∂_xu` acting on functions.
    pub fn adjoint(&self) -> Self {
        let n = self.diag.len();
        let mut upper = vec![0.0; n];
        let mut lower = vec![0.0; n];
        upper[..n - 1].copy_from_slice(&self.lower[1..]);
        lower[1..].copy_from_slice(&self.upper[..n - 1]);
        Self { grid: self.grid, upper, diag: self.diag.clone(), lower }
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * u[i];
                if i + 1 < n {
                    s += self.upper[i] * u[i + 1];
                }
                if i > 0 {
                    s += self.lower[i] * u[i - 1];
                }
                s
            })
            .collect()
    }

    /// Solves `(I − θkL)x = r`.
    fn solve_shifted(&self, theta_k: f64, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let b0 = 1.0 - theta_k * self.diag[0];
        c[0] = -theta_k * self.upper[0] / b0;
        d[0] = r[0] / b0;
        for i in 1..n {
            let a = -theta_k * self.lower[i];
            let b = 1.0 - theta_k * self.diag[i] - a * c[i - 1];
            c[i] = if i + 1 < n { -theta_k * self.upper[i] / b } else { 0.0 };
            d[i] = (r[i] - a * d[i - 1]) / b;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        d
    }

    fn implicit_euler(&self, u: &[f64], k: f64) -> Vec<f64> {
        self.solve_shifted(k, u)
    }

    fn crank_nicolson(&self, u: &[f64], k: f64) -> Vec<f64> {
        let lu = self.apply(u);
        let r: Vec<f64> = u.iter().zip(&lu).map(|(a, b)| a + 0.5 * k * b).collect();
        self.solve_shifted(0.5 * k, &r)
    }

    /// Advances a signed field by time `t` in `n_substeps` Crank–Nicolson steps, the first one replaced
    /// by two implicit Euler half steps.
    pub fn propagate(&self, u: &[f64], t: f64, n_substeps: usize) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
        }
        if u.len() != self.grid.n_points() {
            return Err(Error::Domain("field length does not match grid".into()));
        }
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        if n_substeps == 0 {
            return Err(Error::StepSize("at least one substep is required".into()));
        }
        let k = t / n_substeps as f64;
        let mut cur = self.implicit_euler(&self.implicit_euler(u, 0.5 * k), 0.5 * k);
        for _ in 1..n_substeps {
            cur = self.crank_nicolson(&cur, k);
        }
        Ok(cur)
    }
}

/// `ceil(γ / (h²/4))` capped at [`MAX_SUBSTEPS`].
pub fn default_substeps(grid: &Grid1D, gamma: f64) -> usize {
    let bound = grid.h() * grid.h() / 4.0;
    ((gamma / bound).ceil() as usize).clamp(1, MAX_SUBSTEPS)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("step must be nonnegative, got {gamma}")));
    }
    Ok(())
}

/// `S_FR(γ, v) ∝ π^{1−e^{−γ}} v^{e^{−γ}}`.
pub fn fr_step_grid(target: &TargetSpec1D, v: &DensityField, gamma: f64) -> Result<DensityField> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(v.clone());
    }
    let w = (-gamma).exp();
    let keep = -(-gamma).exp_m1();
    let logs: Vec<f64> = v
        .grid
        .nodes()
        .into_iter()
        .zip(&v.values)
        .map(|(x, &vi)| if vi > 0.0 { keep * target.log_density(x) + w * vi.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut out = DensityField::from_log_values(v.grid, &logs)?;
    out.clamped_mass += v.clamped_mass;
    Ok(out)
}

/// W flow over time `γ` on the grid.
pub fn w_step_grid(target: &TargetSpec1D, v: &DensityField, gamma: f64, n_substeps: usize) -> Result<DensityField> {
    w_step_with(&WGenerator::new(target, v.grid), v, gamma, n_substeps)
}

pub fn w_step_with(gen: &WGenerator, v: &DensityField, gamma: f64, n_substeps: usize) -> Result<DensityField> {
    check_gamma(gamma)?;
    if gen.grid != v.grid {
        return Err(Error::Domain("generator and density live on different grids".into()));
    }
    if gamma == 0.0 {
        return Ok(v.clone());
    }
    let out = gen.propagate(&v.values, gamma, n_substeps)?;
    DensityField::normalized(v.grid, out, v.clamped_mass)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridSplitOrder {
    WThenFR,
    FRThenW,
}

/// `n` split steps of size `γ`.
pub fn iterate_split_grid(
    target: &TargetSpec1D,
    init: &DensityField,
    order: GridSplitOrder,
    gamma: f64,
    n: usize,
    substeps: usize,
) -> Result<DensityField> {
    let gen = WGenerator::new(target, init.grid);
    let mut v = init.clone();
    for _ in 0..n {
        v = match order {
            GridSplitOrder::WThenFR => fr_step_grid(target, &w_step_with(&gen, &v, gamma, substeps)?, gamma)?,
            GridSplitOrder::FRThenW => w_step_with(&gen, &fr_step_grid(target, &v, gamma)?, gamma, substeps)?,
        };
    }
    Ok(v)
}

/// Strang composition `FR(dt/2)∘W(dt)∘FR(dt/2)` up to time `t`.
pub fn wfr_reference_grid(target: &TargetSpec1D, mu0: &DensityField, t: f64, dt: f64) -> Result<DensityField> {
    check_gamma(t)?;
    if !(dt > 0.0 && dt <= 1e-3) {
        return Err(Error::StepSize(format!("reference step must lie in (0, 1e-3], got {dt}")));
    }
    if t == 0.0 {
        return Ok(mu0.clone());
    }
    let n = (t / dt).ceil() as usize;
    let k = t / n as f64;
    let gen = WGenerator::new(target, mu0.grid);
    let mut v = fr_step_grid(target, mu0, 0.5 * k)?;
    for step in 0..n {
        let next = if step == 0 {
            gen.propagate(&v.values, k, 1)?
        } else {
            gen.crank_nicolson(&v.values, k)
        };
        v = DensityField::normalized(v.grid, next, v.clamped_mass)?;
        let fr = if step + 1 == n { 0.5 * k } else { k };
        v = fr_step_grid(target, &v, fr)?;
    }
    Ok(v)
}

/// Covariance diagnostic with the mass excluded from quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovDiagnostic {
    pub value: f64,
    pub excluded_mass: f64,
    pub reliable: bool,
}

/// `g = log(ν/π)` and `|∇g|²` on the nodes where `ν` is above the density floor.
struct LogRatio {
    g: Vec<f64>,
    score_sq: Vec<f64>,
    weight: Vec<f64>,
    excluded_mass: f64,
}

fn log_ratio(nu: &DensityField, target: &TargetSpec1D) -> LogRatio {
    let grid = nu.grid;
    let n = grid.n_points();
    let h = grid.h();
    let xs = grid.nodes();
    let valid: Vec<bool> = nu.values.iter().map(|&v| v >= DENSITY_FLOOR).collect();
    let ln: Vec<f64> = nu.values.iter().map(|&v| if v >= DENSITY_FLOOR { v.ln() } else { 0.0 }).collect();
    let mut g = vec![0.0; n];
    let mut score_sq = vec![0.0; n];
    let mut weight = vec![0.0; n];
    let mut dropped = vec![0.0; n];
    for i in 0..n {
        if !valid[i] {
            dropped[i] = nu.values[i];
            continue;
        }
        let left = i > 0 && valid[i - 1];
        let right = i + 1 < n && valid[i + 1];
        let d = match (left, right) {
            (true, true) => (ln[i + 1] - ln[i - 1]) / (2.0 * h),
            (false, true) => (ln[i + 1] - ln[i]) / h,
            (true, false) => (ln[i] - ln[i - 1]) / h,
            (false, false) => 0.0,
        };
        let s = d - target.score(xs[i]);
        g[i] = ln[i] - target.log_density(xs[i]);
        score_sq[i] = s * s;
        weight[i] = nu.values[i];
    }
    LogRatio { g, score_sq, weight, excluded_mass: grid.trapezoid(&dropped) }
}

impl LogRatio {
    fn mean(&self, grid: &Grid1D, f: &[f64]) -> f64 {
        let w: Vec<f64> = f.iter().zip(&self.weight).map(|(a, b)| a * b).collect();
        grid.trapezoid(&w) / grid.trapezoid(&self.weight)
    }

    fn cov(&self, grid: &Grid1D, a: &[f64], b: &[f64]) -> f64 {
        let ma = self.mean(grid, a);
        let mb = self.mean(grid, b);
        let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        self.mean(grid, &prod)
    }
}

/// `Cov_ν(log(ν/π), |∇log(ν/π)|²)`.
pub fn cov_diagnostic(nu: &DensityField, target: &TargetSpec1D) -> CovDiagnostic {
    let lr = log_ratio(nu, target);
    let value = lr.cov(&nu.grid, &lr.g, &lr.score_sq);
    CovDiagnostic { value, excluded_mass: lr.excluded_mass, reliable: lr.excluded_mass <= EXCLUDED_MASS_TOL }
}

/// Terms of `d/dγ KL` along one W-FR step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlDecayTerms {
    /// `−I(ν‖π)`.
    pub fisher_term: f64,
    /// `−Var_ν(log ν/π)`.
    pub variance_term: f64,
    /// `(e^γ − 1)Cov_ν(log ν/π, |∇log ν/π|²)`.
    pub perturbation_term: f64,
    pub excluded_mass: f64,
    pub reliable: bool,
}

impl KlDecayTerms {
    pub fn total(&self) -> f64 {
        self.fisher_term + self.variance_term + self.perturbation_term
    }
}

pub fn kl_decay_rhs_wfr_split(nu: &DensityField, target: &TargetSpec1D, gamma: f64) -> Result<KlDecayTerms> {
    check_gamma(gamma)?;
    let lr = log_ratio(nu, target);
    let grid = nu.grid;
    let fisher = lr.mean(&grid, &lr.score_sq);
    let var = lr.cov(&grid, &lr.g, &lr.g).max(0.0);
    let cov = lr.cov(&grid, &lr.g, &lr.score_sq);
    Ok(KlDecayTerms {
        fisher_term: -fisher,
        variance_term: -var,
        perturbation_term: gamma.exp_m1() * cov,
        excluded_mass: lr.excluded_mass,
        reliable: lr.excluded_mass <= EXCLUDED_MASS_TOL,
    })
}

/// `η_τ = S_W(τ, S_FR(γ, μ_0))` at `τ_j = jγ/n_quad`, `j = 0..=n_quad`.
pub fn frw_trajectory(target: &TargetSpec1D, mu0: &DensityField, gamma: f64, n_quad: usize) -> Result<Vec<DensityField>> {
    check_gamma(gamma)?;
    if n_quad == 0 {
        return Err(Error::Domain("need at least one panel".into()));
    }
    let gen = WGenerator::new(target, mu0.grid);
    let dtau = gamma / n_quad as f64;
    let sub = default_substeps(&mu0.grid, dtau);
    let mut cur = fr_step_grid(target, mu0, gamma)?;
    let mut out = Vec::with_capacity(n_quad + 1);
    out.push(cur.clone());
    for _ in 0..n_quad {
        cur = w_step_with(&gen, &cur, dtau, sub)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// FR-W perturbation integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrwPerturbation {
    /// `∫_0^γ Cov_{η_τ}(S_W(γ−τ, g(η_γ)), |∇g(η_τ)|²) dτ`.
    pub integral: f64,
    /// `−integral`, its contribution to `d/dγ KL(η_γ‖π)`.
    pub perturbation_term: f64,
    pub excluded_mass: f64,
    pub reliable: bool,
}

/// How `S_W(γ − τ, ·)` acts on the signed field `g(η_γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FieldPropagation {
    /// Transposed generator, so that `∫ g S_W(s, f) = ∫ S_W*(s, g) f`.
    #[default]
    Adjoint,
    /// Fokker–Planck generator applied to `g` as if it were a density.
    Forward,
}

/// Simpson quadrature of the FR-W covariance integrand over a trajectory from [`frw_trajectory`].
pub fn frw_perturbation_grid(
    traj: &[DensityField],
    target: &TargetSpec1D,
    gamma: f64,
    n_quad: usize,
) -> Result<FrwPerturbation> {
    frw_perturbation_grid_with(traj, target, gamma, n_quad, FieldPropagation::Adjoint)
}

pub fn frw_perturbation_grid_with(
    traj: &[DensityField],
    target: &TargetSpec1D,
    gamma: f64,
    n_quad: usize,
    propagation: FieldPropagation,
) -> Result<FrwPerturbation> {
    check_gamma(gamma)?;
    if n_quad < 4 || n_quad % 2 == 1 {
        return Err(Error::Domain(format!("n_quad must be even and at least 4, got {n_quad}")));
    }
    if traj.len() != n_quad + 1 {
        return Err(Error::Domain(format!("trajectory has {} points, expected {}", traj.len(), n_quad + 1)));
    }
    let grid = traj[0].grid;
    if traj.iter().any(|d| d.grid != grid) {
        return Err(Error::Domain("trajectory densities live on different grids".into()));
    }
    let gen = match propagation {
        FieldPropagation::Adjoint => WGenerator::new(target, grid).adjoint(),
        FieldPropagation::Forward => WGenerator::new(target, grid),
    };
    let last = log_ratio(&traj[n_quad], target);
    let dtau = gamma / n_quad as f64;
    let mut sum = 0.0;
    let mut excluded: f64 = last.excluded_mass;
    for (j, eta) in traj.iter().enumerate() {
        let lr = log_ratio(eta, target);
        excluded = excluded.max(lr.excluded_mass);
        let remaining = gamma - j as f64 * dtau;
        let pushed = gen.propagate(&last.g, remaining, default_substeps(&grid, remaining).max(1))?;
        let c = lr.cov(&grid, &pushed, &lr.score_sq);
        let w = if j == 0 || j == n_quad { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * c;
    }
    let integral = sum * dtau / 3.0;
    Ok(FrwPerturbation {
        integral,
        perturbation_term: -integral,
        excluded_mass: excluded,
        reliable: excluded <= EXCLUDED_MASS_TOL,
    })
}
