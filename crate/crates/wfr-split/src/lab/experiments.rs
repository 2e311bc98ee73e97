//! Figure and demo experiments.

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::decay::{
    asymptotic_ratio, bound_min_rule, classify_definiteness, jeffreys_bound, jeffreys_bound_fixed, kl_ratio, log_phi_j,
    sharp_bound, DecaySetup, SchemeKind,
};
use crate::divergences::{jeffreys_gaussian, kl_gaussian, kl_grid};
use crate::error::{Error, Result};
use crate::flows::{split_step, wfr_exact, SplitOrder, WfrContext};
use crate::linalg::GaussianDist;
use crate::logconcavity::{gaussian_constants, true_alpha_gaussian, wfr_alpha, WfrAlphaCurve};
use crate::pde1d::{
    cov_diagnostic, default_substeps, fr_step_grid, w_step_with, wfr_reference_grid, Grid1D, MixtureComponent,
    TargetSpec1D, WGenerator,
};

use super::config::{fmt_num, Resolver};
use super::output::{Cell, Table};

/// Tables plus derived quantities for the header.
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub derived: Vec<(String, String)>,
}

pub(crate) fn par_map<T, U, F>(pool: &ThreadPool, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn context(target: GaussianDist) -> Result<WfrContext> {
    WfrContext::new(target)
}

fn figure1_panel(pool: &ThreadPool, name: &str, target: GaussianDist, init: GaussianDist, gammas: &[f64]) -> Result<Table> {
    let ctx = context(target)?;
    ctx.check_init(&init)?;
    let rows = par_map(pool, gammas, |&g| {
        let exact = kl_gaussian(&wfr_exact(&ctx, &init, g)?, ctx.target())?;
        let wfr = kl_gaussian(&split_step(&ctx, &init, SplitOrder::WThenFR, g)?, ctx.target())?;
        let frw = kl_gaussian(&split_step(&ctx, &init, SplitOrder::FRThenW, g)?, ctx.target())?;
        Ok(vec![g.into(), exact.into(), wfr.into(), frw.into(), (wfr - exact).into(), (frw - exact).into()])
    })?;
    let mut t = Table::new(name, &["gamma", "kl_exact", "kl_wfr_split", "kl_frw_split", "diff_wfr", "diff_frw"]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

/// One-step KL of the exact flow and both splittings over a log-spaced γ grid.
pub fn run_figure1(r: &mut Resolver, pool: &ThreadPool) -> Result<ExperimentOutput> {
    let m_pi = r.list("m_pi", &[20.0])?;
    let m0 = r.list("m0", &[0.0])?;
    let d = m_pi.len();
    if m0.len() != d {
        return Err(Error::Config(format!("m0 has {} entries, m_pi has {d}", m0.len())));
    }
    let c_pi_l = r.covariance("c_pi_left", &[100.0], d)?;
    let c0_l = r.covariance("c0_left", &[1.0], d)?;
    let c_pi_r = r.covariance("c_pi_right", &[1.0], d)?;
    let c0_r = r.covariance("c0_right", &[100.0], d)?;
    let lo = r.positive("gamma_min", 1e-3)?;
    let hi = r.positive("gamma_max", 10.0)?;
    let n = r.usize("n_gamma", 400, 1)?;
    if hi < lo {
        return Err(Error::Config(format!("gamma_max {hi} is below gamma_min {lo}")));
    }
    let gammas = log_space(lo, hi, n);
    let mp = nalgebra::DVector::from_vec(m_pi);
    let mz = nalgebra::DVector::from_vec(m0);
    let left = figure1_panel(
        pool,
        "left",
        GaussianDist::new(mp.clone(), c_pi_l)?,
        GaussianDist::new(mz.clone(), c0_l)?,
        &gammas,
    )?;
    let right = figure1_panel(pool, "right", GaussianDist::new(mp, c_pi_r)?, GaussianDist::new(mz, c0_r)?, &gammas)?;
    Ok(ExperimentOutput { tables: vec![left, right], derived: vec![] })
}

/// Split-to-exact KL ratios over `n = 1..N` and their large-n limits.
pub fn run_figure2(r: &mut Resolver, pool: &ThreadPool) -> Result<ExperimentOutput> {
    let c_pi_default: Vec<f64> = (1..=10).map(f64::from).collect();
    let c0_default: Vec<f64> = c_pi_default.iter().map(|c| c + 1.0).collect();
    let target = r.gaussian("m_pi", "c_pi", &[1.0; 10], &c_pi_default)?;
    let init = r.gaussian("m0", "c0", &[0.0; 10], &c0_default)?;
    if init.dim() != target.dim() {
        return Err(Error::Config("m0 and m_pi differ in dimension".into()));
    }
    let gamma = r.positive("gamma", 0.7)?;
    let n_max = r.usize("n", 400, 1)?;
    let setup = DecaySetup::new(context(target)?, init, gamma)?;
    let mut derived = Vec::new();
    let limits: Vec<Option<f64>> = [SchemeKind::SplitWFR, SchemeKind::SplitFRW]
        .iter()
        .map(|&k| match asymptotic_ratio(k, &setup) {
            Ok(v) => Some(v),
            Err(e) => {
                derived.push((format!("asymptotic_{}_unavailable", kind_name(k)), e.to_string()));
                None
            }
        })
        .collect();
    for (k, l) in ["wfr", "frw"].iter().zip(&limits) {
        if let Some(v) = l {
            derived.push((format!("asymptotic_{k}"), fmt_num(*v)));
        }
    }
    let ns: Vec<usize> = (1..=n_max).collect();
    let rows = par_map(pool, &ns, |&n| {
        let logs: Vec<f64> = SchemeKind::ALL.iter().map(|&k| log_phi_j(k, n, &setup)).collect::<Result<_>>()?;
        Ok(vec![
            n.into(),
            (n as f64 * gamma).into(),
            (logs[1] - logs[0]).exp().into(),
            (logs[2] - logs[0]).exp().into(),
            limits[0].into(),
            limits[1].into(),
            logs[0].exp().into(),
            logs[1].exp().into(),
            logs[2].exp().into(),
        ])
    })?;
    let mut t = Table::new(
        "ratio",
        &["n", "t", "ratio_wfr", "ratio_frw", "asymptotic_wfr", "asymptotic_frw", "kl_exact", "kl_wfr_split", "kl_frw_split"],
    );
    rows.into_iter().for_each(|row| t.push(row));
    Ok(ExperimentOutput { tables: vec![t], derived })
}

fn kind_name(k: SchemeKind) -> &'static str {
    match k {
        SchemeKind::Exact => "exact",
        SchemeKind::SplitWFR => "wfr",
        SchemeKind::SplitFRW => "frw",
    }
}

fn table_label(x: f64) -> String {
    format!("{x}")
}

/// Theorem log-concavity curve against the exact Gaussian precision for several target variances.
pub fn run_figure3(r: &mut Resolver, pool: &ThreadPool) -> Result<ExperimentOutput> {
    let c_pis = r.list("c_pi", &[100.0, 5.0, 2.1])?;
    let c0 = r.positive("c0", 1.0)?;
    let m = r.f64("m", 0.0)?;
    let delta = r.f64("delta", 0.5)?;
    let deltas = r.list("delta_sweep", &[0.1, 0.3, 0.5, 0.7, 0.9])?;
    let t_max = r.positive("t_max", 20.0)?;
    let n_t = r.usize("n_t", 500, 1)?;
    let ts = lin_space(0.0, t_max, n_t);
    let init = GaussianDist::scalar(m, c0)?;
    let mut sens = Table::new(
        "delta_sensitivity",
        &["c_pi", "delta", "admissible", "c0_constant", "alpha_limit", "max_excess_over_true"],
    );
    let mut adm = Table::new("admissibility", &["c_pi", "admissible", "b_squared", "half_alpha_pi", "reason"]);
    let mut tables = Vec::new();
    for &c_pi in &c_pis {
        if c_pi <= 0.0 {
            return Err(Error::Config(format!("c_pi entries must be positive, got {c_pi}")));
        }
        let target = GaussianDist::scalar(m, c_pi)?;
        let constants = match gaussian_constants(&target, &init, delta) {
            Ok(c) => c,
            Err(Error::Hypothesis(msg)) => {
                adm.push(vec![c_pi.into(), false.into(), Cell::Empty, (0.5 / c_pi).into(), msg.into()]);
                continue;
            }
            Err(e) => return Err(e),
        };
        let b2 = constants.b * constants.b;
        match WfrAlphaCurve::new(&constants) {
            Ok(curve) => {
                adm.push(vec![c_pi.into(), true.into(), b2.into(), (constants.alpha_pi / 2.0).into(), "".into()]);
                let ctx = context(target)?;
                let rows = par_map(pool, &ts, |&t| {
                    Ok(vec![t.into(), wfr_alpha(&curve, t).into(), true_alpha_gaussian(&ctx, &init, t)?.into()])
                })?;
                let mut tab = Table::new(&format!("c_pi={}", table_label(c_pi)), &["t", "alpha_theorem", "alpha_true"]);
                rows.into_iter().for_each(|row| tab.push(row));
                tables.push(tab);
            }
            Err(Error::Hypothesis(msg)) => {
                adm.push(vec![c_pi.into(), false.into(), b2.into(), (constants.alpha_pi / 2.0).into(), msg.into()]);
            }
            Err(e) => return Err(e),
        }
    }
    for &c_pi in &c_pis {
        let target = GaussianDist::scalar(m, c_pi)?;
        let ctx = context(target.clone())?;
        let truth: Vec<f64> = ts.iter().map(|&t| true_alpha_gaussian(&ctx, &init, t)).collect::<Result<_>>()?;
        for &d in &deltas {
            let curve = gaussian_constants(&target, &init, d).and_then(|c| WfrAlphaCurve::new(&c).map(|k| (c, k)));
            match curve {
                Ok((c, k)) => {
                    let excess = ts.iter().zip(&truth).map(|(&t, a)| wfr_alpha(&k, t) - a).fold(f64::NEG_INFINITY, f64::max);
                    sens.push(vec![c_pi.into(), d.into(), true.into(), c.c0.into(), k.limit().into(), excess.into()]);
                }
                Err(Error::Hypothesis(_)) | Err(Error::Domain(_)) => {
                    sens.push(vec![c_pi.into(), d.into(), false.into(), Cell::Empty, Cell::Empty, Cell::Empty]);
                }
                Err(e) => return Err(e),
            }
        }
    }
    tables.insert(0, adm);
    tables.push(sens);
    Ok(ExperimentOutput { tables, derived: vec![] })
}

/// Exact KL and Jeffreys decay against the min-rule, sharp and Jeffreys bounds.
pub fn run_figure4(r: &mut Resolver, pool: &ThreadPool) -> Result<ExperimentOutput> {
    let target = r.gaussian("m_pi", "c_pi", &[20.0], &[100.0])?;
    let init = r.gaussian("m0", "c0", &[0.0], &[1.0])?;
    let delta_sharp = r.f64("delta_sharp", 0.1)?;
    let delta = r.f64("delta", 0.5)?;
    let t_max = r.positive("t_max", 20.0)?;
    let n_t = r.usize("n_t", 200, 1)?;
    let t0_override = r.opt_f64("t0")?;
    let ctx = context(target)?;
    let setup = DecaySetup::new(ctx.clone(), init.clone(), 1.0)?;
    let mut derived = Vec::new();
    let sharp = sharp_bound(&setup, delta_sharp)?.map(|b| match t0_override {
        Some(t0) => b.with_t0(t0),
        None => b,
    });
    match &sharp {
        Some(b) => {
            derived.push(("sharp_m".into(), fmt_num(b.m)));
            derived.push(("sharp_t0".into(), fmt_num(b.t0)));
            derived.push(("sharp_rate".into(), fmt_num(b.rate)));
        }
        None => derived.push(("sharp_bound".into(), "absent: log(π/μ_0) is unbounded below".into())),
    }
    let curve = match gaussian_constants(ctx.target(), &init, delta).and_then(|c| WfrAlphaCurve::new(&c)) {
        Ok(c) => Some(c),
        Err(e @ Error::Hypothesis(_)) => {
            derived.push(("jeffreys_bound".into(), format!("absent: {e}")));
            None
        }
        Err(e) => return Err(e),
    };
    let ts = lin_space(0.0, t_max, n_t);
    let rows = par_map(pool, &ts, |&t| {
        let mu = wfr_exact(&ctx, &init, t)?;
        let kl = kl_gaussian(&mu, ctx.target())?;
        let j = jeffreys_gaussian(&mu, ctx.target())?;
        let left = vec![t.into(), kl.into(), bound_min_rule(&setup, t)?.into(), sharp.and_then(|b| b.at(t)).into()];
        let (jb, jf) = match &curve {
            Some(c) => (
                Some(jeffreys_bound(&setup, &c.constants, t)?),
                Some(jeffreys_bound_fixed(&setup, &c.constants, t)?),
            ),
            None => (None, None),
        };
        let right = vec![t.into(), j.into(), jb.into(), jf.into()];
        Ok((left, right))
    })?;
    let mut left = Table::new("left", &["t", "kl_exact", "bound_min_rule", "bound_sharp"]);
    let mut right = Table::new("right", &["t", "jeffreys_exact", "jeffreys_bound", "jeffreys_bound_fixed"]);
    for (l, rr) in rows {
        left.push(l);
        right.push(rr);
    }
    Ok(ExperimentOutput { tables: vec![left, right], derived })
}

/// Definiteness case, asymptotic ratios and the empirical ratio at step `n` for one configuration.
pub fn run_ratio(r: &mut Resolver, _pool: &ThreadPool) -> Result<ExperimentOutput> {
    let target = r.gaussian("m_pi", "c_pi", &[20.0], &[100.0])?;
    let init = r.gaussian("m0", "c0", &[0.0], &[1.0])?;
    let gamma = r.positive("gamma", 0.7)?;
    let n = r.usize("n", 400, 1)?;
    let setup = DecaySetup::new(context(target)?, init, gamma)?;
    let class = classify_definiteness(&setup);
    let mut def = Table::new(
        "definiteness",
        &["case", "e0_min_eig", "e0_max_eig", "margin_exact", "margin_wfr", "margin_frw"],
    );
    let m = class.negative_margins;
    let margin = |x: f64| if x.is_nan() { Cell::Empty } else { Cell::Num(x) };
    def.push(vec![
        format!("{:?}", class.case).into(),
        class.e0_min_eig.into(),
        class.e0_max_eig.into(),
        margin(m[0]),
        margin(m[1]),
        margin(m[2]),
    ]);
    let mut tab = Table::new("ratio", &["scheme", "asymptotic_ratio", "ratio_at_n", "gap", "note"]);
    for kind in [SchemeKind::SplitWFR, SchemeKind::SplitFRW] {
        let emp = kl_ratio(kind, n, &setup).ok();
        match asymptotic_ratio(kind, &setup) {
            Ok(lim) => tab.push(vec![
                kind_name(kind).into(),
                lim.into(),
                emp.into(),
                emp.map(|e| (e - lim).abs()).into(),
                "".into(),
            ]),
            Err(e) => tab.push(vec![kind_name(kind).into(), Cell::Empty, emp.into(), Cell::Empty, e.to_string().into()]),
        }
    }
    Ok(ExperimentOutput { tables: vec![def, tab], derived: vec![] })
}

fn grid_target(r: &mut Resolver) -> Result<TargetSpec1D> {
    match r.choice("target", "mixture", &["mixture", "gaussian"])?.as_str() {
        "gaussian" => {
            let m = r.f64("target_mean", 0.0)?;
            let v = r.positive("target_var", 1.0)?;
            TargetSpec1D::gaussian(m, v)
        }
        _ => {
            let w = r.list("mix_weights", &[0.5, 0.5])?;
            let m = r.list("mix_means", &[-4.0, 4.0])?;
            let v = r.list("mix_vars", &[1.0, 1.0])?;
            if w.len() != m.len() || w.len() != v.len() {
                return Err(Error::Config("mix_weights, mix_means and mix_vars must have equal length".into()));
            }
            let comps = (0..w.len()).map(|i| MixtureComponent { weight: w[i], mean: m[i], var: v[i] }).collect();
            TargetSpec1D::mixture(comps).map_err(|e| Error::Config(format!("mixture: {e}")))
        }
    }
}

fn spreads(target: &TargetSpec1D) -> Vec<(f64, f64)> {
    match target {
        TargetSpec1D::Gaussian { mean, var } => vec![(*mean, var.sqrt())],
        TargetSpec1D::Mixture(cs) => cs.iter().map(|c| (c.mean, c.var.sqrt())).collect(),
    }
}

/// Grid solver run on a general target: reference flow against both splittings.
pub fn run_grid_demo(r: &mut Resolver, _pool: &ThreadPool) -> Result<ExperimentOutput> {
    let target = grid_target(r)?;
    let m0 = r.f64("mu0_mean", 0.0)?;
    let v0 = r.positive("mu0_var", 0.5)?;
    let n_points = r.usize("n_points", 2001, crate::pde1d::MIN_POINTS)?;
    let n_sigma = r.positive("n_sigma", 12.0)?;
    let gamma = r.positive("gamma", 0.2)?;
    let t_final = r.positive("t_final", 2.0)?;
    let ref_dt = r.positive("ref_dt", 1e-4)?;
    let mut parts = spreads(&target);
    parts.push((m0, v0.sqrt()));
    let sd_max = parts.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - n_sigma * sd_max;
    let hi = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + n_sigma * sd_max;
    let grid = Grid1D::new(lo, hi, n_points)?;
    let mu0 = TargetSpec1D::gaussian(m0, v0)?.discretize(grid)?;
    let pi = target.discretize(grid)?;
    let gen = WGenerator::new(&target, grid);
    let sub = default_substeps(&grid, gamma);
    let steps = (t_final / gamma).round().max(1.0) as usize;
    let mut traj = Table::new(
        "trajectory",
        &["step", "t", "kl_reference", "kl_wfr_split", "kl_frw_split", "cov_wfr_split", "clamped_mass"],
    );
    let (mut reference, mut wfr, mut frw) = (mu0.clone(), mu0.clone(), mu0.clone());
    let kl0 = kl_grid(&mu0, &pi)?;
    traj.push(vec![0usize.into(), 0.0.into(), kl0.into(), kl0.into(), kl0.into(), cov_diagnostic(&mu0, &target).value.into(), 0.0.into()]);
    for step in 1..=steps {
        reference = wfr_reference_grid(&target, &reference, gamma, ref_dt)?;
        wfr = fr_step_grid(&target, &w_step_with(&gen, &wfr, gamma, sub)?, gamma)?;
        frw = w_step_with(&gen, &fr_step_grid(&target, &frw, gamma)?, gamma, sub)?;
        let clamped = reference.clamped_mass().max(wfr.clamped_mass()).max(frw.clamped_mass());
        traj.push(vec![
            step.into(),
            (step as f64 * gamma).into(),
            kl_grid(&reference, &pi)?.into(),
            kl_grid(&wfr, &pi)?.into(),
            kl_grid(&frw, &pi)?.into(),
            cov_diagnostic(&wfr, &target).value.into(),
            clamped.into(),
        ]);
    }
    let mut dens = Table::new("density", &["x", "mu0", "pi", "reference", "wfr_split", "frw_split"]);
    for (i, x) in grid.nodes().into_iter().enumerate() {
        dens.push(vec![
            x.into(),
            mu0.values()[i].into(),
            pi.values()[i].into(),
            reference.values()[i].into(),
            wfr.values()[i].into(),
            frw.values()[i].into(),
        ]);
    }
    let derived = vec![
        ("grid".into(), format!("[{}, {}] x {}", fmt_num(lo), fmt_num(hi), n_points)),
        ("w_substeps".into(), sub.to_string()),
    ];
    Ok(ExperimentOutput { tables: vec![traj, dens], derived })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spaces() {
        let g = log_space(1e-3, 10.0, 5);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[4] - 10.0).abs() < 1e-12);
        assert_eq!(lin_space(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(lin_space(2.0, 3.0, 1), vec![2.0]);
    }
}
