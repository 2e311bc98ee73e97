//! Python bindings for the Gaussian flows, decay analysis and experiment runner.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wfr_split::decay::{self, DecaySetup, SchemeKind};
use wfr_split::divergences;
use wfr_split::flows::{self, SplitOrder, WfrContext};
use wfr_split::lab::config::RawConfig;
use wfr_split::lab::{self, Experiment};
use wfr_split::logconcavity::{self, WfrAlphaCurve};
use wfr_split::{GaussianDist, SpdMatrix};

create_exception!(wfr_split_py, WfrSplitError, PyValueError);

fn err(e: wfr_split::Error) -> PyErr {
    WfrSplitError::new_err(e.to_string())
}

fn order(name: &str) -> PyResult<SplitOrder> {
    match name {
        "wfr" => Ok(SplitOrder::WThenFR),
        "frw" => Ok(SplitOrder::FRThenW),
        _ => Err(PyValueError::new_err(format!("order must be 'wfr' or 'frw', got '{name}'"))),
    }
}

fn scheme(name: &str) -> PyResult<SchemeKind> {
    match name {
        "exact" => Ok(SchemeKind::Exact),
        "wfr" => Ok(SchemeKind::SplitWFR),
        "frw" => Ok(SchemeKind::SplitFRW),
        _ => Err(PyValueError::new_err(format!("kind must be 'exact', 'wfr' or 'frw', got '{name}'"))),
    }
}

/// Gaussian law `N(mean, cov)`.
#[pyclass(name = "Gaussian", frozen)]
struct PyGaussian {
    inner: GaussianDist,
}

#[pymethods]
impl PyGaussian {
    #[new]
    fn new(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("cov must be {d}x{d}")));
        }
        let flat: Vec<f64> = cov.into_iter().flatten().collect();
        let c = SpdMatrix::from_matrix(DMatrix::from_row_slice(d, d, &flat)).map_err(err)?;
        Ok(Self { inner: GaussianDist::new(DVector::from_vec(mean), c).map_err(err)? })
    }

    #[staticmethod]
    fn scalar(mean: f64, var: f64) -> PyResult<Self> {
        Ok(Self { inner: GaussianDist::scalar(mean, var).map_err(err)? })
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        let m = self.inner.cov().matrix();
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn max_diff(&self, other: &PyGaussian) -> f64 {
        self.inner.max_diff(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("Gaussian(mean={:?}, cov={:?})", self.mean(), self.cov())
    }
}

fn wrap(inner: GaussianDist) -> PyGaussian {
    PyGaussian { inner }
}

fn context(target: &PyGaussian) -> PyResult<WfrContext> {
    WfrContext::new(target.inner.clone()).map_err(err)
}

fn setup(target: &PyGaussian, init: &PyGaussian, gamma: f64) -> PyResult<DecaySetup> {
    DecaySetup::new(context(target)?, init.inner.clone(), gamma).map_err(err)
}

/// Exact WFR flow at time `t`.
#[pyfunction]
fn wfr_exact(target: &PyGaussian, init: &PyGaussian, t: f64) -> PyResult<PyGaussian> {
    flows::wfr_exact(&context(target)?, &init.inner, t).map(wrap).map_err(err)
}

#[pyfunction]
fn w_step(target: &PyGaussian, v: &PyGaussian, t: f64) -> PyResult<PyGaussian> {
    flows::w_step(&context(target)?, &v.inner, t).map(wrap).map_err(err)
}

#[pyfunction]
fn fr_step(target: &PyGaussian, v: &PyGaussian, t: f64) -> PyResult<PyGaussian> {
    flows::fr_step(&context(target)?, &v.inner, t).map(wrap).map_err(err)
}

/// One split step; `order` is `"wfr"` (W then FR) or `"frw"`.
#[pyfunction]
fn split_step(target: &PyGaussian, v: &PyGaussian, order: &str, gamma: f64) -> PyResult<PyGaussian> {
    let o = self::order(order)?;
    flows::split_step(&context(target)?, &v.inner, o, gamma).map(wrap).map_err(err)
}

/// KL to target after each of `n` split steps, starting with step 0.
#[pyfunction]
fn iterate_split_kl(target: &PyGaussian, init: &PyGaussian, order: &str, gamma: f64, n: usize) -> PyResult<Vec<f64>> {
    let o = self::order(order)?;
    let traj = flows::iterate_split(&context(target)?, &init.inner, o, gamma, n).map_err(err)?;
    Ok(traj.into_iter().map(|p| p.kl).collect())
}

#[pyfunction]
fn kl(a: &PyGaussian, b: &PyGaussian) -> PyResult<f64> {
    divergences::kl_gaussian(&a.inner, &b.inner).map_err(err)
}

#[pyfunction]
fn jeffreys(a: &PyGaussian, b: &PyGaussian) -> PyResult<f64> {
    divergences::jeffreys_gaussian(&a.inner, &b.inner).map_err(err)
}

#[pyfunction]
fn fisher_info(a: &PyGaussian, b: &PyGaussian) -> PyResult<f64> {
    divergences::fisher_info_gaussian(&a.inner, &b.inner).map_err(err)
}

/// Split-to-exact KL ratio after `n` steps of size `gamma`.
#[pyfunction]
fn kl_ratio(target: &PyGaussian, init: &PyGaussian, kind: &str, gamma: f64, n: usize) -> PyResult<f64> {
    decay::kl_ratio(scheme(kind)?, n, &setup(target, init, gamma)?).map_err(err)
}

/// Large-n limit of [`kl_ratio`].
#[pyfunction]
fn asymptotic_ratio(target: &PyGaussian, init: &PyGaussian, kind: &str, gamma: f64) -> PyResult<f64> {
    decay::asymptotic_ratio(scheme(kind)?, &setup(target, init, gamma)?).map_err(err)
}

/// `"PositiveGap"`, `"DominatedNegativeGap"` or `"Neither"`.
#[pyfunction]
fn definiteness(target: &PyGaussian, init: &PyGaussian, gamma: f64) -> PyResult<String> {
    Ok(format!("{:?}", decay::classify_definiteness(&setup(target, init, gamma)?).case))
}

#[pyfunction]
fn bound_min_rule(target: &PyGaussian, init: &PyGaussian, t: f64) -> PyResult<f64> {
    decay::bound_min_rule(&setup(target, init, 1.0)?, t).map_err(err)
}

/// Exponential KL bound, `None` before its start time or when `log(π/μ_0)` is unbounded below.
#[pyfunction]
#[pyo3(signature = (target, init, t, delta = 0.1))]
fn bound_sharp(target: &PyGaussian, init: &PyGaussian, t: f64, delta: f64) -> PyResult<Option<f64>> {
    decay::bound_sharp(&setup(target, init, 1.0)?, t, delta).map_err(err)
}

/// Log-concavity lower bound of the WFR flow at each time.
#[pyfunction]
#[pyo3(signature = (target, init, times, delta = 0.5))]
fn wfr_alpha(target: &PyGaussian, init: &PyGaussian, times: Vec<f64>, delta: f64) -> PyResult<Vec<f64>> {
    let c = logconcavity::gaussian_constants(&target.inner, &init.inner, delta).map_err(err)?;
    let curve = WfrAlphaCurve::new(&c).map_err(err)?;
    Ok(times.iter().map(|&t| logconcavity::wfr_alpha(&curve, t)).collect())
}

/// Smallest precision eigenvalue of the exact WFR flow.
#[pyfunction]
fn true_alpha(target: &PyGaussian, init: &PyGaussian, t: f64) -> PyResult<f64> {
    logconcavity::true_alpha_gaussian(&context(target)?, &init.inner, t).map_err(err)
}

/// Runs a lab experiment; returns `(csv, success)`.
#[pyfunction]
#[pyo3(signature = (experiment, overrides = Vec::new(), threads = 1, suite = None))]
fn run_experiment(
    experiment: &str,
    overrides: Vec<String>,
    threads: usize,
    suite: Option<&str>,
) -> PyResult<(String, bool)> {
    let exp: Experiment = experiment.parse().map_err(err)?;
    let mut raw = RawConfig::default();
    for o in &overrides {
        raw.apply_override(o).map_err(err)?;
    }
    let outcome = lab::run(exp, raw, threads, suite).map_err(err)?;
    Ok((outcome.report.to_csv(), outcome.success))
}

#[pymodule]
fn wfr_split_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WfrSplitError", m.py().get_type::<WfrSplitError>())?;
    m.add_class::<PyGaussian>()?;
    m.add_function(wrap_pyfunction!(wfr_exact, m)?)?;
    m.add_function(wrap_pyfunction!(w_step, m)?)?;
    m.add_function(wrap_pyfunction!(fr_step, m)?)?;
    m.add_function(wrap_pyfunction!(split_step, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_split_kl, m)?)?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    m.add_function(wrap_pyfunction!(jeffreys, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_info, m)?)?;
    m.add_function(wrap_pyfunction!(kl_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(definiteness, m)?)?;
    m.add_function(wrap_pyfunction!(bound_min_rule, m)?)?;
    m.add_function(wrap_pyfunction!(bound_sharp, m)?)?;
    m.add_function(wrap_pyfunction!(wfr_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(true_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
