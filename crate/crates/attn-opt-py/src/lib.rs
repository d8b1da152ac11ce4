//! Python bindings. Problems and stage paths are classes; everything else
//! returns plain dicts and lists built from the JSON form of the results.

use attn_opt::binary_choice::{solve_stopping_boundary, BinaryChoiceProblem, DpGrid};
use attn_opt::io::{emit_stage_path, parse_stage_path, stage_path_value, ProblemFile};
use attn_opt::manipulation::{compare_cumulative, manipulated_stages};
use attn_opt::news::{equilibrium, verify_equilibrium, NewsGameParams};
use attn_opt::sim::{simulate as run_simulation, SimConfig, SimMode};
use attn_opt::{classify, constrained_t_optimal, monotonicity_scan as scan, solve_stages as solve, Error};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;
use serde_json::json;

create_exception!(attn_opt, UnsupportedPriorError, PyException, "No sufficient condition covers the prior.");
create_exception!(attn_opt, AssumptionViolatedError, PyException, "A model assumption does not hold.");
create_exception!(attn_opt, SolverError, PyException, "A numerical routine failed.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Invalid(_) | Error::WrongDimension(_) | Error::NonPd | Error::Domain(_) | Error::InfeasibleFloor => {
            PyValueError::new_err(msg)
        }
        Error::UnsupportedPrior => UnsupportedPriorError::new_err(msg),
        Error::AssumptionViolated(_) => AssumptionViolatedError::new_err(msg),
        Error::NoConvergence(_) | Error::GridTooCoarse(_) => SolverError::new_err(msg),
    }
}

/// Converts a serializable value into Python objects through JSON text.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SolverError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Gaussian prior over the attributes and the weights of the payoff state.
#[pyclass(name = "Problem", module = "attn_opt", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyProblem {
    inner: attn_opt::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (sigma, alpha, mu = None))]
    fn new(sigma: Vec<Vec<f64>>, alpha: Vec<f64>, mu: Option<Vec<f64>>) -> PyResult<Self> {
        let file = ProblemFile { sigma, alpha, mu, binary_choice: None, news_game: None, manipulation: None, sim: None };
        Ok(Self { inner: file.problem().map_err(to_py)? })
    }

    /// Reads a problem file in the CLI's JSON format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ProblemFile::parse(text).and_then(|f| f.problem()).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<f64>> {
        attn_opt::io::matrix_rows(self.inner.sigma())
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().as_slice().to_vec()
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu().as_slice().to_vec()
    }

    fn prior_variance(&self) -> f64 {
        self.inner.prior_variance()
    }

    fn posterior_variance(&self, q: Vec<f64>) -> PyResult<f64> {
        self.inner.posterior_variance(&q).map_err(to_py)
    }

    fn posterior_covariance(&self, q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(attn_opt::io::matrix_rows(&self.inner.posterior_covariance(&q).map_err(to_py)?))
    }

    fn gamma(&self, q: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.gamma(&q).map_err(to_py)?.as_slice().to_vec())
    }

    /// Gradient and Hessian of the posterior variance at `q`.
    fn grad_hessian(&self, q: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let (g, h) = self.inner.grad_hessian(&q).map_err(to_py)?;
        Ok((g.as_slice().to_vec(), attn_opt::io::matrix_rows(&h)))
    }

    /// Which sufficient conditions the prior satisfies.
    fn classify(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &classify(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!("Problem(sigma={:?}, alpha={:?})", self.sigma(), self.alpha())
    }
}

/// Piecewise-constant optimal attention policy.
#[pyclass(name = "StagePath", module = "attn_opt", frozen)]
pub struct PyStagePath {
    inner: attn_opt::StagePath,
}

#[pymethods]
impl PyStagePath {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_stage_path(text).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        emit_stage_path(&self.inner)
    }

    #[getter]
    fn problem(&self) -> PyProblem {
        PyProblem { inner: self.inner.problem().clone() }
    }

    #[getter]
    fn switch_times(&self) -> Vec<f64> {
        self.inner.switch_times()
    }

    /// Stages as dicts with `t_start`, `t_end` (`"inf"` for the last one),
    /// `support` and `mixture`.
    #[getter]
    fn stages(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &stage_path_value(&self.inner)["stages"])
    }

    fn n_of_t(&self, t: f64) -> Vec<f64> {
        self.inner.n_of_t(t).into_vec()
    }

    fn beta_of_t(&self, t: f64) -> Vec<f64> {
        self.inner.beta_of_t(t)
    }

    fn __len__(&self) -> usize {
        self.inner.stages().len()
    }

    fn __repr__(&self) -> String {
        format!("StagePath(switch_times={:?})", self.inner.switch_times())
    }
}

/// Optimal stage path; raises `UnsupportedPriorError` outside the
/// sufficient conditions.
#[pyfunction]
fn solve_stages(problem: &PyProblem) -> PyResult<PyStagePath> {
    Ok(PyStagePath { inner: solve(&problem.inner).map_err(to_py)? })
}

/// Variance-minimizing allocation of budget `t`, optionally with a floor.
#[pyfunction]
#[pyo3(signature = (problem, t, floor = None))]
fn t_optimal(py: Python<'_>, problem: &PyProblem, t: f64, floor: Option<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let floor = floor.unwrap_or_else(|| vec![0.0; problem.inner.dim()]);
    let res = py.detach(|| constrained_t_optimal(&problem.inner, t, &floor)).map_err(to_py)?;
    to_object(py, &res)
}

/// Grid points where some coordinate of the optimal allocation decreases.
#[pyfunction]
fn monotonicity_scan(py: Python<'_>, problem: &PyProblem, grid: Vec<f64>) -> PyResult<Py<PyAny>> {
    let v = py.detach(|| scan(&problem.inner, &grid)).map_err(to_py)?;
    to_object(py, &v)
}

/// Stopping boundary and choice accuracy for the two-good problem.
#[pyfunction]
#[pyo3(signature = (sigma, alpha, cost, n_half = None, y_range = None, truncation = None))]
fn binary_choice(
    py: Python<'_>,
    sigma: Vec<Vec<f64>>,
    alpha: [f64; 2],
    cost: f64,
    n_half: Option<usize>,
    y_range: Option<f64>,
    truncation: Option<f64>,
) -> PyResult<Py<PyAny>> {
    if sigma.len() != 2 || sigma.iter().any(|r| r.len() != 2) {
        return Err(PyValueError::new_err("sigma must be 2 by 2"));
    }
    let s = DMatrix::from_fn(2, 2, |i, j| sigma[i][j]);
    let b = BinaryChoiceProblem::new(s, alpha, cost).map_err(to_py)?;
    let d = DpGrid::default();
    let grid = DpGrid {
        n_half: n_half.unwrap_or(d.n_half),
        y_range: y_range.unwrap_or(d.y_range),
        truncation: truncation.unwrap_or(d.truncation),
    };
    let sol = py.detach(|| solve_stopping_boundary(&b, grid)).map_err(to_py)?;
    let out = json!({
        "swapped": b.swapped(),
        "switch_time": b.switch_time(),
        "prior_variance": b.prior_variance(),
        "solution": sol,
    });
    to_object(py, &out)
}

/// Closed-form news equilibrium and its deviation-grid certificate.
#[pyfunction]
#[pyo3(signature = (sigma_omega, sigma_b, lam, kappa, r, grid = 200))]
fn news_equilibrium(
    py: Python<'_>,
    sigma_omega: f64,
    sigma_b: f64,
    lam: f64,
    kappa: f64,
    r: f64,
    grid: usize,
) -> PyResult<Py<PyAny>> {
    let g = NewsGameParams::new(sigma_omega, sigma_b, lam, kappa, r).map_err(to_py)?;
    let eq = equilibrium(&g).map_err(to_py)?;
    let rep = py.detach(|| verify_equilibrium(&g, grid)).map_err(to_py)?;
    to_object(py, &json!({"incentive_index": g.incentive_index(), "outcome": eq, "verification": rep}))
}

/// Forced-attention path and its differences from the baseline on `grid`.
#[pyfunction]
fn manipulate(py: Python<'_>, problem: &PyProblem, duration: f64, grid: Vec<f64>) -> PyResult<(PyStagePath, Py<PyAny>)> {
    let path = manipulated_stages(&problem.inner, duration).map_err(to_py)?;
    let rep = py.detach(|| compare_cumulative(&problem.inner, duration, &grid)).map_err(to_py)?;
    Ok((PyStagePath { inner: path }, to_object(py, &rep)?))
}

/// Monte Carlo replay of the optimal policy.
#[pyfunction]
#[pyo3(signature = (problem, dt, horizon, n_paths, seed = 0, discrete = false))]
fn simulate(
    py: Python<'_>,
    problem: &PyProblem,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    discrete: bool,
) -> PyResult<Py<PyAny>> {
    let mode = if discrete { SimMode::DiscretePrecision } else { SimMode::ContinuousEuler };
    let cfg = SimConfig { mode, ..SimConfig::new(dt, horizon, n_paths, seed) };
    let res = py
        .detach(|| solve(&problem.inner).and_then(|path| run_simulation(&problem.inner, &path, &cfg)))
        .map_err(to_py)?;
    to_object(py, &res)
}

#[pymodule]
#[pyo3(name = "attn_opt")]
pub fn attn_opt_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyProblem>()?;
    m.add_class::<PyStagePath>()?;
    m.add("UnsupportedPriorError", py.get_type::<UnsupportedPriorError>())?;
    m.add("AssumptionViolatedError", py.get_type::<AssumptionViolatedError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(solve_stages, m)?)?;
    m.add_function(wrap_pyfunction!(t_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_scan, m)?)?;
    m.add_function(wrap_pyfunction!(binary_choice, m)?)?;
    m.add_function(wrap_pyfunction!(news_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(manipulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
