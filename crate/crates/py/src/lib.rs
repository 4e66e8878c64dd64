//! Python bindings: problem construction, the solver loop, projections and
//! rate fitting. Vectors cross the boundary as lists of floats (any float
//! sequence, including 1-D numpy arrays, is accepted).

use std::sync::Arc;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use saddle_core::experiment::{self, ExperimentSpec};
use saddle_core::metrics;
use saddle_core::problems::{
    make_synthetic, solve_discrete_lyapunov, synthetic_dataset, DroLogisticProblem,
    LqrGailProblem, SyntheticPLProblem, SyntheticParams,
};
use saddle_core::prox::{self, ProxSpec};
use saddle_core::schedule::{self, ScheduleRules};
use saddle_core::solvers::{self as core_solvers, SamplingMode, SolverKind};
use saddle_core::{Error, IterateState, ProblemInstance, Vector};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. }
        | Error::Unstable { .. }
        | Error::LinearAlgebra(_)
        | Error::ProjectionNotConverged { .. }
        | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Row-major nested lists to a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

#[pyclass(name = "ProblemConstants", from_py_object)]
#[derive(Clone)]
struct PyConstants {
    inner: saddle_core::ProblemConstants,
}

#[pymethods]
impl PyConstants {
    #[new]
    #[pyo3(signature = (l_xx, l_xy, mu, nu_x = 0.0, nu_y = 0.0))]
    fn new(l_xx: f64, l_xy: f64, mu: f64, nu_x: f64, nu_y: f64) -> PyResult<Self> {
        let inner = saddle_core::ProblemConstants::new(l_xx, l_xy, mu)
            .and_then(|c| c.with_noise(nu_x, nu_y))
            .map_err(to_py)?;
        Ok(PyConstants { inner })
    }

    #[getter]
    fn l_xx(&self) -> f64 {
        self.inner.l_xx
    }

    #[getter]
    fn l_xy(&self) -> f64 {
        self.inner.l_xy
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }

    #[getter]
    fn nu_x(&self) -> f64 {
        self.inner.nu_x
    }

    #[getter]
    fn nu_y(&self) -> f64 {
        self.inner.nu_y
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ProblemConstants(l_xx={}, l_xy={}, mu={}, nu_x={}, nu_y={})",
            c.l_xx, c.l_xy, c.mu, c.nu_x, c.nu_y
        )
    }
}

/// Step sizes for a fixed horizon. `rules` is the JSON form of the
/// schedule rules, e.g. `{"gamma": "equal_lambda"}`.
#[pyclass(name = "Schedule")]
struct PySchedule {
    inner: schedule::Schedule,
    constants: saddle_core::ProblemConstants,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (constants, horizon, rules = None))]
    fn new(constants: &PyConstants, horizon: usize, rules: Option<&str>) -> PyResult<Self> {
        let rules: ScheduleRules = match rules {
            Some(text) => serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ScheduleRules::default(),
        };
        let inner = schedule::make_schedule(&constants.inner, horizon, rules).map_err(to_py)?;
        Ok(PySchedule {
            inner,
            constants: constants.inner,
        })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    /// `(alpha, gamma, lambda, sigma)` at iteration `k`.
    fn params(&self, k: usize) -> PyResult<(f64, f64, f64, f64)> {
        let p = self.inner.params(k).map_err(to_py)?;
        Ok((p.alpha, p.gamma, p.lambda, p.sigma))
    }

    fn c_k(&self, k: usize) -> PyResult<f64> {
        self.inner.c_k(&self.constants, k).map_err(to_py)
    }

    fn min_c(&self) -> PyResult<f64> {
        self.inner.min_c(&self.constants).map_err(to_py)
    }

    fn gamma_seq(&self, k: usize) -> PyResult<f64> {
        self.inner.gamma_seq(k).map_err(to_py)
    }
}

/// A saddle-point problem with its default starting point.
#[pyclass(name = "Problem")]
struct PyProblem {
    instance: ProblemInstance,
    x0: Vector,
    y0: Vector,
}

impl PyProblem {
    fn vec(&self, v: Vec<f64>, dim: usize, what: &str) -> PyResult<Vector> {
        if v.len() != dim {
            return Err(PyValueError::new_err(format!(
                "{what} has length {}, expected {dim}",
                v.len()
            )));
        }
        Ok(Vector::from_vec(v))
    }
}

#[pymethods]
impl PyProblem {
    /// `L(x, y) = mu x^2 / 2 + x y` with `h = 0`.
    #[staticmethod]
    fn toy(mu: f64) -> PyResult<Self> {
        let toy = SyntheticPLProblem::toy(mu).map_err(to_py)?;
        let c = toy.constants().map_err(to_py)?;
        let instance = ProblemInstance::new(Arc::new(toy), ProxSpec::Zero, c).map_err(to_py)?;
        Ok(PyProblem {
            instance,
            x0: Vector::from_element(1, 1.0),
            y0: Vector::zeros(1),
        })
    }

    /// Random quadratic-bilinear problem with `h = 0`.
    #[staticmethod]
    #[pyo3(signature = (dim_x, dim_y, mu, rank_deficiency = 0, coupling = 1.0, seed = 0,
                        noise_x = 0.0, noise_y = 0.0, n_samples = 64))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic(
        dim_x: usize,
        dim_y: usize,
        mu: f64,
        rank_deficiency: usize,
        coupling: f64,
        seed: u64,
        noise_x: f64,
        noise_y: f64,
        n_samples: usize,
    ) -> PyResult<Self> {
        let params = SyntheticParams {
            dim_x,
            dim_y,
            mu,
            rank_deficiency,
            coupling,
            seed,
            noise_x,
            noise_y,
            n_samples,
        };
        let p = make_synthetic(&params).map_err(to_py)?;
        let c = p.constants().map_err(to_py)?;
        let instance = ProblemInstance::new(Arc::new(p), ProxSpec::Zero, c).map_err(to_py)?;
        Ok(PyProblem {
            instance,
            x0: Vector::from_element(dim_x, 1.0),
            y0: Vector::zeros(dim_y),
        })
    }

    /// DRO logistic regression on row-major `features` and `labels` in
    /// `{-1, +1}`; without data, an `n x d` synthetic set from `data_seed`.
    #[staticmethod]
    #[pyo3(signature = (features = None, labels = None, n = 60, d = 100, flip = 0.1,
                        data_seed = 0, delta = 0.01, radius = 100.0, mu = 0.1))]
    #[allow(clippy::too_many_arguments)]
    fn dro(
        features: Option<Vec<Vec<f64>>>,
        labels: Option<Vec<f64>>,
        n: usize,
        d: usize,
        flip: f64,
        data_seed: u64,
        delta: f64,
        radius: f64,
        mu: f64,
    ) -> PyResult<Self> {
        let problem = match (features, labels) {
            (Some(f), Some(l)) => {
                DroLogisticProblem::new(matrix_from_rows(&f).map_err(to_py)?, l)
            }
            (None, None) => synthetic_dataset(n, d, flip, data_seed)
                .and_then(DroLogisticProblem::from_libsvm),
            _ => {
                return Err(PyValueError::new_err(
                    "give both features and labels, or neither",
                ))
            }
        }
        .map_err(to_py)?;
        let rows = problem.num_rows();
        let c = problem.estimated_constants(radius, mu).map_err(to_py)?;
        let prox = ProxSpec::box_ball(rows, delta, radius).map_err(to_py)?;
        let x0 = Vector::zeros(problem.num_features());
        let instance = ProblemInstance::new(Arc::new(problem), prox, c).map_err(to_py)?;
        Ok(PyProblem {
            instance,
            x0,
            y0: Vector::from_element(rows, 1.0 / rows as f64),
        })
    }

    /// Problem described by an experiment-spec `problem` block (JSON).
    #[staticmethod]
    fn from_spec(problem_json: &str) -> PyResult<Self> {
        let spec: experiment::ProblemSpec =
            serde_json::from_str(problem_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let built = experiment::build_problem(&spec, &Default::default()).map_err(to_py)?;
        Ok(PyProblem {
            instance: built.instance,
            x0: built.x0,
            y0: built.y0,
        })
    }

    #[getter]
    fn dim_x(&self) -> usize {
        self.instance.dim_x()
    }

    #[getter]
    fn dim_y(&self) -> usize {
        self.instance.dim_y()
    }

    #[getter]
    fn constants(&self) -> PyConstants {
        PyConstants {
            inner: self.instance.constants,
        }
    }

    #[getter]
    fn x0(&self) -> Vec<f64> {
        self.x0.as_slice().to_vec()
    }

    #[getter]
    fn y0(&self) -> Vec<f64> {
        self.y0.as_slice().to_vec()
    }

    /// Replaces the constants that drive the step sizes.
    fn set_constants(&mut self, constants: &PyConstants) -> PyResult<()> {
        constants.inner.validate().map_err(to_py)?;
        self.instance.constants = constants.inner;
        Ok(())
    }

    fn value(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let x = self.vec(x, self.dim_x(), "x")?;
        let y = self.vec(y, self.dim_y(), "y")?;
        self.instance.oracle.value(&x, &y).map_err(to_py)
    }

    fn grad_x(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = self.vec(x, self.dim_x(), "x")?;
        let y = self.vec(y, self.dim_y(), "y")?;
        let g = self.instance.oracle.grad_x(&x, &y).map_err(to_py)?;
        Ok(g.as_slice().to_vec())
    }

    fn grad_y(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = self.vec(x, self.dim_x(), "x")?;
        let y = self.vec(y, self.dim_y(), "y")?;
        let g = self.instance.oracle.grad_y(&x, &y).map_err(to_py)?;
        Ok(g.as_slice().to_vec())
    }

    /// `prox_{sigma h}(v)`.
    fn prox(&self, v: Vec<f64>, sigma: f64) -> PyResult<Vec<f64>> {
        let p = self.instance.prox.prox(&Vector::from_vec(v), sigma).map_err(to_py)?;
        Ok(p.as_slice().to_vec())
    }

    /// Empirical gap `sup_y Phi(x, .) - inf_x Phi(., y)` and its residuals.
    #[pyo3(signature = (x, y, budget = 1000, seed = 0))]
    fn gap<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        y: Vec<f64>,
        budget: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let x = self.vec(x, self.dim_x(), "x")?;
        let y = self.vec(y, self.dim_y(), "y")?;
        let g = metrics::gap_function(&self.instance, &x, &y, budget, seed).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("gap", g.gap)?;
        d.set_item("sup_value", g.sup_value)?;
        d.set_item("inf_value", g.inf_value)?;
        d.set_item("sup_residual", g.sup_residual)?;
        d.set_item("inf_residual", g.inf_residual)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Problem(dim_x={}, dim_y={})", self.dim_x(), self.dim_y())
    }
}

/// Runs a solver and returns a dict with `trace` (list of dicts), final
/// `x`/`y`, best iterate `z_best`/`y_best`/`k_star`, `oracle_calls` and
/// `failure` (None or the error message).
#[pyfunction]
#[pyo3(signature = (problem, solver = "pdm", horizon = 100, seed = 0, batch_size = None,
                    exhaustive = false, x0 = None, y0 = None, trace_every = 1))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    solver: &str,
    horizon: usize,
    seed: u64,
    batch_size: Option<usize>,
    exhaustive: bool,
    x0: Option<Vec<f64>>,
    y0: Option<Vec<f64>>,
    trace_every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: SolverKind = solver.parse().map_err(to_py)?;
    let mut cfg = core_solvers::RunConfig::new(kind, horizon);
    cfg.seed = seed;
    cfg.batch_size = batch_size;
    cfg.trace_every = trace_every;
    if exhaustive {
        cfg.sampling = SamplingMode::Exhaustive;
    }
    let x0 = match x0 {
        Some(v) => problem.vec(v, problem.dim_x(), "x0")?,
        None => problem.x0.clone(),
    };
    let y0 = match y0 {
        Some(v) => problem.vec(v, problem.dim_y(), "y0")?,
        None => problem.y0.clone(),
    };
    let out = py
        .detach(|| core_solvers::run(&problem.instance, &cfg, IterateState::new(x0, y0)))
        .map_err(to_py)?;

    let trace = out
        .trace
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("k", r.k)?;
            d.set_item("oracle_calls", r.oracle_calls)?;
            d.set_item("stationarity", r.stationarity)?;
            d.set_item("grad_x_norm", r.grad_x_norm)?;
            d.set_item("primal_value", r.primal_value)?;
            d.set_item("wall_ns", r.wall_ns)?;
            d.set_item("best_so_far", r.best_so_far)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let d = PyDict::new(py);
    d.set_item("trace", trace)?;
    d.set_item("x", out.state.x.as_slice().to_vec())?;
    d.set_item("y", out.state.y.as_slice().to_vec())?;
    d.set_item("z_best", out.best.z.as_slice().to_vec())?;
    d.set_item("y_best", out.best.y.as_slice().to_vec())?;
    d.set_item("k_star", out.best.k)?;
    d.set_item("best_stationarity", out.best.stationarity)?;
    d.set_item("oracle_calls", out.oracle_calls)?;
    d.set_item("failure", out.failure.map(|e| e.to_string()))?;
    Ok(d)
}

/// Runs a full experiment spec (JSON text), writing its output files, and
/// returns `summary.json` as text.
#[pyfunction]
fn run_experiment(py: Python<'_>, spec_json: &str) -> PyResult<String> {
    let spec = ExperimentSpec::from_json(spec_json).map_err(to_py)?;
    let art = py.detach(|| experiment::execute(&spec)).map_err(to_py)?;
    serde_json::to_string_pretty(&art.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Projection onto `{y_i >= delta/n, ||n y - 1|| <= radius}`.
#[pyfunction]
fn project_box_ball(v: Vec<f64>, delta: f64, radius: f64) -> PyResult<Vec<f64>> {
    let p = prox::project_box_ball(&Vector::from_vec(v), delta, radius).map_err(to_py)?;
    Ok(p.as_slice().to_vec())
}

/// Projection of a symmetric matrix onto `{lower I <= M <= upper I}`.
#[pyfunction]
fn project_spectral_box(m: Vec<Vec<f64>>, lower: f64, upper: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(&m).map_err(to_py)?;
    let p = prox::project_spectral_box(&m, lower, upper).map_err(to_py)?;
    Ok(matrix_to_rows(&p))
}

/// Solves `P = W + F^T P F`.
#[pyfunction]
fn discrete_lyapunov(f: Vec<Vec<f64>>, w: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let f = matrix_from_rows(&f).map_err(to_py)?;
    let w = matrix_from_rows(&w).map_err(to_py)?;
    Ok(matrix_to_rows(&solve_discrete_lyapunov(&f, &w).map_err(to_py)?))
}

/// Random GAIL-LQR instance; returns `(problem, theta_expert)` where the
/// problem starts from `K = 0` and `Q = I, R = I`.
#[pyfunction]
#[pyo3(signature = (state_dim = 4, input_dim = 3, seed = 0, bounds = (0.1, 100.0), mu = 0.1))]
fn lqr_problem(
    state_dim: usize,
    input_dim: usize,
    seed: u64,
    bounds: (f64, f64),
    mu: f64,
) -> PyResult<(PyProblem, Vec<f64>)> {
    let spec = experiment::ProblemSpec::Lqr {
        state_dim,
        input_dim,
        instance_seed: seed,
        q_bounds: [bounds.0, bounds.1],
        r_bounds: [bounds.0, bounds.1],
        mu,
        safety: 2.0,
        regularizer: 0.0,
    };
    let built = experiment::build_problem(&spec, &Default::default()).map_err(to_py)?;
    let (_, theta_e) = LqrGailProblem::random(state_dim, input_dim, seed).map_err(to_py)?;
    Ok((
        PyProblem {
            instance: built.instance,
            x0: built.x0,
            y0: built.y0,
        },
        theta_e.as_slice().to_vec(),
    ))
}

/// Least-squares slope of `log(value)` against `log(T)`.
#[pyfunction]
fn rate_fit(points: Vec<(usize, f64)>) -> PyResult<f64> {
    metrics::rate_fit(&points).map_err(to_py)
}

#[pymodule]
fn saddle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstants>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(project_box_ball, m)?)?;
    m.add_function(wrap_pyfunction!(project_spectral_box, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(lqr_problem, m)?)?;
    m.add_function(wrap_pyfunction!(rate_fit, m)?)?;
    Ok(())
}
