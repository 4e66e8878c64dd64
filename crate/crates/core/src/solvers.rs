//! Iteration loops: the primal-dual method with momentum (deterministic and
//! mini-batch stochastic) and the gradient descent-ascent baselines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{stationarity_measure, TraceRecord};
use crate::problem::{IterateState, ProblemInstance, Vector};
use crate::schedule::{make_schedule, Schedule, ScheduleRules, StepParams};

/// Iterates whose norm exceeds this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Pdm,
    Spdm,
    Gda,
    Agda,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Pdm => "pdm",
            SolverKind::Spdm => "spdm",
            SolverKind::Gda => "gda",
            SolverKind::Agda => "agda",
        }
    }

    /// Stable numeric id, used for seed derivation.
    pub fn index(self) -> u64 {
        match self {
            SolverKind::Pdm => 0,
            SolverKind::Spdm => 1,
            SolverKind::Gda => 2,
            SolverKind::Agda => 3,
        }
    }

    /// Gradient evaluations of a typical step (after the first) with
    /// mini-batch size `batch`.
    pub fn calls_per_step(self, batch: usize) -> u64 {
        match self {
            SolverKind::Pdm => 3,
            SolverKind::Spdm => 4 * batch as u64,
            SolverKind::Gda | SolverKind::Agda => 2,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdm" => Ok(SolverKind::Pdm),
            "spdm" => Ok(SolverKind::Spdm),
            "gda" => Ok(SolverKind::Gda),
            "agda" => Ok(SolverKind::Agda),
            other => Err(Error::Config(format!("unknown solver '{other}'"))),
        }
    }
}

/// How SPDM forms its mini-batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniform with replacement; `U_k` and `V_k` independent.
    #[default]
    Uniform,
    /// The whole sample set, i.e. exact gradients.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverKind,
    pub horizon: usize,
    /// Mini-batch size for SPDM; defaults to the horizon.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: ScheduleRules,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Baseline primal step; defaults to `lambda_k`.
    #[serde(default)]
    pub step_x: Option<f64>,
    /// Baseline dual step; defaults to `sigma_k`.
    #[serde(default)]
    pub step_y: Option<f64>,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    /// Fill `wall_ns`; off by default so traces are reproducible bit for bit.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_trace_every() -> usize {
    1
}

impl RunConfig {
    pub fn new(solver: SolverKind, horizon: usize) -> Self {
        RunConfig {
            solver,
            horizon,
            batch_size: None,
            seed: 0,
            schedule: ScheduleRules::default(),
            sampling: SamplingMode::Uniform,
            step_x: None,
            step_y: None,
            trace_every: 1,
            record_wall_time: false,
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size.unwrap_or(self.horizon.max(1))
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        if self.trace_every == 0 {
            return Err(Error::Config("trace_every must be positive".into()));
        }
        for (name, step) in [("step_x", self.step_x), ("step_y", self.step_y)] {
            if let Some(s) = step {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive")));
                }
            }
        }
        if self.solver == SolverKind::Spdm {
            if self.batch_size == Some(0) {
                return Err(Error::Config("SPDM needs batch_size >= 1".into()));
            }
            if self.sampling == SamplingMode::Uniform && problem.oracle.num_samples().is_none() {
                return Err(Error::Config(
                    "SPDM with uniform sampling needs a finite-sum problem".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: IterateState,
    pub p: Vector,
    pub q: Vector,
    pub r: Vector,
    /// `||y_{k+1} - y_k||`.
    pub y_move: f64,
    /// `||r_k||`.
    pub grad_x_norm: f64,
    /// Gradient evaluations spent (full gradients, or sample gradients for SPDM).
    pub oracle_calls: u64,
}

/// Mini-batch index sets for one SPDM iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleBatch {
    /// Samples for the x-gradient.
    pub u_indices: Vec<usize>,
    /// Samples for the y-gradients.
    pub v_indices: Vec<usize>,
}

/// Deterministic source of mini-batches: the draw for iteration `k` and
/// role (x or y) comes from its own ChaCha stream, independent of call order.
#[derive(Debug, Clone, Copy)]
pub struct BatchSampler {
    pub seed: u64,
    pub mode: SamplingMode,
}

impl BatchSampler {
    pub fn new(seed: u64, mode: SamplingMode) -> Self {
        BatchSampler { seed, mode }
    }

    fn draw_role(&self, k: usize, role: u64, b: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * k as u64 + role);
        (0..b).map(|_| rng.random_range(0..n)).collect()
    }

    pub fn draw(&self, k: usize, b: usize, n: usize) -> Result<SampleBatch> {
        if b == 0 {
            return Err(Error::Config("mini-batch size must be at least 1".into()));
        }
        if n == 0 {
            return Err(Error::Config("empty sample space".into()));
        }
        Ok(match self.mode {
            SamplingMode::Uniform => SampleBatch {
                u_indices: self.draw_role(k, 0, b, n),
                v_indices: self.draw_role(k, 1, b, n),
            },
            SamplingMode::Exhaustive => SampleBatch {
                u_indices: (0..n).collect(),
                v_indices: (0..n).collect(),
            },
        })
    }
}

fn guard(k: usize, what: &str, v: &Vector) -> Result<()> {
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::Divergence {
            k,
            reason: format!("non-finite {what}"),
        });
    }
    Ok(())
}

fn guard_state(s: &IterateState) -> Result<()> {
    let k = s.k;
    for (name, v) in [("x", &s.x), ("x_tilde", &s.x_tilde), ("y", &s.y)] {
        guard(k, name, v)?;
        let norm = v.norm();
        if norm > DIVERGENCE_NORM {
            return Err(Error::Divergence {
                k,
                reason: format!("||{name}|| = {norm:e} exceeds {DIVERGENCE_NORM:e}"),
            });
        }
    }
    Ok(())
}

fn momentum_scale(problem: &ProblemInstance, p: &StepParams) -> f64 {
    1.0 / (p.gamma * (1.0 - problem.constants.l_xx * p.gamma) * problem.constants.mu)
}

/// Shared tail of both PDM variants: dual prox step, then the two primal
/// descent steps from `x` and from `z`.
#[allow(clippy::too_many_arguments)]
fn primal_dual_update(
    problem: &ProblemInstance,
    params: &StepParams,
    state: &IterateState,
    z: Vector,
    p: Vector,
    q: Vector,
    grad_x_at: impl FnOnce(&Vector, &Vector) -> Result<Vector>,
    grad_y_cache: Option<Vector>,
    oracle_calls: u64,
) -> Result<StepOutput> {
    let k = state.k;
    let ascent = &state.y + (&p + &q) * params.sigma;
    let y_next = problem.prox.prox(&ascent, params.sigma)?;
    guard(k, "dual iterate", &y_next)?;
    let r = grad_x_at(&z, &y_next).map_err(|e| e.at_iteration(k))?;
    guard(k, "x-gradient", &r)?;

    let x_next = &state.x - &r * params.gamma;
    let x_tilde_next = &z - &r * params.lambda;
    let y_move = (&y_next - &state.y).norm();
    let grad_x_norm = r.norm();

    let next = IterateState {
        x: x_next,
        x_tilde: x_tilde_next,
        x_prev: state.x.clone(),
        y: y_next,
        k: k + 1,
        z_last: z,
        grad_y_prev: grad_y_cache,
    };
    guard_state(&next)?;
    Ok(StepOutput {
        state: next,
        p,
        q,
        r,
        y_move,
        grad_x_norm,
        oracle_calls,
    })
}

/// One iteration of the deterministic primal-dual method with momentum.
///
/// `grad_y L(x_{k-1}, .)` is reused from the previous step when available,
/// which is exact because `L` is affine in `y`; a step then costs three
/// gradient evaluations.
pub fn pdm_step(
    problem: &ProblemInstance,
    schedule: &Schedule,
    state: &IterateState,
) -> Result<StepOutput> {
    let k = state.k;
    let params = schedule.params(k)?;
    let oracle = &problem.oracle;
    let (x, y) = (&state.x, &state.y);

    let z = &state.x_tilde * (1.0 - params.alpha) + x * params.alpha;
    let p = oracle.grad_y(&z, y).map_err(|e| e.at_iteration(k))?;
    let gy_x = oracle.grad_y(x, y).map_err(|e| e.at_iteration(k))?;
    let mut calls = 3;
    let gy_prev = if state.x_prev == state.x {
        gy_x.clone()
    } else if let Some(cached) = &state.grad_y_prev {
        cached.clone()
    } else {
        calls += 1;
        oracle
            .grad_y(&state.x_prev, y)
            .map_err(|e| e.at_iteration(k))?
    };
    guard(k, "y-gradient", &p)?;
    guard(k, "y-gradient", &gy_x)?;
    let q = (&gy_x - &gy_prev) * momentum_scale(problem, &params);

    primal_dual_update(
        problem,
        &params,
        state,
        z,
        p,
        q,
        |z, y| oracle.grad_x(z, y),
        Some(gy_x),
        calls,
    )
}

/// One iteration of the stochastic primal-dual method with momentum.
///
/// `p` and `q` use the y-batch `V_k`; `r` uses the x-batch `U_k`. In
/// exhaustive mode the batches are the full sample set and the step is the
/// deterministic one.
pub fn spdm_step(
    problem: &ProblemInstance,
    schedule: &Schedule,
    state: &IterateState,
    sampler: &BatchSampler,
    batch_size: usize,
) -> Result<StepOutput> {
    if batch_size == 0 {
        return Err(Error::Config("mini-batch size must be at least 1".into()));
    }
    if sampler.mode == SamplingMode::Exhaustive {
        return pdm_step(problem, schedule, state);
    }
    let k = state.k;
    let params = schedule.params(k)?;
    let oracle = &problem.oracle;
    let n = oracle.num_samples().ok_or_else(|| {
        Error::Unsupported("problem has no sample space for mini-batches".into())
    })?;
    let batch = sampler.draw(k, batch_size, n)?;
    let (x, y) = (&state.x, &state.y);
    let v = &batch.v_indices;

    let z = &state.x_tilde * (1.0 - params.alpha) + x * params.alpha;
    let p = oracle.grad_y_batch(&z, y, v).map_err(|e| e.at_iteration(k))?;
    let gy_x = oracle.grad_y_batch(x, y, v).map_err(|e| e.at_iteration(k))?;
    let b = batch_size as u64;
    let mut calls = 3 * b;
    let gy_prev = if state.x_prev == state.x {
        gy_x.clone()
    } else {
        calls += b;
        oracle
            .grad_y_batch(&state.x_prev, y, v)
            .map_err(|e| e.at_iteration(k))?
    };
    guard(k, "y-gradient", &p)?;
    guard(k, "y-gradient", &gy_x)?;
    let q = (&gy_x - &gy_prev) * momentum_scale(problem, &params);

    let u = batch.u_indices;
    primal_dual_update(
        problem,
        &params,
        state,
        z,
        p,
        q,
        |z, y| oracle.grad_x_batch(z, y, &u),
        None,
        calls,
    )
}

/// Step sizes of the descent-ascent baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSteps {
    pub x: f64,
    pub y: f64,
}

fn descent_ascent_step(
    problem: &ProblemInstance,
    steps: BaselineSteps,
    state: &IterateState,
    alternating: bool,
) -> Result<StepOutput> {
    let k = state.k;
    let oracle = &problem.oracle;
    let (x, y) = (&state.x, &state.y);
    let gx = oracle.grad_x(x, y).map_err(|e| e.at_iteration(k))?;
    guard(k, "x-gradient", &gx)?;
    let x_next = x - &gx * steps.x;
    let gy = if alternating {
        oracle.grad_y(&x_next, y)
    } else {
        oracle.grad_y(x, y)
    }
    .map_err(|e| e.at_iteration(k))?;
    guard(k, "y-gradient", &gy)?;
    let y_next = problem.prox.prox(&(y + &gy * steps.y), steps.y)?;
    let y_move = (&y_next - y).norm();
    let grad_x_norm = gx.norm();
    let next = IterateState {
        x_tilde: x_next.clone(),
        x_prev: x.clone(),
        z_last: x_next.clone(),
        x: x_next,
        y: y_next,
        k: k + 1,
        grad_y_prev: None,
    };
    guard_state(&next)?;
    Ok(StepOutput {
        state: next,
        p: gy,
        q: Vector::zeros(problem.dim_y()),
        r: gx,
        y_move,
        grad_x_norm,
        oracle_calls: 2,
    })
}

/// Alternating gradient descent-ascent: the ascent step sees the new `x`.
pub fn agda_step(
    problem: &ProblemInstance,
    steps: BaselineSteps,
    state: &IterateState,
) -> Result<StepOutput> {
    descent_ascent_step(problem, steps, state, true)
}

/// Simultaneous gradient descent-ascent.
pub fn gda_step(
    problem: &ProblemInstance,
    steps: BaselineSteps,
    state: &IterateState,
) -> Result<StepOutput> {
    descent_ascent_step(problem, steps, state, false)
}

/// Iterate with the smallest stationarity measure seen during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BestIterate {
    pub k: usize,
    pub z: Vector,
    pub y: Vector,
    pub stationarity: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub state: IterateState,
    pub best: BestIterate,
    pub oracle_calls: u64,
    pub schedule: Schedule,
    /// The step error that ended the run early, if any.
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn into_result(self) -> Result<RunOutput> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Runs `config.horizon` iterations of the configured solver from `init`.
///
/// A record is kept at `k = 0`, every `trace_every` iterations, and at the
/// final iteration. The stationarity measure is evaluated at every
/// iteration (exact oracles, not counted as oracle calls) to track the best
/// iterate. Step failures end the run and are returned in
/// [`RunOutput::failure`] with the trace up to that point.
pub fn run(
    problem: &ProblemInstance,
    config: &RunConfig,
    init: IterateState,
) -> Result<RunOutput> {
    config.validate(problem)?;
    if init.x.len() != problem.dim_x() || init.y.len() != problem.dim_y() {
        return Err(Error::Dimension(format!(
            "initial point has dims ({}, {}), problem has ({}, {})",
            init.x.len(),
            init.y.len(),
            problem.dim_x(),
            problem.dim_y()
        )));
    }
    let schedule = make_schedule(&problem.constants, config.horizon.max(1), config.schedule)?;
    let sampler = BatchSampler::new(config.seed, config.sampling);
    let batch = config.effective_batch();
    let baseline = |k: usize| -> Result<BaselineSteps> {
        Ok(BaselineSteps {
            x: config.step_x.map_or_else(|| schedule.lambda(k), Ok)?,
            y: config.step_y.map_or_else(|| schedule.sigma(k), Ok)?,
        })
    };
    let is_baseline = matches!(config.solver, SolverKind::Gda | SolverKind::Agda);
    let measure_sigma = |k: usize| -> Result<f64> {
        if is_baseline {
            Ok(baseline(k)?.y)
        } else {
            schedule.sigma(k)
        }
    };

    let start = Instant::now();
    let elapsed = || {
        if config.record_wall_time {
            start.elapsed().as_nanos() as u64
        } else {
            0
        }
    };

    let mut state = init;
    let mut oracle_calls = 0u64;
    let mut trace = Vec::new();

    let initial = stationarity_measure(problem, &state.x, &state.y, measure_sigma(0)?, None)?;
    let mut best = BestIterate {
        k: 0,
        z: state.x.clone(),
        y: state.y.clone(),
        stationarity: initial.value,
    };
    trace.push(TraceRecord {
        k: 0,
        oracle_calls: 0,
        stationarity: initial.value,
        grad_x_norm: initial.grad_x_sq.sqrt(),
        primal_value: problem.phi(&state.x, &state.y)?,
        wall_ns: elapsed(),
        best_so_far: initial.value,
    });

    let mut failure = None;
    for k in 0..config.horizon {
        let step = match config.solver {
            SolverKind::Pdm => pdm_step(problem, &schedule, &state),
            SolverKind::Spdm => spdm_step(problem, &schedule, &state, &sampler, batch),
            SolverKind::Gda => baseline(k).and_then(|s| gda_step(problem, s, &state)),
            SolverKind::Agda => baseline(k).and_then(|s| agda_step(problem, s, &state)),
        };
        let out = match step {
            Ok(out) => out,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        oracle_calls += out.oracle_calls;
        state = out.state;

        let q = (!is_baseline).then_some(&out.q);
        let measured = stationarity_measure(problem, &state.z_last, &state.y, measure_sigma(k)?, q)
            .and_then(|m| Ok((m, problem.phi(&state.x, &state.y)?)))
            .map_err(|e| e.at_iteration(k));
        let (m, primal_value) = match measured {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        if m.value < best.stationarity {
            best = BestIterate {
                k: state.k,
                z: state.z_last.clone(),
                y: state.y.clone(),
                stationarity: m.value,
            };
        }
        if state.k.is_multiple_of(config.trace_every) || state.k == config.horizon {
            trace.push(TraceRecord {
                k: state.k,
                oracle_calls,
                stationarity: m.value,
                grad_x_norm: m.grad_x_sq.sqrt(),
                primal_value,
                wall_ns: elapsed(),
                best_so_far: best.stationarity,
            });
        }
    }

    Ok(RunOutput {
        trace,
        state,
        best,
        oracle_calls,
        schedule,
        failure,
    })
}
