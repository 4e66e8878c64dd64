//! JSON-configured experiments: build a problem from a spec, run a solver,
//! and write `trace.csv` / `summary.json`; horizon sweeps and solver
//! comparisons on top of that.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{gap_function, rate_fit, GapEstimate, TraceRecord};
use crate::problem::{local_constants, IterateState, ProblemConstants, ProblemInstance, Vector};
use crate::problems::{
    load_libsvm, make_synthetic, synthetic_dataset, DroLogisticProblem, LqrGailProblem,
    SyntheticPLProblem, SyntheticParams,
};
use crate::prox::{ProxSpec, QuadraticReg};
use crate::schedule::ScheduleRules;
use crate::solvers::{run, RunConfig, RunOutput, SolverKind};

pub const TRACE_HEADER: &str = "k,oracle_calls,stationarity,grad_x_norm,primal_value,wall_ns,best_so_far";

/// Default mini-batch size for SPDM on DRO problems.
pub const DRO_DEFAULT_BATCH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    /// Replaces the problem's own constants when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ProblemConstants>,
    pub solver: RunConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `L(x, y) = mu x^2 / 2 + x y` with `h = 0`.
    Toy { mu: f64 },
    Synthetic {
        dim_x: usize,
        dim_y: usize,
        mu: f64,
        #[serde(default)]
        rank_deficiency: usize,
        #[serde(default = "one")]
        coupling: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise_x: f64,
        #[serde(default)]
        noise_y: f64,
        #[serde(default = "sixty_four")]
        n_samples: usize,
        /// Dual prox; `h = 0` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prox: Option<ProxSpec>,
    },
    /// Weighted logistic loss over `{y >= delta/n, ||n y - 1|| <= radius}`.
    /// Reads `dataset` (LIBSVM format) or generates `n x d` synthetic data.
    Dro {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dataset: Option<PathBuf>,
        #[serde(default = "dro_n")]
        n: usize,
        #[serde(default = "dro_d")]
        d: usize,
        #[serde(default = "dro_flip")]
        flip: f64,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "dro_delta")]
        delta: f64,
        #[serde(default = "dro_radius")]
        radius: f64,
        #[serde(default = "default_mu")]
        mu: f64,
        /// Weight of `(c/2) ||y - 1/n||^2` added to `h`.
        #[serde(default)]
        regularizer: f64,
    },
    /// Imitation of an LQR expert over gains `K` and costs `(Q, R)`.
    Lqr {
        #[serde(default = "lqr_state_dim")]
        state_dim: usize,
        #[serde(default = "lqr_input_dim")]
        input_dim: usize,
        #[serde(default)]
        instance_seed: u64,
        #[serde(default = "lqr_bounds")]
        q_bounds: [f64; 2],
        #[serde(default = "lqr_bounds")]
        r_bounds: [f64; 2],
        #[serde(default = "default_mu")]
        mu: f64,
        /// Multiplier on the finite-difference curvature at the start point.
        #[serde(default = "lqr_safety")]
        safety: f64,
        /// Weight of `(c/2) ||theta - theta_0||^2` added to `h`.
        #[serde(default)]
        regularizer: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn sixty_four() -> usize {
    64
}
fn dro_n() -> usize {
    60
}
fn dro_d() -> usize {
    100
}
fn dro_flip() -> f64 {
    0.1
}
fn dro_delta() -> f64 {
    0.01
}
fn dro_radius() -> f64 {
    100.0
}
fn default_mu() -> f64 {
    0.1
}
fn lqr_state_dim() -> usize {
    4
}
fn lqr_input_dim() -> usize {
    3
}
fn lqr_bounds() -> [f64; 2] {
    [0.1, 100.0]
}
fn lqr_safety() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Overrides `solver.trace_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(default)]
    pub gap: bool,
    #[serde(default = "default_gap_budget")]
    pub gap_budget: usize,
    #[serde(default)]
    pub gap_seed: u64,
    /// Overrides `solver.record_wall_time`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<bool>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_gap_budget() -> usize {
    1000
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            trace_every: None,
            gap: false,
            gap_budget: default_gap_budget(),
            gap_seed: 0,
            wall_clock: None,
        }
    }
}

/// Starting point. Explicit values win; otherwise `x_seed` draws `x_0`
/// uniformly from `[-1, 1]^n`; otherwise a per-problem default is used
/// (ones for toy/synthetic, zeros for DRO and LQR).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_seed: Option<u64>,
}

/// A problem instance together with its starting point.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub instance: ProblemInstance,
    pub x0: Vector,
    pub y0: Vector,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a spec file, or the `resolved_config` of a `summary.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("resolved_config") {
            Some(cfg) if value.get("problem").is_none() => Ok(serde_json::from_value(cfg.clone())?),
            _ => Ok(serde_json::from_value(value)?),
        }
    }

    /// Folds the output overrides and problem defaults into the solver
    /// config, so the result reproduces the run on its own.
    pub fn resolved(&self) -> Result<ExperimentSpec> {
        let mut spec = self.clone();
        if let Some(every) = spec.output.trace_every.take() {
            spec.solver.trace_every = every;
        }
        if let Some(wall) = spec.output.wall_clock.take() {
            spec.solver.record_wall_time = wall;
        }
        if let ProblemSpec::Dro { dataset, .. } = &mut spec.problem {
            if spec.solver.solver == SolverKind::Spdm && spec.solver.batch_size.is_none() {
                spec.solver.batch_size = Some(DRO_DEFAULT_BATCH);
            }
            if let Some(path) = dataset {
                *path = fs::canonicalize(&*path)?;
            }
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        let mut built = build_problem(&self.problem, &self.init)?;
        if let Some(c) = self.constants {
            built.instance = ProblemInstance::new(built.instance.oracle, built.instance.prox, c)?;
        }
        Ok(built)
    }
}

fn init_vector(explicit: &Option<Vec<f64>>, dim: usize, default: Vector, what: &str) -> Result<Vector> {
    match explicit {
        Some(v) if v.len() != dim => Err(Error::Dimension(format!(
            "init.{what} has length {}, expected {dim}",
            v.len()
        ))),
        Some(v) => Ok(Vector::from_column_slice(v)),
        None => Ok(default),
    }
}

fn default_x(init: &InitSpec, dim: usize, fallback: Vector) -> Vector {
    match init.x_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
        }
        None => fallback,
    }
}

pub fn build_problem(spec: &ProblemSpec, init: &InitSpec) -> Result<BuiltProblem> {
    match spec {
        ProblemSpec::Toy { mu } => {
            let toy = SyntheticPLProblem::toy(*mu)?;
            let constants = toy.constants()?;
            let instance = ProblemInstance::new(Arc::new(toy), ProxSpec::Zero, constants)?;
            finish(instance, init, Vector::from_element(1, 1.0), Vector::zeros(1))
        }
        ProblemSpec::Synthetic {
            dim_x,
            dim_y,
            mu,
            rank_deficiency,
            coupling,
            seed,
            noise_x,
            noise_y,
            n_samples,
            prox,
        } => {
            let params = SyntheticParams {
                dim_x: *dim_x,
                dim_y: *dim_y,
                mu: *mu,
                rank_deficiency: *rank_deficiency,
                coupling: *coupling,
                seed: *seed,
                noise_x: *noise_x,
                noise_y: *noise_y,
                n_samples: *n_samples,
            };
            let problem = make_synthetic(&params)?;
            let constants = problem.constants()?;
            let prox = prox.clone().unwrap_or(ProxSpec::Zero);
            let y0 = prox.prox(&Vector::zeros(*dim_y), 1.0)?;
            let instance = ProblemInstance::new(Arc::new(problem), prox, constants)?;
            finish(instance, init, Vector::from_element(*dim_x, 1.0), y0)
        }
        ProblemSpec::Dro {
            dataset,
            n,
            d,
            flip,
            data_seed,
            delta,
            radius,
            mu,
            regularizer,
        } => {
            let data = match dataset {
                Some(path) => load_libsvm(path)?,
                None => synthetic_dataset(*n, *d, *flip, *data_seed)?,
            };
            let problem = DroLogisticProblem::from_libsvm(data)?;
            let rows = problem.num_rows();
            let constants = problem.estimated_constants(*radius, *mu)?;
            let uniform = Vector::from_element(rows, 1.0 / rows as f64);
            let mut prox = ProxSpec::box_ball(rows, *delta, *radius)?;
            if *regularizer > 0.0 {
                prox = prox.with_regularizer(QuadraticReg {
                    weight: *regularizer,
                    center: uniform.as_slice().to_vec(),
                })?;
            }
            let x_dim = problem.num_features();
            let instance = ProblemInstance::new(Arc::new(problem), prox, constants)?;
            finish(instance, init, Vector::zeros(x_dim), uniform)
        }
        ProblemSpec::Lqr {
            state_dim,
            input_dim,
            instance_seed,
            q_bounds,
            r_bounds,
            mu,
            safety,
            regularizer,
        } => {
            let (problem, _theta_e) = LqrGailProblem::random(*state_dim, *input_dim, *instance_seed)?;
            let blocks = problem.theta_blocks((q_bounds[0], q_bounds[1]), (r_bounds[0], r_bounds[1]));
            let mut prox = ProxSpec::spectral_box(blocks)?;
            let clamp = |b: &[f64; 2]| 1.0f64.clamp(b[0], b[1]);
            let theta_default = problem.pack_theta(
                &(DMatrix::identity(*state_dim, *state_dim) * clamp(q_bounds)),
                &(DMatrix::identity(*input_dim, *input_dim) * clamp(r_bounds)),
            );
            let x0 = default_x(init, problem.dim_gain(), Vector::zeros(problem.dim_gain()));
            let x0 = init_vector(&init.x, problem.dim_gain(), x0, "x")?;
            let y0 = init_vector(&init.y, theta_default.len(), theta_default, "y")?;
            if *regularizer > 0.0 {
                prox = prox.with_regularizer(QuadraticReg {
                    weight: *regularizer,
                    center: y0.as_slice().to_vec(),
                })?;
            }
            if !(*safety > 0.0) {
                return Err(Error::Config("lqr safety factor must be positive".into()));
            }
            let (l_xx, l_xy) = local_constants(&problem, &x0, &y0)?;
            let constants = ProblemConstants::new(*safety * l_xx, *safety * l_xy, *mu)?;
            let instance = ProblemInstance::new(Arc::new(problem), prox, constants)?;
            Ok(BuiltProblem { instance, x0, y0 })
        }
    }
}

fn finish(instance: ProblemInstance, init: &InitSpec, x_fallback: Vector, y_fallback: Vector) -> Result<BuiltProblem> {
    let x0 = default_x(init, instance.dim_x(), x_fallback);
    let x0 = init_vector(&init.x, instance.dim_x(), x0, "x")?;
    let y0 = init_vector(&init.y, instance.dim_y(), y_fallback, "y")?;
    Ok(BuiltProblem { instance, x0, y0 })
}

/// Independent, reproducible seed for one member of a sweep or comparison.
pub fn derive_seed(master: u64, solver: SolverKind, horizon: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((solver.index() << 32) ^ horizon as u64);
    rng.next_u64()
}

/// Step-size information recorded in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleSummary {
    pub rules: ScheduleRules,
    pub alpha_0: f64,
    pub gamma_0: f64,
    pub lambda_0: f64,
    pub sigma_0: f64,
    pub min_c: Option<f64>,
    pub window_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    /// `ok`, `diverged` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub solver: SolverKind,
    pub horizon: usize,
    pub iterations: usize,
    pub oracle_calls: u64,
    pub final_stationarity: f64,
    pub best_stationarity: f64,
    pub k_star: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<GapEstimate>,
    pub constants: ProblemConstants,
    pub schedule: ScheduleSummary,
    pub resolved_config: ExperimentSpec,
}

/// Result of [`execute`]: the run itself plus what was written to disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub output: RunOutput,
    pub summary: RunSummary,
    pub dir: PathBuf,
}

impl RunArtifacts {
    /// Process exit code: 0 on success, 3 on divergence, 1 on other failures.
    pub fn exit_code(&self) -> i32 {
        match &self.output.failure {
            None => 0,
            Some(e) => exit_code(e),
        }
    }
}

/// Exit code for an error: 2 for configuration problems, 3 for divergence,
/// 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::Unstable { .. } => 3,
        Error::InvalidConstants(_)
        | Error::InvalidSchedule(_)
        | Error::Dimension(_)
        | Error::Parse { .. }
        | Error::Unsupported(_)
        | Error::Config(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Runs a resolved spec and writes `trace.csv` and `summary.json` into its
/// output directory. The trace is written even when the solver fails.
pub fn execute(spec: &ExperimentSpec) -> Result<RunArtifacts> {
    let spec = spec.resolved()?;
    let built = spec.build()?;
    let output = run(
        &built.instance,
        &spec.solver,
        IterateState::new(built.x0.clone(), built.y0.clone()),
    )?;
    let dir = spec.output.dir.clone();
    fs::create_dir_all(&dir)?;
    write_trace_csv(dir.join("trace.csv"), &output.trace)?;

    let gap = if spec.output.gap && output.failure.is_none() {
        Some(gap_function(
            &built.instance,
            &output.state.x,
            &output.state.y,
            spec.output.gap_budget,
            spec.output.gap_seed,
        )?)
    } else {
        None
    };
    let summary = summarize(&spec, &built.instance, &output, gap)?;
    let file = BufWriter::new(fs::File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(file, &summary)?;
    Ok(RunArtifacts {
        output,
        summary,
        dir,
    })
}

fn summarize(
    spec: &ExperimentSpec,
    instance: &ProblemInstance,
    output: &RunOutput,
    gap: Option<GapEstimate>,
) -> Result<RunSummary> {
    let sched = &output.schedule;
    let p0 = sched.params(0)?;
    let last = output.trace.last().ok_or_else(|| Error::Config("empty trace".into()))?;
    let (status, failure) = match &output.failure {
        None => ("ok", None),
        Some(e @ Error::Divergence { .. }) => ("diverged", Some(e.to_string())),
        Some(e) => ("failed", Some(e.to_string())),
    };
    Ok(RunSummary {
        status: status.into(),
        failure,
        solver: spec.solver.solver,
        horizon: spec.solver.horizon,
        iterations: output.state.k,
        oracle_calls: output.oracle_calls,
        final_stationarity: last.stationarity,
        best_stationarity: output.best.stationarity,
        k_star: output.best.k,
        gap,
        constants: instance.constants,
        schedule: ScheduleSummary {
            rules: sched.rules(),
            alpha_0: p0.alpha,
            gamma_0: p0.gamma,
            lambda_0: p0.lambda,
            sigma_0: p0.sigma,
            min_c: sched.min_c(&instance.constants).ok(),
            window_violations: sched.window_violations().len(),
        },
        resolved_config: spec.clone(),
    })
}

/// Writes a trace with `{:e}` floats (shortest round-trip form) and LF
/// line endings.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{},{:e}",
            r.k, r.oracle_calls, r.stationarity, r.grad_x_norm, r.primal_value, r.wall_ns, r.best_so_far
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != TRACE_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: "unexpected trace header".into(),
                });
            }
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.into(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        out.push(TraceRecord {
            k: int(f[0])? as usize,
            oracle_calls: int(f[1])?,
            stationarity: float(f[2])?,
            grad_x_norm: float(f[3])?,
            primal_value: float(f[4])?,
            wall_ns: int(f[5])?,
            best_so_far: float(f[6])?,
        });
    }
    Ok(out)
}

/// One row of `rate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub best_stationarity: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `None` with fewer than three horizons.
    pub slope: Option<f64>,
}

/// Runs the spec once per horizon into `<dir>/T<horizon>/` and writes
/// `<dir>/rate.csv` with columns `T,best_stationarity,slope`.
pub fn sweep(spec: &ExperimentSpec, horizons: &[usize]) -> Result<SweepResult> {
    if horizons.len() < 2 {
        return Err(Error::Config("a sweep needs at least 2 horizons".into()));
    }
    let base = spec.resolved()?;
    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let mut member = base.clone();
        member.solver.horizon = t;
        member.solver.seed = derive_seed(base.solver.seed, base.solver.solver, t);
        member.output.dir = base.output.dir.join(format!("T{t}"));
        let art = execute(&member)?;
        rows.push(SweepRow {
            horizon: t,
            best_stationarity: art.summary.best_stationarity,
            status: art.summary.status.clone(),
        });
    }
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.horizon, r.best_stationarity)).collect();
    let slope = if points.len() >= 3 {
        Some(rate_fit(&points)?)
    } else {
        None
    };
    fs::create_dir_all(&base.output.dir)?;
    let mut w = BufWriter::new(fs::File::create(base.output.dir.join("rate.csv"))?);
    writeln!(w, "T,best_stationarity,slope")?;
    for r in &rows {
        match slope {
            Some(s) => writeln!(w, "{},{:e},{:e}", r.horizon, r.best_stationarity, s)?,
            None => writeln!(w, "{},{:e},", r.horizon, r.best_stationarity)?,
        }
    }
    w.flush()?;
    Ok(SweepResult { rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareResult {
    pub columns: Vec<String>,
    /// `(budget, best_so_far per solver)`.
    pub rows: Vec<(u64, Vec<f64>)>,
}

/// Runs each solver on the same problem and starting point with a matched
/// oracle budget: the spec's solver and horizon fix the budget, and every
/// other solver gets as many steps as that budget buys. Writes
/// `<dir>/<column>/` per solver and `<dir>/compare.csv`, whose rows follow
/// the first solver's trace and hold each solver's `best_so_far` at the
/// record with the nearest oracle-call count.
pub fn compare(spec: &ExperimentSpec, solvers: &[SolverKind]) -> Result<CompareResult> {
    if solvers.len() < 2 {
        return Err(Error::Config("a comparison needs at least 2 solvers".into()));
    }
    let base = spec.resolved()?;
    let budget = base.solver.horizon as u64 * base.solver.solver.calls_per_step(base.solver.effective_batch());
    let mut columns: Vec<String> = Vec::new();
    let mut traces = Vec::new();
    for &s in solvers {
        let mut name = s.name().to_string();
        let mut dup = 1;
        while columns.contains(&name) {
            dup += 1;
            name = format!("{}_{dup}", s.name());
        }
        let mut member = base.clone();
        member.solver.solver = s;
        let mut member = member.resolved()?;
        let per_step = s.calls_per_step(member.solver.effective_batch());
        member.solver.horizon = (budget / per_step) as usize;
        member.solver.seed = derive_seed(base.solver.seed, s, member.solver.horizon);
        member.output.dir = base.output.dir.join(&name);
        let art = execute(&member)?;
        columns.push(name);
        traces.push(art.output.trace);
    }
    let rows: Vec<(u64, Vec<f64>)> = traces[0]
        .iter()
        .map(|r| {
            let b = r.oracle_calls;
            (b, traces.iter().map(|t| nearest(t, b).best_so_far).collect())
        })
        .collect();
    fs::create_dir_all(&base.output.dir)?;
    let mut w = BufWriter::new(fs::File::create(base.output.dir.join("compare.csv"))?);
    writeln!(w, "oracle_calls,{}", columns.join(","))?;
    for (b, vals) in &rows {
        let cells: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{b},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(CompareResult { columns, rows })
}

// Record whose oracle count is closest to `budget`, earlier on ties.
fn nearest(trace: &[TraceRecord], budget: u64) -> &TraceRecord {
    let mut best = &trace[0];
    for r in trace {
        if r.oracle_calls.abs_diff(budget) < best.oracle_calls.abs_diff(budget) {
            best = r;
        }
    }
    best
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Toy { .. } => "toy",
            ProblemSpec::Synthetic { .. } => "synthetic",
            ProblemSpec::Dro { .. } => "dro",
            ProblemSpec::Lqr { .. } => "lqr",
        }
    }
}
