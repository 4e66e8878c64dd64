//! Convergence measures: the stationarity measure tracked by the solvers,
//! an empirical gap-function estimate, and log-log rate fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, Vector};
use crate::prox::ProxSpec;

/// One row of convergence telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub oracle_calls: u64,
    /// `||grad_x L(z_k, y_k)||^2 + ||y_bar - y_k||^2`.
    pub stationarity: f64,
    pub grad_x_norm: f64,
    /// `Phi(x_k, y_k)`.
    pub primal_value: f64,
    pub wall_ns: u64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationarity {
    pub value: f64,
    pub grad_x_sq: f64,
    pub dual_move_sq: f64,
    pub y_bar: Vector,
}

/// `||grad_x L(z, y)||^2 + ||y_bar - y||^2` with
/// `y_bar = prox_{sigma h}(y + sigma (grad_y L(z, y) + q))`.
///
/// `q` is the solver's current dual momentum (`None` for zero).
pub fn stationarity_measure(
    problem: &ProblemInstance,
    z: &Vector,
    y: &Vector,
    sigma: f64,
    q: Option<&Vector>,
) -> Result<Stationarity> {
    let gx = problem.oracle.grad_x(z, y)?;
    let mut ascent = problem.oracle.grad_y(z, y)?;
    if let Some(q) = q {
        ascent += q;
    }
    let y_bar = problem.prox.prox(&(y + ascent * sigma), sigma)?;
    let grad_x_sq = gx.norm_squared();
    let dual_move_sq = (&y_bar - y).norm_squared();
    Ok(Stationarity {
        value: grad_x_sq + dual_move_sq,
        grad_x_sq,
        dual_move_sq,
        y_bar,
    })
}

/// Outcome of one inner descent run of the gap estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerReport {
    pub start: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub failed: Option<String>,
}

/// Empirical estimate of `sup_y Phi(x_T, y) - inf_x Phi(x, y_T)`.
///
/// The supremum is concave and solved by projected gradient ascent; the
/// infimum is nonconvex in general and only estimated by multi-start
/// gradient descent, so the result is an estimate, not a certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub sup_value: f64,
    pub inf_value: f64,
    /// Norm of the final projected-gradient mapping of the ascent.
    pub sup_residual: f64,
    /// Gradient norm at the best descent end point.
    pub inf_residual: f64,
    pub inner: Vec<InnerReport>,
}

const GAP_STARTS: usize = 5;

pub fn gap_function(
    problem: &ProblemInstance,
    x_t: &Vector,
    y_t: &Vector,
    budget: usize,
    seed: u64,
) -> Result<GapEstimate> {
    let (sup_value, sup_residual) = sup_over_y(problem, x_t, y_t, budget)?;
    let (inf_value, inf_residual, inner) = inf_over_x(problem, x_t, y_t, budget, seed)?;
    Ok(GapEstimate {
        gap: sup_value - inf_value,
        sup_value,
        inf_value,
        sup_residual,
        inf_residual,
        inner,
    })
}

/// Maximizes `y -> Phi(x, y)`, which is concave because `L` is affine in
/// `y`. Returns the value and the final projected-gradient residual.
pub fn sup_over_y(
    problem: &ProblemInstance,
    x: &Vector,
    y_start: &Vector,
    budget: usize,
) -> Result<(f64, f64)> {
    let c = problem.oracle.grad_y(x, y_start)?;
    let c_norm = c.norm();
    if let ProxSpec::Zero = problem.prox {
        return if c_norm == 0.0 {
            Ok((problem.phi(x, y_start)?, 0.0))
        } else {
            Ok((f64::INFINITY, c_norm))
        };
    }
    let mut y = problem.prox.prox(y_start, 1.0)?;
    if c_norm == 0.0 {
        return Ok((problem.phi(x, &y)?, 0.0));
    }
    let base = (1.0 + y.norm()) / c_norm;
    let mut best_y = y.clone();
    let mut best = problem.phi(x, &y)?;
    for t in 0..budget {
        let step = base / ((t + 1) as f64).sqrt();
        y = problem.prox.prox(&(&y + &c * step), step)?;
        let v = problem.phi(x, &y)?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                k: t,
                reason: "gap ascent left the domain of h".into(),
            });
        }
        if v > best {
            best = v;
            best_y = y.clone();
        }
    }
    let probe = problem.prox.prox(&(&best_y + &c * base), base)?;
    let residual = (probe - &best_y).norm() / base;
    Ok((best, residual))
}

fn inf_over_x(
    problem: &ProblemInstance,
    x_t: &Vector,
    y: &Vector,
    budget: usize,
    seed: u64,
) -> Result<(f64, f64, Vec<InnerReport>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.1 * (1.0 + x_t.norm());
    let step = 1.0 / problem.constants.l_xx;
    let h_y = problem.prox.h_value(y);
    let mut reports = Vec::with_capacity(GAP_STARTS);
    let mut best: Option<(f64, f64)> = None;

    for start in 0..GAP_STARTS {
        let mut x = x_t.clone();
        if start > 0 {
            let dir = Vector::from_fn(x.len(), |_, _| rng.random_range(-1.0..1.0));
            let norm = dir.norm().max(f64::MIN_POSITIVE);
            x += dir * (scale / norm);
        }
        match descend(problem, x, y, step, budget) {
            Ok((value, grad_norm)) => {
                let value = value - h_y;
                reports.push(InnerReport {
                    start,
                    value,
                    grad_norm,
                    failed: None,
                });
                if best.is_none_or(|(v, _)| value < v) {
                    best = Some((value, grad_norm));
                }
            }
            Err(e) => reports.push(InnerReport {
                start,
                value: f64::NAN,
                grad_norm: f64::NAN,
                failed: Some(e.to_string()),
            }),
        }
    }
    let (value, residual) = best.ok_or_else(|| Error::Divergence {
        k: budget,
        reason: "every gap descent start failed".into(),
    })?;
    Ok((value, residual, reports))
}

fn descend(
    problem: &ProblemInstance,
    mut x: Vector,
    y: &Vector,
    mut step: f64,
    budget: usize,
) -> Result<(f64, f64)> {
    let oracle = &problem.oracle;
    let mut value = oracle.value(&x, y)?;
    if !value.is_finite() {
        return Err(Error::Divergence {
            k: 0,
            reason: "non-finite start value".into(),
        });
    }
    let mut g = oracle.grad_x(&x, y)?;
    for t in 0..budget {
        // Backtrack on steps that leave the domain (e.g. destabilize a
        // policy) or increase the objective.
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &x - &g * step;
            match oracle.value(&candidate, y) {
                Ok(v) if v.is_finite() && v <= value => {
                    x = candidate;
                    value = v;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
        g = oracle.grad_x(&x, y)?;
        if x.norm() > crate::solvers::DIVERGENCE_NORM {
            return Err(Error::Divergence {
                k: t,
                reason: "gap descent diverged".into(),
            });
        }
    }
    Ok((value, g.norm()))
}

/// Least-squares slope of `log(stationarity)` against `log(T)`.
pub fn rate_fit(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Config(format!(
            "rate fit needs at least 3 horizons, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(t, s)| t == 0 || !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(
            "rate fit needs positive horizons and positive finite values".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(t, s)| ((t as f64).ln(), s.ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate fit needs distinct horizons".into()));
    }
    Ok(sxy / sxx)
}
