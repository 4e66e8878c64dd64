//! Step-size schedules for the primal-dual methods.
//!
//! The default schedule uses zero-based indexing with
//! `alpha_k = 2 / (k + 2)`, `lambda_k = 1 / (2 l_xx)`,
//! `gamma_k = (1 + alpha_k / 4) lambda_k` and `sigma_k = mu / (36 l_xy^2)`.
//! All sequences are materialized for `k < T`, together with the products
//! `Gamma_k` and their tail sums, so every query is `O(1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemConstants;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha_k = 2 / (k + 2)`.
    #[default]
    Accelerated,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// `lambda_k = 1 / (2 l_xx)`.
    #[default]
    HalfInverseLipschitz,
    /// `lambda_k = alpha_k gamma_k` (Nesterov-type variant). Requires a
    /// gamma rule that does not itself depend on lambda.
    AlphaGamma,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `gamma_k = (1 + alpha_k / 4) lambda_k`, the top of the admissible window.
    #[default]
    WindowTop,
    /// `gamma_k = lambda_k`; the primal step degenerates to gradient descent.
    EqualLambda,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `sigma_k = mu / (36 l_xy^2)`.
    #[default]
    Theorem,
    /// The smaller `sigma_k = mu^2 / (216 l_xy^2)` used in the convergence proof.
    Proof,
    Constant(f64),
}

/// Per-parameter replacements for the default schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleRules {
    pub alpha: AlphaRule,
    pub lambda: LambdaRule,
    pub gamma: GammaRule,
    pub sigma: SigmaRule,
}

/// Step sizes for a single iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    horizon: usize,
    rules: ScheduleRules,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
    big_gamma: Vec<f64>,
    // tail[k] = sum_{tau = k}^{T-1} Gamma_tau
    tail: Vec<f64>,
}

/// Builds the schedule for horizon `T` from problem constants and optional
/// rule overrides.
pub fn make_schedule(
    constants: &ProblemConstants,
    horizon: usize,
    rules: ScheduleRules,
) -> Result<Schedule> {
    constants.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidSchedule("horizon must be at least 1".into()));
    }
    if matches!(rules.lambda, LambdaRule::AlphaGamma)
        && matches!(rules.gamma, GammaRule::WindowTop | GammaRule::EqualLambda)
    {
        return Err(Error::InvalidSchedule(
            "lambda = alpha * gamma needs a constant gamma".into(),
        ));
    }

    let l_xx = constants.l_xx;
    let sigma_value = match rules.sigma {
        SigmaRule::Constant(s) => s,
        SigmaRule::Theorem | SigmaRule::Proof if constants.l_xy == 0.0 => {
            return Err(Error::InvalidSchedule(
                "l_xy = 0 leaves sigma undefined; supply a constant sigma".into(),
            ))
        }
        SigmaRule::Theorem => constants.mu / (36.0 * constants.l_xy * constants.l_xy),
        SigmaRule::Proof => {
            constants.mu * constants.mu / (216.0 * constants.l_xy * constants.l_xy)
        }
    };
    if !(sigma_value.is_finite() && sigma_value > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "sigma must be positive and finite (got {sigma_value})"
        )));
    }

    let mut alpha = Vec::with_capacity(horizon);
    let mut gamma = Vec::with_capacity(horizon);
    let mut lambda = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let a = match rules.alpha {
            AlphaRule::Accelerated => 2.0 / (k as f64 + 2.0),
            AlphaRule::Constant(c) => c,
        };
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{k} = {a} is outside (0, 1]"
            )));
        }
        let (l, g) = match (rules.lambda, rules.gamma) {
            (LambdaRule::AlphaGamma, GammaRule::Constant(g)) => (a * g, g),
            (LambdaRule::AlphaGamma, _) => unreachable!("rejected above"),
            (lr, gr) => {
                let l = match lr {
                    LambdaRule::HalfInverseLipschitz => 1.0 / (2.0 * l_xx),
                    LambdaRule::Constant(c) => c,
                    LambdaRule::AlphaGamma => unreachable!(),
                };
                let g = match gr {
                    GammaRule::WindowTop => (1.0 + a / 4.0) * l,
                    GammaRule::EqualLambda => l,
                    GammaRule::Constant(c) => c,
                };
                (l, g)
            }
        };
        if !(l > 0.0 && l.is_finite() && g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "step sizes at k = {k} must be positive (lambda = {l}, gamma = {g})"
            )));
        }
        if g * (1.0 - l_xx * g) <= 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "gamma_{k} = {g} makes gamma (1 - l_xx gamma) nonpositive"
            )));
        }
        alpha.push(a);
        lambda.push(l);
        gamma.push(g);
    }

    let mut big_gamma = Vec::with_capacity(horizon);
    let mut prod = 1.0;
    for (k, a) in alpha.iter().enumerate() {
        if k > 0 {
            prod *= 1.0 - a;
        }
        big_gamma.push(prod);
    }
    let mut tail = vec![0.0; horizon];
    let mut acc = 0.0;
    for k in (0..horizon).rev() {
        acc += big_gamma[k];
        tail[k] = acc;
    }

    Ok(Schedule {
        horizon,
        rules,
        alpha,
        gamma,
        lambda,
        sigma: vec![sigma_value; horizon],
        big_gamma,
        tail,
    })
}

impl Schedule {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn rules(&self) -> ScheduleRules {
        self.rules
    }

    fn check(&self, k: usize) -> Result<()> {
        if k >= self.horizon {
            Err(Error::OutOfHorizon {
                k,
                horizon: self.horizon,
            })
        } else {
            Ok(())
        }
    }

    pub fn params(&self, k: usize) -> Result<StepParams> {
        self.check(k)?;
        Ok(StepParams {
            alpha: self.alpha[k],
            gamma: self.gamma[k],
            lambda: self.lambda[k],
            sigma: self.sigma[k],
        })
    }

    pub fn alpha(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.alpha[k])
    }

    pub fn gamma(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.gamma[k])
    }

    pub fn lambda(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.lambda[k])
    }

    pub fn sigma(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.sigma[k])
    }

    /// `Gamma_k`: `Gamma_0 = 1`, `Gamma_k = (1 - alpha_k) Gamma_{k-1}`.
    pub fn gamma_seq(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.big_gamma[k])
    }

    /// `sum_{tau = k}^{T-1} Gamma_tau`.
    pub fn gamma_tail(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.tail[k])
    }

    /// `C_k = 1 - l_xx gamma_k - l_xx (gamma_k - lambda_k)^2 / (2 alpha_k Gamma_k gamma_k) * tail_k`.
    pub fn c_k(&self, constants: &ProblemConstants, k: usize) -> Result<f64> {
        self.check(k)?;
        let big_gamma = self.big_gamma[k];
        if big_gamma == 0.0 {
            return Err(Error::ScheduleDegenerate { k });
        }
        let (a, g, l) = (self.alpha[k], self.gamma[k], self.lambda[k]);
        let l_xx = constants.l_xx;
        let d = g - l;
        Ok(1.0 - l_xx * g - l_xx * d * d / (2.0 * a * big_gamma * g) * self.tail[k])
    }

    /// Smallest `C_k` over the horizon.
    pub fn min_c(&self, constants: &ProblemConstants) -> Result<f64> {
        (0..self.horizon).try_fold(f64::INFINITY, |m, k| Ok(m.min(self.c_k(constants, k)?)))
    }

    /// Indices where `lambda_k <= gamma_k <= (1 + alpha_k / 4) lambda_k` fails.
    pub fn window_violations(&self) -> Vec<usize> {
        (0..self.horizon)
            .filter(|&k| {
                let (a, g, l) = (self.alpha[k], self.gamma[k], self.lambda[k]);
                !(l <= g && g <= (1.0 + a / 4.0) * l)
            })
            .collect()
    }
}
