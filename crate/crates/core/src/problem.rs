//! Problem abstraction: gradient oracles for `L(x, y)`, the proximal term
//! `h(y)`, and the constants that drive step-size selection.
//!
//! Problems have the form `min_x max_y L(x, y) - h(y)` where `L(., y)`
//! satisfies a Polyak-Lojasiewicz inequality with constant `mu` and `L` is
//! linear (affine) in `y`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::ProxSpec;

pub type Vector = DVector<f64>;

/// Smoothness, PL and noise constants of a saddle-point problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    /// Lipschitz constant of `grad_x L` with respect to `x`.
    pub l_xx: f64,
    /// Lipschitz constant of `grad_x L` with respect to `y`.
    pub l_xy: f64,
    /// PL constant of `L(., y)`.
    pub mu: f64,
    /// Standard deviation bound of stochastic x-gradients (0 when exact).
    #[serde(default)]
    pub nu_x: f64,
    /// Standard deviation bound of stochastic y-gradients (0 when exact).
    #[serde(default)]
    pub nu_y: f64,
}

impl ProblemConstants {
    pub fn new(l_xx: f64, l_xy: f64, mu: f64) -> Result<Self> {
        let c = ProblemConstants {
            l_xx,
            l_xy,
            mu,
            nu_x: 0.0,
            nu_y: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_noise(mut self, nu_x: f64, nu_y: f64) -> Result<Self> {
        self.nu_x = nu_x;
        self.nu_y = nu_y;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.l_xx, self.l_xy, self.mu, self.nu_x, self.nu_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConstants("constants must be finite".into()));
        }
        if self.l_xx <= 0.0 {
            return Err(Error::InvalidConstants(format!(
                "l_xx must be positive (got {})",
                self.l_xx
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidConstants(format!(
                "mu must be positive (got {})",
                self.mu
            )));
        }
        if self.l_xy < 0.0 || self.nu_x < 0.0 || self.nu_y < 0.0 {
            return Err(Error::InvalidConstants(
                "l_xy, nu_x and nu_y must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// First-order oracle for the coupling function `L(x, y)`.
///
/// Finite-sum problems additionally expose per-sample gradients indexed by
/// `0..num_samples()`; the averaged per-sample gradients over the whole
/// sample set must equal the full gradient.
pub trait SaddleOracle: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64>;
    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector>;
    /// Gradient in `y`. Because `L` is affine in `y` this never depends on
    /// the value of `y`.
    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector>;

    /// Size of the sample space for stochastic oracles, if any.
    fn num_samples(&self) -> Option<usize> {
        None
    }

    fn grad_x_sample(&self, _x: &Vector, _y: &Vector, _sample: usize) -> Result<Vector> {
        Err(Error::Unsupported(
            "this problem has no per-sample gradients".into(),
        ))
    }

    fn grad_y_sample(&self, _x: &Vector, _y: &Vector, _sample: usize) -> Result<Vector> {
        Err(Error::Unsupported(
            "this problem has no per-sample gradients".into(),
        ))
    }

    /// Mini-batch x-gradient: the mean of the per-sample gradients, summed in
    /// the order given.
    fn grad_x_batch(&self, x: &Vector, y: &Vector, samples: &[usize]) -> Result<Vector> {
        batch_mean(self.dim_x(), samples, |i| self.grad_x_sample(x, y, i))
    }

    fn grad_y_batch(&self, x: &Vector, y: &Vector, samples: &[usize]) -> Result<Vector> {
        batch_mean(self.dim_y(), samples, |i| self.grad_y_sample(x, y, i))
    }
}

fn batch_mean(
    dim: usize,
    samples: &[usize],
    mut grad: impl FnMut(usize) -> Result<Vector>,
) -> Result<Vector> {
    if samples.is_empty() {
        return Err(Error::Unsupported("empty mini-batch".into()));
    }
    let mut acc = Vector::zeros(dim);
    for &i in samples {
        acc += grad(i)?;
    }
    acc /= samples.len() as f64;
    Ok(acc)
}

/// Local curvature of `L` at `(x, y)` from central differences of the
/// gradients: the spectral norms of `d grad_x / dx` and `d grad_y / dx`.
///
/// For problems without closed-form constants; the values hold near the
/// given point only, so callers usually scale them by a safety factor.
pub fn local_constants(oracle: &dyn SaddleOracle, x: &Vector, y: &Vector) -> Result<(f64, f64)> {
    let n = oracle.dim_x();
    let h = 1e-5 * (1.0 + x.amax());
    let mut hess = DMatrix::zeros(n, n);
    let mut jac = DMatrix::zeros(oracle.dim_y(), n);
    let mut e = x.clone();
    for j in 0..n {
        e[j] = x[j] + h;
        let (gx_p, gy_p) = (oracle.grad_x(&e, y)?, oracle.grad_y(&e, y)?);
        e[j] = x[j] - h;
        let (gx_m, gy_m) = (oracle.grad_x(&e, y)?, oracle.grad_y(&e, y)?);
        e[j] = x[j];
        hess.set_column(j, &((gx_p - gx_m) / (2.0 * h)));
        jac.set_column(j, &((gy_p - gy_m) / (2.0 * h)));
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let l_xx = hess.symmetric_eigenvalues().amax();
    let l_xy = jac.singular_values().amax();
    if !(l_xx.is_finite() && l_xy.is_finite()) {
        return Err(Error::InvalidConstants("non-finite local curvature".into()));
    }
    Ok((l_xx, l_xy))
}

/// One saddle-point problem: oracle for `L`, prox of `h`, and constants.
#[derive(Clone)]
pub struct ProblemInstance {
    pub oracle: Arc<dyn SaddleOracle>,
    pub prox: ProxSpec,
    pub constants: ProblemConstants,
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("dim_x", &self.dim_x())
            .field("dim_y", &self.dim_y())
            .field("prox", &self.prox)
            .field("constants", &self.constants)
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        oracle: Arc<dyn SaddleOracle>,
        prox: ProxSpec,
        constants: ProblemConstants,
    ) -> Result<Self> {
        constants.validate()?;
        if oracle.dim_x() == 0 || oracle.dim_y() == 0 {
            return Err(Error::Dimension("dim_x and dim_y must be positive".into()));
        }
        if let Some(n) = prox.required_dim() {
            if n != oracle.dim_y() {
                return Err(Error::Dimension(format!(
                    "prox acts on dimension {n} but dim_y = {}",
                    oracle.dim_y()
                )));
            }
        }
        Ok(ProblemInstance {
            oracle,
            prox,
            constants,
        })
    }

    pub fn dim_x(&self) -> usize {
        self.oracle.dim_x()
    }

    pub fn dim_y(&self) -> usize {
        self.oracle.dim_y()
    }

    /// `Phi(x, y) = L(x, y) - h(y)`.
    pub fn phi(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Ok(self.oracle.value(x, y)? - self.prox.h_value(y))
    }

    /// Checks that `grad_y(x, .)` is constant in `y` at `trials` random
    /// points. Returns the largest discrepancy seen.
    pub fn check_linear_in_y(&self, x: &Vector, trials: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let y1 = Vector::from_fn(self.dim_y(), |_, _| rng.random_range(-1.0..1.0));
            let y2 = Vector::from_fn(self.dim_y(), |_, _| rng.random_range(-1.0..1.0));
            let g1 = self.oracle.grad_y(x, &y1)?;
            let g2 = self.oracle.grad_y(x, &y2)?;
            worst = worst.max((g1 - g2).amax());
        }
        Ok(worst)
    }
}

/// Live variables of a primal-dual run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vector,
    pub x_tilde: Vector,
    /// `x_{k-1}`, used by the dual momentum term.
    pub x_prev: Vector,
    pub y: Vector,
    pub k: usize,
    /// Most recent extrapolation point `z_{k}`; equals `x` before the first step.
    pub z_last: Vector,
    // grad_y L(x_prev, .) carried over from the previous deterministic step.
    pub(crate) grad_y_prev: Option<Vector>,
}

impl IterateState {
    /// Initial state with `x_tilde = x_prev = x0`, so the first momentum
    /// term vanishes.
    pub fn new(x0: Vector, y0: Vector) -> Self {
        IterateState {
            x_tilde: x0.clone(),
            x_prev: x0.clone(),
            z_last: x0.clone(),
            x: x0,
            y: y0,
            k: 0,
            grad_y_prev: None,
        }
    }

    /// Drops the cached `grad_y L(x_prev, .)`. Call after editing `x_prev`.
    pub fn clear_cache(&mut self) {
        self.grad_y_prev = None;
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.x_tilde, &self.x_prev, &self.y, &self.z_last]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_reject_zero_lxx() {
        assert!(ProblemConstants::new(0.0, 1.0, 0.1).is_err());
        assert!(ProblemConstants::new(1.0, 1.0, 0.0).is_err());
        assert!(ProblemConstants::new(1.0, -1.0, 0.1).is_err());
        assert!(ProblemConstants::new(1.0, 0.0, 0.1).is_ok());
    }

    #[test]
    fn initial_state_has_no_displacement() {
        let s = IterateState::new(Vector::from_vec(vec![1.0, 2.0]), Vector::zeros(1));
        assert_eq!(s.x, s.x_prev);
        assert_eq!(s.x, s.x_tilde);
        assert_eq!(s.k, 0);
        assert!(s.is_finite());
    }
}
