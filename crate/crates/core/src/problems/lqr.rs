//! Imitation learning of a linear-quadratic regulator as a min-max game.
//!
//! The primal variable is the policy gain `K` (`u = -K x`), the dual
//! variable is the cost pair `theta = (Q, R)`. With
//! `C(K, theta) = E[sum_t x_t^T Q x_t + u_t^T R u_t]` the coupling is
//! `m(K, theta) = C(K, theta) - C(K_E, theta)`, which is linear in `theta`.
//! All quantities are computed exactly from discrete Lyapunov equations.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::lyapunov::{solve_discrete_lyapunov, spectral_radius};
use crate::error::{Error, Result};
use crate::problem::{SaddleOracle, Vector};
use crate::prox::{QuadraticReg, SpectralBlock};

#[derive(Debug, Clone)]
pub struct LqrGailProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k_expert: DMatrix<f64>,
    sigma0: DMatrix<f64>,
    // Second moments of states and actions under the expert policy.
    expert_state_moment: DMatrix<f64>,
    expert_action_moment: DMatrix<f64>,
}

/// Value and gradients of `m` at one point.
#[derive(Debug, Clone)]
pub struct LqrEval {
    pub m: f64,
    pub grad_k: DMatrix<f64>,
    pub grad_q: DMatrix<f64>,
    pub grad_r: DMatrix<f64>,
    /// `P_K` solving `P = Q + K^T R K + (A - BK)^T P (A - BK)`.
    pub p_k: DMatrix<f64>,
    /// `Sigma_K` solving `Sigma = Sigma_0 + (A - BK) Sigma (A - BK)^T`.
    pub sigma_k: DMatrix<f64>,
}

impl LqrGailProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        k_expert: DMatrix<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        let k = b.ncols();
        if !a.is_square() || b.nrows() != d || k_expert.shape() != (k, d) || sigma0.shape() != (d, d)
        {
            return Err(Error::Dimension(format!(
                "LQR shapes: A {:?}, B {:?}, K_E {:?}, Sigma_0 {:?}",
                a.shape(),
                b.shape(),
                k_expert.shape(),
                sigma0.shape()
            )));
        }
        let f = &a - &b * &k_expert;
        let expert_state_moment = solve_discrete_lyapunov(&f.transpose(), &sigma0)?;
        let expert_action_moment = &k_expert * &expert_state_moment * k_expert.transpose();
        Ok(LqrGailProblem {
            a,
            b,
            k_expert,
            sigma0,
            expert_state_moment,
            expert_action_moment,
        })
    }

    /// Random instance: `A` scaled to spectral radius `0.8` (so `K = 0` is
    /// stabilizing), Gaussian `B`, and an expert that is LQR-optimal for a
    /// random `theta_E` with spectra in `[0.5, 5]`. `Sigma_0 = I`.
    ///
    /// Returns the problem and `theta_E` flattened.
    pub fn random(state_dim: usize, input_dim: usize, seed: u64) -> Result<(Self, Vector)> {
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::Dimension("LQR dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
        };
        let mut a: DMatrix<f64> = gauss(state_dim, state_dim);
        let radius = spectral_radius(&a);
        a *= 0.8 / radius.max(1e-12);
        let b = gauss(state_dim, input_dim) / (state_dim as f64).sqrt();
        let q_raw = gauss(state_dim, state_dim);
        let r_raw = gauss(input_dim, input_dim);

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let spread = Uniform::new(0.5, 5.0).expect("valid range");
        let mut spd = |raw: DMatrix<f64>| {
            let n = raw.nrows();
            let basis = raw.qr().q();
            let eig = DVector::from_fn(n, |_, _| spread.sample(&mut rng));
            let m = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
            (&m + m.transpose()) * 0.5
        };
        let q_e = spd(q_raw);
        let r_e = spd(r_raw);
        let k_e = optimal_gain(&a, &b, &q_e, &r_e)?;
        let problem = LqrGailProblem::new(a, b, k_e, DMatrix::identity(state_dim, state_dim))?;
        let theta_e = problem.pack_theta(&q_e, &r_e);
        Ok((problem, theta_e))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Length of the flattened gain `K`.
    pub fn dim_gain(&self) -> usize {
        self.input_dim() * self.state_dim()
    }

    /// Length of the flattened cost pair `(Q, R)`.
    pub fn dim_theta(&self) -> usize {
        self.state_dim().pow(2) + self.input_dim().pow(2)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn k_expert(&self) -> &DMatrix<f64> {
        &self.k_expert
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    /// Spectral bounds on `Q` then `R`, matching the layout of `theta`.
    pub fn theta_blocks(&self, q_bounds: (f64, f64), r_bounds: (f64, f64)) -> Vec<SpectralBlock> {
        vec![
            SpectralBlock {
                dim: self.state_dim(),
                lower: q_bounds.0,
                upper: q_bounds.1,
            },
            SpectralBlock {
                dim: self.input_dim(),
                lower: r_bounds.0,
                upper: r_bounds.1,
            },
        ]
    }

    /// Regularizer `(weight / 2) ||theta - center||^2` for the dual prox.
    pub fn theta_regularizer(&self, weight: f64, center: &Vector) -> QuadraticReg {
        QuadraticReg {
            weight,
            center: center.as_slice().to_vec(),
        }
    }

    pub fn unpack_gain(&self, x: &Vector) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.input_dim(), self.state_dim(), x.as_slice())
    }

    pub fn pack_gain(&self, k: &DMatrix<f64>) -> Vector {
        Vector::from_column_slice(k.as_slice())
    }

    pub fn unpack_theta(&self, y: &Vector) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.state_dim();
        let m = self.input_dim();
        let q = DMatrix::from_column_slice(d, d, &y.as_slice()[..d * d]);
        let r = DMatrix::from_column_slice(m, m, &y.as_slice()[d * d..d * d + m * m]);
        (q, r)
    }

    pub fn pack_theta(&self, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Vector {
        let mut v = Vec::with_capacity(q.len() + r.len());
        v.extend_from_slice(q.as_slice());
        v.extend_from_slice(r.as_slice());
        Vector::from_vec(v)
    }

    fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * k
    }

    /// `Sigma_K`, the state second moment summed over time.
    pub fn state_moment(&self, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        solve_discrete_lyapunov(&self.closed_loop(k).transpose(), &self.sigma0)
    }

    /// `P_K` for cost `(Q, R)`.
    pub fn value_matrix(
        &self,
        k: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let w = q + k.transpose() * r * k;
        solve_discrete_lyapunov(&self.closed_loop(k), &w)
    }

    /// `C(K, theta) = tr(P_K Sigma_0)`.
    pub fn cost(&self, k: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
        Ok((self.value_matrix(k, q, r)? * &self.sigma0).trace())
    }

    /// `m(K, theta)` and its gradients in `K`, `Q` and `R`.
    pub fn cost_and_grads(
        &self,
        k: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
    ) -> Result<LqrEval> {
        let p_k = self.value_matrix(k, q, r)?;
        let sigma_k = self.state_moment(k)?;
        let expert_cost = frobenius(q, &self.expert_state_moment) + frobenius(r, &self.expert_action_moment);
        let m = (&p_k * &self.sigma0).trace() - expert_cost;
        let bt_p = self.b.transpose() * &p_k;
        let grad_k = ((r + &bt_p * &self.b) * k - &bt_p * &self.a) * &sigma_k * 2.0;
        let grad_q = &sigma_k - &self.expert_state_moment;
        let grad_r = k * &sigma_k * k.transpose() - &self.expert_action_moment;
        Ok(LqrEval {
            m,
            grad_k,
            grad_q,
            grad_r,
            p_k,
            sigma_k,
        })
    }

    /// Sample average of the exact per-initial-state cost `x0^T P_K x0`
    /// over `n` draws `x0 ~ N(0, Sigma_0)`.
    pub fn sampled_cost(
        &self,
        k: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        rng: &mut impl rand::Rng,
        n: usize,
    ) -> Result<f64> {
        if n == 0 {
            return Err(Error::Config("sampled cost needs n >= 1".into()));
        }
        let p = self.value_matrix(k, q, r)?;
        let factor = psd_factor(&self.sigma0)?;
        let d = self.state_dim();
        let mut total = 0.0;
        for _ in 0..n {
            let g = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let x0 = &factor * g;
            total += x0.dot(&(&p * &x0));
        }
        Ok(total / n as f64)
    }
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

// Symmetric square root, valid for singular PSD matrices.
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::LinearAlgebra("eigendecomposition of Sigma_0 failed".into()))?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Optimal LQR gain for `(A, B, Q, R)` by Riccati value iteration.
pub fn optimal_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let bt_p = b.transpose() * &p;
        let gain = (r + &bt_p * b)
            .lu()
            .solve(&(&bt_p * a))
            .ok_or_else(|| Error::LinearAlgebra("singular Riccati step".into()))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &gain;
        let next = (&next + next.transpose()) * 0.5;
        let change = (&next - &p).amax();
        p = next;
        if change <= 1e-13 * p.amax().max(1.0) {
            let bt_p = b.transpose() * &p;
            return (r + &bt_p * b)
                .lu()
                .solve(&(&bt_p * a))
                .ok_or_else(|| Error::LinearAlgebra("singular Riccati gain".into()));
        }
    }
    Err(Error::LinearAlgebra("Riccati iteration did not converge".into()))
}

impl SaddleOracle for LqrGailProblem {
    fn dim_x(&self) -> usize {
        self.dim_gain()
    }

    fn dim_y(&self) -> usize {
        self.dim_theta()
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        let k = self.unpack_gain(x);
        let (q, r) = self.unpack_theta(y);
        let sigma_k = self.state_moment(&k)?;
        let action = &k * &sigma_k * k.transpose();
        Ok(frobenius(&q, &(sigma_k - &self.expert_state_moment))
            + frobenius(&r, &(action - &self.expert_action_moment)))
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        let k = self.unpack_gain(x);
        let (q, r) = self.unpack_theta(y);
        let p_k = self.value_matrix(&k, &q, &r)?;
        let sigma_k = self.state_moment(&k)?;
        let bt_p = self.b.transpose() * &p_k;
        let g = ((&r + &bt_p * &self.b) * &k - &bt_p * &self.a) * &sigma_k * 2.0;
        Ok(self.pack_gain(&g))
    }

    fn grad_y(&self, x: &Vector, _y: &Vector) -> Result<Vector> {
        let k = self.unpack_gain(x);
        let sigma_k = self.state_moment(&k)?;
        let action = &k * &sigma_k * k.transpose();
        Ok(self.pack_theta(
            &(sigma_k - &self.expert_state_moment),
            &(action - &self.expert_action_moment),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_problem() -> LqrGailProblem {
        LqrGailProblem::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_cost_closed_form() {
        let p = scalar_problem();
        let one = DMatrix::from_element(1, 1, 1.0);
        let k = DMatrix::from_element(1, 1, 0.25);
        let c = p.cost(&k, &one, &one).unwrap();
        assert_relative_eq!(c, 1.0625 / 0.9375, max_relative = 1e-14);
        assert_relative_eq!(c, 1.133_333_333_333_333_3, max_relative = 1e-14);
    }

    #[test]
    fn expert_policy_has_zero_game_value() {
        let (p, theta) = LqrGailProblem::random(3, 2, 11).unwrap();
        let (q, r) = p.unpack_theta(&theta);
        let eval = p.cost_and_grads(p.k_expert(), &q, &r).unwrap();
        assert!(eval.m.abs() < 1e-10 * (1.0 + eval.p_k.norm()));
        assert!(eval.grad_q.amax() < 1e-12);
        assert!(eval.grad_r.amax() < 1e-12);
        // The expert is optimal for theta_E, so grad_K vanishes too.
        assert!(eval.grad_k.amax() < 1e-8, "{}", eval.grad_k.amax());
    }

    #[test]
    fn zero_initial_covariance_gives_zero_sampled_cost() {
        let p = LqrGailProblem::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = p.sampled_cost(&one.scale(0.2), &one, &one, &mut rng, 100).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn unstable_gain_is_an_error() {
        let p = scalar_problem();
        let one = DMatrix::from_element(1, 1, 1.0);
        let k = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(p.cost(&k, &one, &one), Err(Error::Unstable { .. })));
    }
}
