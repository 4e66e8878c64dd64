//! Quadratic-bilinear test problems `L(x, y) = x^T H x / 2 + y^T A x`.
//!
//! `H` is PSD and may be singular, in which case `L(., y)` is PL with
//! constant `lambda_min^+(H)` but not strongly convex. The row space of `A`
//! lies in `range(H)`, so `min_x L(x, y)` is finite for every `y`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ProblemConstants, SaddleOracle, Vector};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;

/// Construction parameters for [`make_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticParams {
    pub dim_x: usize,
    pub dim_y: usize,
    pub mu: f64,
    #[serde(default)]
    pub rank_deficiency: usize,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default)]
    pub seed: u64,
    /// RMS of the simulated per-sample noise on `grad_x`.
    #[serde(default)]
    pub noise_x: f64,
    /// RMS of the simulated per-sample noise on `grad_y`.
    #[serde(default)]
    pub noise_y: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_coupling() -> f64 {
    1.0
}

fn default_samples() -> usize {
    64
}

impl SyntheticParams {
    pub fn new(dim_x: usize, dim_y: usize, mu: f64) -> Self {
        SyntheticParams {
            dim_x,
            dim_y,
            mu,
            rank_deficiency: 0,
            coupling: default_coupling(),
            seed: 0,
            noise_x: 0.0,
            noise_y: 0.0,
            n_samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPLProblem {
    h: DMatrix<f64>,
    a: DMatrix<f64>,
    h_pinv: DMatrix<f64>,
    mu: f64,
    l_xx: f64,
    l_xy: f64,
    nu_x: f64,
    nu_y: f64,
    // Centered per-sample gradient offsets.
    offsets_x: Vec<Vector>,
    offsets_y: Vec<Vector>,
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(m: &DMatrix<f64>, seed: u64) -> f64 {
    let n = m.nrows();
    if n == 0 || m.amax() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| 1.0 + rng.random::<f64>());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= POWER_TOL * 1e-2 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    g.qr().q()
}

fn centered_offsets(n: usize, dim: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    if rms == 0.0 {
        return vec![Vector::zeros(dim); n];
    }
    let mut offs: Vec<Vector> = (0..n)
        .map(|_| Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut *rng)))
        .collect();
    let mean = offs.iter().fold(Vector::zeros(dim), |acc, o| acc + o) / n as f64;
    for o in &mut offs {
        *o -= &mean;
    }
    let ms = offs.iter().map(|o| o.norm_squared()).sum::<f64>() / n as f64;
    if ms > 0.0 {
        let scale = rms / ms.sqrt();
        for o in &mut offs {
            *o *= scale;
        }
    }
    offs
}

/// Random instance with `rank_deficiency` zero eigenvalues in `H`, the
/// others in `[mu, 10 mu]` (smallest exactly `mu`, largest exactly `10 mu`
/// when there are at least two), and `||A||_2 = coupling`.
pub fn make_synthetic(params: &SyntheticParams) -> Result<SyntheticPLProblem> {
    let SyntheticParams {
        dim_x,
        dim_y,
        mu,
        rank_deficiency,
        coupling,
        seed,
        noise_x,
        noise_y,
        n_samples,
    } = *params;
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidConstants(format!("mu must be positive, got {mu}")));
    }
    if dim_x == 0 || dim_y == 0 {
        return Err(Error::Dimension("dim_x and dim_y must be positive".into()));
    }
    if rank_deficiency >= dim_x {
        return Err(Error::Dimension(format!(
            "rank_deficiency {rank_deficiency} leaves no curvature in dim_x = {dim_x}"
        )));
    }
    if !(coupling >= 0.0) || !coupling.is_finite() {
        return Err(Error::InvalidConstants("coupling must be finite and >= 0".into()));
    }
    if !(noise_x >= 0.0 && noise_y >= 0.0) || n_samples == 0 {
        return Err(Error::InvalidConstants(
            "noise levels must be >= 0 and n_samples >= 1".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rank = dim_x - rank_deficiency;
    let mut eig = vec![0.0; dim_x];
    eig[0] = mu;
    if rank >= 2 {
        eig[rank - 1] = 10.0 * mu;
    }
    for e in eig.iter_mut().take(rank.saturating_sub(1)).skip(1) {
        *e = mu * rng.random_range(1.0..9.0);
    }
    let v = random_orthogonal(dim_x, &mut rng);
    let h = &v * DMatrix::from_diagonal(&DVector::from_vec(eig.clone())) * v.transpose();
    let h = (&h + h.transpose()) * 0.5;
    let inv: Vec<f64> = eig.iter().map(|&e| if e > 0.0 { 1.0 / e } else { 0.0 }).collect();
    let h_pinv = &v * DMatrix::from_diagonal(&DVector::from_vec(inv)) * v.transpose();

    // A = U S W^T with W an orthonormal basis of an r-dimensional subspace
    // of range(H) = span of the first `rank` columns of V.
    let r = dim_y.min(rank);
    let u = random_orthogonal(dim_y, &mut rng).columns(0, r).into_owned();
    let mix = random_orthogonal(rank, &mut rng).columns(0, r).into_owned();
    let w = v.columns(0, rank) * mix;
    let mut s = vec![0.0; r];
    if coupling > 0.0 {
        s[0] = coupling;
        for sv in s.iter_mut().skip(1) {
            *sv = coupling * rng.random_range(0.1..0.9);
        }
    }
    let a = u * DMatrix::from_diagonal(&DVector::from_vec(s)) * w.transpose();

    let offsets_x = centered_offsets(n_samples, dim_x, noise_x, &mut rng);
    let offsets_y = centered_offsets(n_samples, dim_y, noise_y, &mut rng);
    let l_xx = power_iteration(&h, seed ^ 1);
    let l_xy = power_iteration(&(a.transpose() * &a), seed ^ 2).max(0.0).sqrt();
    Ok(SyntheticPLProblem {
        h,
        a,
        h_pinv,
        mu,
        l_xx,
        l_xy,
        nu_x: noise_x,
        nu_y: noise_y,
        offsets_x,
        offsets_y,
    })
}

impl SyntheticPLProblem {
    /// Builds from explicit matrices. `mu` is taken as declared; callers are
    /// responsible for it being the smallest positive eigenvalue of `h`.
    pub fn from_matrices(h: DMatrix<f64>, a: DMatrix<f64>, mu: f64) -> Result<Self> {
        if !h.is_square() || a.ncols() != h.nrows() || a.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "H {:?} and A {:?} are incompatible",
                h.shape(),
                a.shape()
            )));
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::LinearAlgebra("eigendecomposition of H failed".into()))?;
        let cutoff = 1e-12 * eig.eigenvalues.amax().max(1.0);
        let inv = eig
            .eigenvalues
            .map(|e| if e > cutoff { 1.0 / e } else { 0.0 });
        let h_pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        let l_xx = power_iteration(&h, 1);
        let l_xy = power_iteration(&(a.transpose() * &a), 2).max(0.0).sqrt();
        let (dx, dy) = (h.nrows(), a.nrows());
        Ok(SyntheticPLProblem {
            h,
            a,
            h_pinv,
            mu,
            l_xx,
            l_xy,
            nu_x: 0.0,
            nu_y: 0.0,
            offsets_x: vec![Vector::zeros(dx)],
            offsets_y: vec![Vector::zeros(dy)],
        })
    }

    /// `L(x, y) = mu x^2 / 2 + x y`.
    pub fn toy(mu: f64) -> Result<Self> {
        SyntheticPLProblem::from_matrices(
            DMatrix::from_element(1, 1, mu),
            DMatrix::from_element(1, 1, 1.0),
            mu,
        )
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn l_xx(&self) -> f64 {
        self.l_xx
    }

    pub fn l_xy(&self) -> f64 {
        self.l_xy
    }

    pub fn constants(&self) -> Result<ProblemConstants> {
        ProblemConstants::new(self.l_xx, self.l_xy, self.mu)?.with_noise(self.nu_x, self.nu_y)
    }

    /// `argmin_x L(x, y) = -H^+ A^T y` (minimum-norm minimizer).
    pub fn inner_argmin(&self, y: &Vector) -> Vector {
        -(&self.h_pinv * self.a.tr_mul(y))
    }

    /// `min_x L(x, y) = -(A^T y)^T H^+ (A^T y) / 2`.
    pub fn inner_min(&self, y: &Vector) -> f64 {
        let c = self.a.tr_mul(y);
        -0.5 * c.dot(&(&self.h_pinv * &c))
    }

    fn check(&self, x: &Vector, y: &Vector) -> Result<()> {
        if x.len() != self.h.nrows() || y.len() != self.a.nrows() {
            return Err(Error::Dimension(format!(
                "expected x of length {} and y of length {}, got {} and {}",
                self.h.nrows(),
                self.a.nrows(),
                x.len(),
                y.len()
            )));
        }
        Ok(())
    }
}

impl SaddleOracle for SyntheticPLProblem {
    fn dim_x(&self) -> usize {
        self.h.nrows()
    }

    fn dim_y(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check(x, y)?;
        Ok(0.5 * x.dot(&(&self.h * x)) + y.dot(&(&self.a * x)))
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check(x, y)?;
        Ok(&self.h * x + self.a.tr_mul(y))
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        self.check(x, y)?;
        Ok(&self.a * x)
    }

    fn num_samples(&self) -> Option<usize> {
        Some(self.offsets_x.len())
    }

    fn grad_x_sample(&self, x: &Vector, y: &Vector, i: usize) -> Result<Vector> {
        let offset = self.offsets_x.get(i).ok_or_else(|| sample_out_of_range(i, self.offsets_x.len()))?;
        Ok(self.grad_x(x, y)? + offset)
    }

    fn grad_y_sample(&self, x: &Vector, y: &Vector, i: usize) -> Result<Vector> {
        let offset = self.offsets_y.get(i).ok_or_else(|| sample_out_of_range(i, self.offsets_y.len()))?;
        Ok(self.grad_y(x, y)? + offset)
    }
}

fn sample_out_of_range(i: usize, n: usize) -> Error {
    Error::Dimension(format!("sample index {i} out of range for {n} samples"))
}
