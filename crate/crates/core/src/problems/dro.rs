//! Distributionally robust logistic regression: worst-case weighted
//! logistic loss `sum_i y_i log(1 + exp(-b_i a_i^T x))` over a set of
//! sample weights `y`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::libsvm::LibsvmData;
use crate::error::{Error, Result};
use crate::problem::{ProblemConstants, SaddleOracle, Vector};

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-t))` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct DroLogisticProblem {
    data: DMatrix<f64>,
    labels: Vector,
}

impl DroLogisticProblem {
    pub fn new(data: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Dimension("empty data matrix".into()));
        }
        if labels.len() != data.nrows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                data.nrows()
            )));
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::Config("labels must be -1 or +1".into()));
        }
        Ok(DroLogisticProblem {
            data,
            labels: Vector::from_vec(labels),
        })
    }

    pub fn from_libsvm(data: LibsvmData) -> Result<Self> {
        DroLogisticProblem::new(data.features, data.labels)
    }

    pub fn num_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &Vector {
        &self.labels
    }

    fn margins(&self, x: &Vector) -> Vector {
        (&self.data * x).component_mul(&self.labels)
    }

    /// Per-sample losses `l_i(x)`.
    pub fn losses(&self, x: &Vector) -> Vector {
        self.margins(x).map(|m| softplus(-m))
    }

    // d l_i / d (a_i^T x) = -b_i sigmoid(-b_i a_i^T x)
    fn loss_slopes(&self, x: &Vector) -> Vector {
        self.margins(x)
            .zip_map(&self.labels, |m, b| -b * sigmoid(-m))
    }

    /// Conservative constants for the weight set
    /// `{y >= delta/n, ||n y - 1|| <= radius}`: the Hessian in `x` is at most
    /// `max_i y_i / 4 * ||A||^2` and `||A||` bounds the coupling.
    pub fn estimated_constants(&self, radius: f64, mu: f64) -> Result<ProblemConstants> {
        let n = self.num_rows() as f64;
        let spectral = self
            .data
            .singular_values()
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let y_max = (1.0 + radius) / n;
        ProblemConstants::new(0.25 * y_max * spectral * spectral, spectral, mu)
    }
}

/// `(value, grad_x, grad_y)` of the weighted logistic loss.
pub fn dro_value_and_grads(
    problem: &DroLogisticProblem,
    x: &Vector,
    y: &Vector,
) -> Result<(f64, Vector, Vector)> {
    check_dims(problem, x, y)?;
    let losses = problem.losses(x);
    let value = losses.dot(y);
    let weights = problem.loss_slopes(x).component_mul(y);
    let grad_x = problem.data.tr_mul(&weights);
    Ok((value, grad_x, losses))
}

fn check_dims(problem: &DroLogisticProblem, x: &Vector, y: &Vector) -> Result<()> {
    if x.len() != problem.num_features() || y.len() != problem.num_rows() {
        return Err(Error::Dimension(format!(
            "expected x of length {} and y of length {}, got {} and {}",
            problem.num_features(),
            problem.num_rows(),
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn check_index(problem: &DroLogisticProblem, i: usize) -> Result<()> {
    if i >= problem.num_rows() {
        return Err(Error::Dimension(format!(
            "sample index {i} out of range for {} samples",
            problem.num_rows()
        )));
    }
    Ok(())
}

impl SaddleOracle for DroLogisticProblem {
    fn dim_x(&self) -> usize {
        self.num_features()
    }

    fn dim_y(&self) -> usize {
        self.num_rows()
    }

    fn value(&self, x: &Vector, y: &Vector) -> Result<f64> {
        check_dims(self, x, y)?;
        Ok(self.losses(x).dot(y))
    }

    fn grad_x(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        check_dims(self, x, y)?;
        let weights = self.loss_slopes(x).component_mul(y);
        Ok(self.data.tr_mul(&weights))
    }

    fn grad_y(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        check_dims(self, x, y)?;
        Ok(self.losses(x))
    }

    fn num_samples(&self) -> Option<usize> {
        Some(self.num_rows())
    }

    /// `n y_i grad l_i(x)`: unbiased for the full gradient under uniform `i`.
    fn grad_x_sample(&self, x: &Vector, y: &Vector, i: usize) -> Result<Vector> {
        check_dims(self, x, y)?;
        check_index(self, i)?;
        let row = self.data.row(i);
        let b = self.labels[i];
        let m = b * row.dot(&x.transpose());
        let scale = self.num_rows() as f64 * y[i] * (-b * sigmoid(-m));
        Ok(row.transpose() * scale)
    }

    /// `n l_i(x) e_i`.
    fn grad_y_sample(&self, x: &Vector, y: &Vector, i: usize) -> Result<Vector> {
        check_dims(self, x, y)?;
        check_index(self, i)?;
        let row = self.data.row(i);
        let m = self.labels[i] * row.dot(&x.transpose());
        let mut g = Vector::zeros(self.num_rows());
        g[i] = self.num_rows() as f64 * softplus(-m);
        Ok(g)
    }
}

/// Linearly separable data with label noise: rows `a_i ~ N(0, I/d)`,
/// labels `sign(a_i^T w)` for a random `w`, each flipped with probability
/// `flip`.
pub fn synthetic_dataset(n: usize, d: usize, flip: f64, seed: u64) -> Result<LibsvmData> {
    if n == 0 || d == 0 {
        return Err(Error::Dimension("dataset needs n, d > 0".into()));
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(Error::Config("flip probability must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let scale = 1.0 / (d as f64).sqrt();
    let features = DMatrix::from_fn(n, d, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g * scale
    });
    let labels = (0..n)
        .map(|i| {
            let clean = if features.row(i).dot(&w.transpose()) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            if rng.random::<f64>() < flip {
                -clean
            } else {
                clean
            }
        })
        .collect();
    Ok(LibsvmData { features, labels })
}
