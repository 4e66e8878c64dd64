use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Closed-loop matrices must have spectral radius below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Largest dimension solved through the Kronecker linearization.
pub const KRONECKER_MAX_DIM: usize = 40;

pub fn spectral_radius(f: &DMatrix<f64>) -> f64 {
    f.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Solves `P = W + F^T P F` for a Schur-stable `F`.
///
/// Uses the linear system `(I - F^T ⊗ F^T) vec(P) = vec(W)` up to
/// dimension 40 and the doubling iteration beyond that.
pub fn solve_discrete_lyapunov(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = f.nrows();
    if !f.is_square() || w.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "Lyapunov equation needs square F and W of the same size, got {:?} and {:?}",
            f.shape(),
            w.shape()
        )));
    }
    if f.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra("non-finite Lyapunov data".into()));
    }
    let radius = spectral_radius(f);
    if !(radius < 1.0 - STABILITY_MARGIN) {
        return Err(Error::Unstable { radius });
    }
    let p = if d <= KRONECKER_MAX_DIM {
        kronecker_solve(f, w)?
    } else {
        doubling_solve(f, w)
    };
    Ok((&p + p.transpose()) * 0.5)
}

fn kronecker_solve(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = f.nrows();
    let ft = f.transpose();
    // vec(F^T P F) = (F^T ⊗ F^T) vec(P) in column-major order.
    let system = DMatrix::<f64>::identity(d * d, d * d) - ft.kronecker(&ft);
    let rhs = nalgebra::DVector::from_column_slice(w.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra("singular Lyapunov system".into()))?;
    Ok(DMatrix::from_column_slice(d, d, sol.as_slice()))
}

fn doubling_solve(f: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    // P = sum_t (F^T)^t W F^t, summed 2^j terms at a time.
    let mut p = w.clone();
    let mut a = f.clone();
    for _ in 0..64 {
        let inc = a.transpose() * &p * &a;
        p += &inc;
        a = &a * &a;
        if inc.norm() <= f64::EPSILON * p.norm() {
            break;
        }
    }
    p
}
