//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Central differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        g[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Projection onto `{y_i >= delta/n} ∩ {||n y - 1|| <= radius}` by
/// enumerating which coordinates sit on the lower bound and solving the
/// ball-tight KKT system for the rest in closed form.
pub fn brute_box_ball(v: &[f64], delta: f64, radius: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n <= 10, "enumeration is exponential in n");
    let nf = n as f64;
    let (l, c, rho) = (delta / nf, 1.0 / nf, radius / nf);
    let feasible = |y: &[f64]| {
        y.iter().all(|&t| t >= l - 1e-12)
            && y.iter().map(|&t| (t - c) * (t - c)).sum::<f64>().sqrt() <= rho + 1e-12
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let at_bound = |i: usize| mask & (1 << i) != 0;
        let mut candidates = Vec::new();

        let inactive: Vec<f64> = (0..n).map(|i| if at_bound(i) { l } else { v[i] }).collect();
        candidates.push(inactive);

        let fixed: f64 = (0..n).filter(|&i| at_bound(i)).map(|_| (l - c) * (l - c)).sum();
        let free_dist: f64 = (0..n)
            .filter(|&i| !at_bound(i))
            .map(|i| (v[i] - c) * (v[i] - c))
            .sum::<f64>()
            .sqrt();
        let room = rho * rho - fixed;
        if room > 0.0 && free_dist > 0.0 {
            let scale = free_dist / room.sqrt();
            if scale >= 1.0 {
                let y = (0..n)
                    .map(|i| if at_bound(i) { l } else { c + (v[i] - c) / scale })
                    .collect();
                candidates.push(y);
            }
        }
        for y in candidates {
            if feasible(&y) {
                let d = sq_dist(&y, v);
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, y));
                }
            }
        }
    }
    best.expect("set is nonempty").1
}

/// `max g^T y` over the same set, by the same enumeration: on each active
/// pattern the free block either points along `g` on the sphere or sits at
/// the center when `g` vanishes there.
pub fn brute_linear_max_box_ball(g: &[f64], delta: f64, radius: f64) -> f64 {
    let n = g.len();
    let nf = n as f64;
    let (l, c, rho) = (delta / nf, 1.0 / nf, radius / nf);
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        let at_bound = |i: usize| mask & (1 << i) != 0;
        let fixed: f64 = (0..n).filter(|&i| at_bound(i)).map(|_| (l - c) * (l - c)).sum();
        let room = rho * rho - fixed;
        if room < 0.0 {
            continue;
        }
        let g_free: f64 = (0..n)
            .filter(|&i| !at_bound(i))
            .map(|i| g[i] * g[i])
            .sum::<f64>()
            .sqrt();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if at_bound(i) {
                    l
                } else if g_free > 0.0 {
                    c + g[i] / g_free * room.sqrt()
                } else {
                    c
                }
            })
            .collect();
        if y.iter().all(|&t| t >= l - 1e-12) {
            best = best.max(y.iter().zip(g).map(|(a, b)| a * b).sum());
        }
    }
    best
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix stored row
/// major. Returns `(eigenvalues, eigenvectors as columns)`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = cs * mkp - sn * mkq;
                    m[k][q] = sn * mkp + cs * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = cs * mpk - sn * mqk;
                    m[q][k] = sn * mpk + cs * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Frobenius-nearest symmetric matrix with spectrum in `[lower, upper]`:
/// Jacobi eigendecomposition of the symmetric part with clamped eigenvalues.
pub fn brute_spectral_box(m: &DMatrix<f64>, lower: f64, upper: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let sym: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (m[(i, j)] + m[(j, i)])).collect())
        .collect();
    let (eig, vecs) = jacobi_eigen(&sym);
    DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| vecs[i][k] * eig[k].clamp(lower, upper) * vecs[j][k])
            .sum()
    })
}

/// `sum_{t < terms} (F^T)^t W F^t`.
pub fn lyapunov_series(f: &DMatrix<f64>, w: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(w.nrows(), w.ncols());
    let mut term = w.clone();
    for _ in 0..terms {
        acc += &term;
        term = f.transpose() * term * f;
    }
    acc
}

/// One step of the momentum method on a scalar problem, written out from
/// the update formulas with plain floats.
#[derive(Debug, Clone, Copy)]
pub struct ScalarStep {
    pub z: f64,
    pub p: f64,
    pub q: f64,
    pub y: f64,
    pub r: f64,
    pub x: f64,
    pub x_tilde: f64,
}

/// Scalar step for `L(x, y) = mu x^2 / 2 + x y`, `h = 0`.
#[allow(clippy::too_many_arguments)]
pub fn scalar_toy_step(
    mu: f64,
    l_xx: f64,
    alpha: f64,
    lambda: f64,
    gamma: f64,
    sigma: f64,
    (x, x_tilde, x_prev, y): (f64, f64, f64, f64),
) -> ScalarStep {
    let z = (1.0 - alpha) * x_tilde + alpha * x;
    let p = z;
    let q = (x - x_prev) / (gamma * (1.0 - l_xx * gamma) * mu);
    let y_next = y + sigma * (p + q);
    let r = mu * z + y_next;
    ScalarStep {
        z,
        p,
        q,
        y: y_next,
        r,
        x: x - gamma * r,
        x_tilde: z - lambda * r,
    }
}
