//! Proximal operators of the dual regularizer `h`.
//!
//! The shipped kinds are the zero function, the indicator of a spectral box
//! `{S : lower I <= S <= upper I}` on a stack of square matrix blocks
//! (optionally plus a quadratic), and the indicator of
//! `{y : y_i >= delta / n, ||n y - 1|| <= radius}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Vector;

/// Tolerance used when deciding whether a point lies in an indicator's set.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const DYKSTRA_MAX_SWEEPS: usize = 10_000;
const DYKSTRA_TOL: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

/// One `dim x dim` block of a flattened matrix variable, stored column-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralBlock {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

/// `(weight / 2) ||y - center||^2` added to an indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticReg {
    pub weight: f64,
    pub center: Vec<f64>,
}

pub type ProxFn = Arc<dyn Fn(&Vector, f64) -> Result<Vector> + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

/// User-supplied prox and value of `h`.
#[derive(Clone)]
pub struct CustomProx {
    pub prox: ProxFn,
    pub value: ValueFn,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProxSpec {
    /// `h = 0`.
    Zero,
    SpectralBox {
        blocks: Vec<SpectralBlock>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<QuadraticReg>,
    },
    /// Lower bound `delta / n` on each entry and `||n y - 1_n|| <= radius`.
    BoxBall {
        n: usize,
        delta: f64,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        regularizer: Option<QuadraticReg>,
    },
    #[serde(skip)]
    Custom(CustomProx),
}

impl fmt::Debug for ProxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxSpec::Zero => write!(f, "Zero"),
            ProxSpec::SpectralBox {
                blocks,
                regularizer,
            } => f
                .debug_struct("SpectralBox")
                .field("blocks", blocks)
                .field("regularizer", &regularizer.as_ref().map(|r| r.weight))
                .finish(),
            ProxSpec::BoxBall {
                n,
                delta,
                radius,
                regularizer,
            } => f
                .debug_struct("BoxBall")
                .field("n", n)
                .field("delta", delta)
                .field("radius", radius)
                .field("regularizer", &regularizer.as_ref().map(|r| r.weight))
                .finish(),
            ProxSpec::Custom(_) => write!(f, "Custom"),
        }
    }
}

// Custom operators compare by identity.
impl PartialEq for ProxSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ProxSpec::Zero, ProxSpec::Zero) => true,
            (
                ProxSpec::SpectralBox {
                    blocks: a,
                    regularizer: ra,
                },
                ProxSpec::SpectralBox {
                    blocks: b,
                    regularizer: rb,
                },
            ) => a == b && ra == rb,
            (
                ProxSpec::BoxBall {
                    n: n1,
                    delta: d1,
                    radius: r1,
                    regularizer: g1,
                },
                ProxSpec::BoxBall {
                    n: n2,
                    delta: d2,
                    radius: r2,
                    regularizer: g2,
                },
            ) => n1 == n2 && d1 == d2 && r1 == r2 && g1 == g2,
            (ProxSpec::Custom(a), ProxSpec::Custom(b)) => {
                Arc::ptr_eq(&a.prox, &b.prox) && Arc::ptr_eq(&a.value, &b.value)
            }
            _ => false,
        }
    }
}

impl ProxSpec {
    pub fn box_ball(n: usize, delta: f64, radius: f64) -> Result<Self> {
        let spec = ProxSpec::BoxBall {
            n,
            delta,
            radius,
            regularizer: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn spectral_box(blocks: Vec<SpectralBlock>) -> Result<Self> {
        let spec = ProxSpec::SpectralBox {
            blocks,
            regularizer: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProxSpec::Zero | ProxSpec::Custom(_) => Ok(()),
            ProxSpec::SpectralBox { blocks, .. } => {
                if blocks.is_empty() {
                    return Err(Error::Config("spectral box needs at least one block".into()));
                }
                for b in blocks {
                    if b.dim == 0 || !(0.0 < b.lower && b.lower < b.upper) {
                        return Err(Error::Config(format!(
                            "spectral block needs dim > 0 and 0 < lower < upper (got {b:?})"
                        )));
                    }
                }
                self.validate_regularizer()
            }
            ProxSpec::BoxBall {
                n, delta, radius, ..
            } => {
                if *n == 0 || !(*radius >= 0.0) || !(*delta <= 1.0) || !delta.is_finite() {
                    return Err(Error::Config(format!(
                        "box-ball set needs n > 0, delta <= 1, radius >= 0 \
                         (got n = {n}, delta = {delta}, radius = {radius})"
                    )));
                }
                self.validate_regularizer()
            }
        }
    }

    fn validate_regularizer(&self) -> Result<()> {
        if let (Some(r), Some(n)) = (self.regularizer(), self.required_dim()) {
            if !(r.weight >= 0.0 && r.weight.is_finite()) || r.center.len() != n {
                return Err(Error::Config(format!(
                    "regularizer needs finite weight >= 0 and a center of length {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn regularizer(&self) -> Option<&QuadraticReg> {
        match self {
            ProxSpec::SpectralBox { regularizer, .. } | ProxSpec::BoxBall { regularizer, .. } => {
                regularizer.as_ref()
            }
            ProxSpec::Zero | ProxSpec::Custom(_) => None,
        }
    }

    /// Adds `(weight / 2) ||y - center||^2` to a set indicator.
    pub fn with_regularizer(mut self, reg: QuadraticReg) -> Result<Self> {
        match &mut self {
            ProxSpec::SpectralBox { regularizer, .. } | ProxSpec::BoxBall { regularizer, .. } => {
                *regularizer = Some(reg)
            }
            ProxSpec::Zero | ProxSpec::Custom(_) => {
                return Err(Error::Unsupported(
                    "a regularizer needs a set-constrained prox".into(),
                ))
            }
        }
        self.validate()?;
        Ok(self)
    }

    /// Dimension the operator acts on, when fixed by the spec.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            ProxSpec::SpectralBox { blocks, .. } => Some(blocks.iter().map(|b| b.dim * b.dim).sum()),
            ProxSpec::BoxBall { n, .. } => Some(*n),
            ProxSpec::Zero | ProxSpec::Custom(_) => None,
        }
    }

    /// `prox_{sigma h}(v) = argmin_u 1/2 ||u - v||^2 + sigma h(u)`.
    pub fn prox(&self, v: &Vector, sigma: f64) -> Result<Vector> {
        if let Some(n) = self.required_dim() {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "prox expects length {n}, got {}",
                    v.len()
                )));
            }
        }
        let shifted;
        let point = match self.regularizer() {
            Some(r) if r.weight > 0.0 => {
                // Indicator plus quadratic: project the weighted average.
                let s = sigma * r.weight;
                let center = Vector::from_column_slice(&r.center);
                shifted = (v + center * s) / (1.0 + s);
                &shifted
            }
            _ => v,
        };
        match self {
            ProxSpec::Zero => Ok(prox_zero(v, sigma)),
            ProxSpec::SpectralBox { blocks, .. } => project_spectral_blocks(point, blocks),
            ProxSpec::BoxBall { delta, radius, .. } => project_box_ball(point, *delta, *radius),
            ProxSpec::Custom(c) => (c.prox)(v, sigma),
        }
    }

    /// `h(y)`: zero or the quadratic on the set, `+inf` outside it.
    pub fn h_value(&self, y: &Vector) -> f64 {
        match self {
            ProxSpec::Zero => 0.0,
            ProxSpec::Custom(c) => (c.value)(y),
            _ if !self.is_feasible(y, FEASIBILITY_TOL) => f64::INFINITY,
            _ => self.regularizer().map_or(0.0, |r| {
                let d = y - Vector::from_column_slice(&r.center);
                0.5 * r.weight * d.norm_squared()
            }),
        }
    }

    /// Membership in the domain of `h`, with absolute tolerance `tol`.
    pub fn is_feasible(&self, y: &Vector, tol: f64) -> bool {
        match self {
            ProxSpec::Zero => true,
            ProxSpec::Custom(c) => (c.value)(y).is_finite(),
            ProxSpec::SpectralBox { blocks, .. } => {
                if y.len() != blocks.iter().map(|b| b.dim * b.dim).sum::<usize>() {
                    return false;
                }
                let mut offset = 0;
                blocks.iter().all(|b| {
                    let m = block_matrix(y, offset, b.dim);
                    offset += b.dim * b.dim;
                    spectral_box_violation(&m, b.lower, b.upper) <= tol
                })
            }
            ProxSpec::BoxBall {
                n, delta, radius, ..
            } => {
                y.len() == *n && box_ball_violation(y, *delta, *radius) <= tol
            }
        }
    }
}

/// Prox of the zero function: the identity.
pub fn prox_zero(v: &Vector, _sigma: f64) -> Vector {
    v.clone()
}

/// Extracts a `dim x dim` column-major block starting at `offset`.
pub fn block_matrix(y: &Vector, offset: usize, dim: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(dim, dim, &y.as_slice()[offset..offset + dim * dim])
}

fn project_spectral_blocks(v: &Vector, blocks: &[SpectralBlock]) -> Result<Vector> {
    let mut out = Vector::zeros(v.len());
    let mut offset = 0;
    for b in blocks {
        let m = block_matrix(v, offset, b.dim);
        let p = project_spectral_box(&m, b.lower, b.upper)?;
        out.as_mut_slice()[offset..offset + b.dim * b.dim].copy_from_slice(p.as_slice());
        offset += b.dim * b.dim;
    }
    Ok(out)
}

/// Frobenius projection of `m` onto `{S symmetric : lower I <= S <= upper I}`.
pub fn project_spectral_box(m: &DMatrix<f64>, lower: f64, upper: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "spectral projection needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !(lower < upper) {
        return Err(Error::Config(format!(
            "spectral bounds need lower < upper (got {lower}, {upper})"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra(
            "non-finite entry in spectral projection input".into(),
        ));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::LinearAlgebra("symmetric eigendecomposition failed".into()))?;
    let clamped = eig.eigenvalues.map(|l| l.clamp(lower, upper));
    let v = &eig.eigenvectors;
    let p = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    Ok((&p + p.transpose()) * 0.5)
}

/// Largest amount by which `m` fails to be a symmetric matrix with spectrum
/// in `[lower, upper]`.
pub fn spectral_box_violation(m: &DMatrix<f64>, lower: f64, upper: f64) -> f64 {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let asym = (m - m.transpose()).amax();
    let sym = (m + m.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    let below = eigs.iter().map(|&l| lower - l).fold(0.0, f64::max);
    let above = eigs.iter().map(|&l| l - upper).fold(0.0, f64::max);
    asym.max(below).max(above)
}

/// Largest constraint violation of `y` for `{y_i >= delta/n, ||n y - 1|| <= radius}`.
pub fn box_ball_violation(y: &Vector, delta: f64, radius: f64) -> f64 {
    let n = y.len() as f64;
    let lower = delta / n;
    let below = y.iter().map(|&v| lower - v).fold(0.0, f64::max);
    let ball = (y * n).add_scalar(-1.0).norm() - radius;
    below.max(ball).max(0.0)
}

fn box_ball_setup(v: &Vector, delta: f64, radius: f64) -> Result<(f64, f64, f64)> {
    let n = v.len();
    if n == 0 {
        return Err(Error::Dimension("empty vector".into()));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::LinearAlgebra("non-finite projection input".into()));
    }
    if !(delta <= 1.0 && radius >= 0.0) {
        return Err(Error::Config(format!(
            "box-ball set needs delta <= 1 and radius >= 0 (got {delta}, {radius})"
        )));
    }
    let nf = n as f64;
    Ok((delta / nf, 1.0 / nf, radius / nf))
}

/// Euclidean projection onto `{y : y_i >= delta/n} ∩ {y : ||n y - 1_n|| <= radius}`.
///
/// With `c = 1/n` and ball multiplier `nu`, the optimality conditions give
/// `y = max(delta/n, c + t (v - c))` with `t = 1/(1 + nu)`. Either `t = 1`
/// is feasible, or `||y(t) - c||` is nondecreasing in `t` and the ball is
/// tight; `t` is then found by bisection to machine precision, keeping the
/// feasible end of the bracket.
pub fn project_box_ball(v: &Vector, delta: f64, radius: f64) -> Result<Vector> {
    let (lower, center, r) = box_ball_setup(v, delta, radius)?;
    let at = |t: f64| v.map(|c| (center + t * (c - center)).max(lower));
    let dist = |y: &Vector| y.add_scalar(-center).norm();

    let boxed = at(1.0);
    if dist(&boxed) <= r {
        return Ok(boxed);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist(&at(mid)) <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo))
}

/// The same projection by Dykstra's alternating projections between the box
/// and the ball. Stops when the iterate and both correction terms move less
/// than `1e-12` (relative) in one sweep; fails after 10^4 sweeps.
pub fn project_box_ball_dykstra(v: &Vector, delta: f64, radius: f64) -> Result<Vector> {
    let (lower, center, r) = box_ball_setup(v, delta, radius)?;
    let n = v.len();
    let project_box = |u: &Vector| u.map(|c| c.max(lower));
    let project_ball = |u: &Vector| {
        let d = u.add_scalar(-center);
        let norm = d.norm();
        if norm <= r {
            u.clone()
        } else {
            (d * (r / norm)).add_scalar(center)
        }
    };

    let mut x = v.clone();
    let mut p = Vector::zeros(n);
    let mut q = Vector::zeros(n);
    let mut change = f64::INFINITY;
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let b = project_box(&(&x + &p));
        let p_next = &x + &p - &b;
        let next = project_ball(&(&b + &q));
        let q_next = &b + &q - &next;
        change = (&next - &x)
            .norm()
            .max((&p_next - &p).norm())
            .max((&q_next - &q).norm());
        x = next;
        p = p_next;
        q = q_next;
        if change <= DYKSTRA_TOL * (1.0 + x.norm()) {
            // The ball iterate can sit a rounding error below the box.
            return Ok(project_box(&x));
        }
    }
    Err(Error::ProjectionNotConverged {
        sweeps: DYKSTRA_MAX_SWEEPS,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_prox_is_identity() {
        let v = Vector::from_vec(vec![1.5, -2.0]);
        assert_eq!(prox_zero(&v, 0.3), v);
        assert_eq!(prox_zero(&Vector::zeros(3), 1.0), Vector::zeros(3));
        assert_eq!(ProxSpec::Zero.prox(&v, 10.0).unwrap(), v);
    }

    #[test]
    fn spectral_box_clamps_diagonal() {
        let m = DMatrix::from_diagonal(&Vector::from_vec(vec![0.05, 50.0]));
        let p = project_spectral_box(&m, 0.1, 100.0).unwrap();
        let expected = DMatrix::from_diagonal(&Vector::from_vec(vec![0.1, 50.0]));
        assert!((p - expected).amax() < 1e-14);
    }

    #[test]
    fn spectral_box_keeps_feasible_point_after_symmetrizing() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.3, 3.0]);
        let p = project_spectral_box(&m, 0.1, 100.0).unwrap();
        let sym = (&m + m.transpose()) * 0.5;
        assert!((p - sym).amax() < 1e-13);
    }

    #[test]
    fn spectral_box_rejects_bad_input() {
        let m = DMatrix::from_element(2, 3, 1.0);
        assert!(project_spectral_box(&m, 0.1, 1.0).is_err());
        let m = DMatrix::from_element(2, 2, f64::NAN);
        assert!(project_spectral_box(&m, 0.1, 1.0).is_err());
        let m = DMatrix::identity(2, 2);
        assert!(project_spectral_box(&m, 1.0, 0.1).is_err());
    }

    #[test]
    fn uniform_point_is_fixed_by_box_ball() {
        let n = 7;
        let v = Vector::from_element(n, 1.0 / n as f64);
        let p = project_box_ball(&v, 0.01, 100.0).unwrap();
        assert_eq!(p, v);
    }

    #[test]
    fn symmetric_exterior_point_lands_on_ball() {
        let v = Vector::from_vec(vec![2.0, 2.0]);
        let p = project_box_ball(&v, 0.0, 1.0).unwrap();
        let expected = (1.0 + 1.0 / 2f64.sqrt()) / 2.0;
        assert_relative_eq!(p[0], expected, max_relative = 1e-12);
        assert_relative_eq!(p[1], expected, max_relative = 1e-12);
        assert_relative_eq!(p[0], 0.853_553_390_593_273_7, max_relative = 1e-12);
    }

    #[test]
    fn box_ball_spec_and_h_value() {
        let spec = ProxSpec::box_ball(3, 0.03, 1.5).unwrap();
        let inside = Vector::from_element(3, 1.0 / 3.0);
        assert_eq!(spec.h_value(&inside), 0.0);
        let outside = Vector::from_vec(vec![-1.0, 0.4, 0.9]);
        assert_eq!(spec.h_value(&outside), f64::INFINITY);
        let p = spec.prox(&outside, 0.5).unwrap();
        assert!(spec.is_feasible(&p, 1e-10));
        assert!(spec.prox(&Vector::zeros(4), 0.5).is_err());
        assert!(ProxSpec::box_ball(0, 0.1, 1.0).is_err());
    }

    #[test]
    fn regularized_spectral_prox_shrinks_toward_center() {
        let center = vec![1.0, 0.0, 0.0, 1.0];
        let spec = ProxSpec::SpectralBox {
            blocks: vec![SpectralBlock {
                dim: 2,
                lower: 0.1,
                upper: 100.0,
            }],
            regularizer: Some(QuadraticReg {
                weight: 1.0,
                center: center.clone(),
            }),
        };
        spec.validate().unwrap();
        let v = Vector::from_vec(vec![3.0, 0.0, 0.0, 3.0]);
        // (3 + 1 * 1) / 2 = 2 on the diagonal, feasible.
        let p = spec.prox(&v, 1.0).unwrap();
        assert!((p - Vector::from_vec(vec![2.0, 0.0, 0.0, 2.0])).amax() < 1e-14);
        let h = spec.h_value(&Vector::from_vec(vec![2.0, 0.0, 0.0, 2.0]));
        assert_relative_eq!(h, 0.5 * 2.0);
    }

    #[test]
    fn serde_round_trip_of_spec() {
        let spec = ProxSpec::box_ball(5, 0.01, 100.0).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"kind":"box_ball","n":5,"delta":0.01,"radius":100.0}"#);
        let back: ProxSpec = serde_json::from_str(&s).unwrap();
        assert!(matches!(back, ProxSpec::BoxBall { n: 5, .. }));
        let bad = r#"{"kind":"box_ball","n":5,"delta":0.01,"radius":1.0,"extra":1}"#;
        assert!(serde_json::from_str::<ProxSpec>(bad).is_err());
    }
}
