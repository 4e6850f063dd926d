//! Proper lsc convex functions with closed-form proximal maps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{self, Point};
use crate::sets::{PrimitiveSet, SetSpec};

/// Relative tolerance for symmetry and positive-semidefiniteness checks.
const MATRIX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FunctionSpec", into = "FunctionSpec")]
pub enum SimpleFunction {
    Indicator(PrimitiveSet),
    /// `weight * |z|_1`.
    L1Norm { weight: f64, dim: usize },
    /// `1/2 (z - c)^T Q (z - c)`.
    Quadratic(QuadraticForm),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Indicator { set: SetSpec },
    L1 { weight: f64, dim: usize },
    Quadratic { q: Vec<Vec<f64>>, c: Point },
}

/// A symmetric positive-semidefinite matrix paired with a centre.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
    c: Vec<f64>,
    max_eigenvalue: f64,
}

impl QuadraticForm {
    pub fn new(rows: Vec<Vec<f64>>, c: Point) -> Result<Self> {
        let q = symmetric_matrix(&rows, c.dim())?;
        let eig = q.clone().symmetric_eigen();
        let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let min = eig.eigenvalues.min();
        if min < -MATRIX_TOL * scale {
            return Err(Error::construction(format!(
                "quadratic matrix is not positive semidefinite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self {
            max_eigenvalue: eig.eigenvalues.max().max(0.0),
            q,
            c: c.into_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn center(&self) -> &[f64] {
        &self.c
    }

    fn value(&self, z: &[f64]) -> f64 {
        let d = DVector::from_column_slice(&point::sub(z, &self.c));
        0.5 * d.dot(&(&self.q * &d))
    }
}

/// Parses a square symmetric matrix of the given order.
pub(crate) fn symmetric_matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::construction(format!("matrix must be {n}x{n}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::construction("matrix has non-finite entries"));
    }
    let q = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let scale = q.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (q[(i, j)] - q[(j, i)]).abs() > MATRIX_TOL * scale {
                return Err(Error::construction(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(q)
}

impl TryFrom<FunctionSpec> for SimpleFunction {
    type Error = Error;

    fn try_from(spec: FunctionSpec) -> Result<Self> {
        match spec {
            FunctionSpec::Indicator { set } => Ok(SimpleFunction::Indicator(set.try_into()?)),
            FunctionSpec::L1 { weight, dim } => SimpleFunction::l1(weight, dim),
            FunctionSpec::Quadratic { q, c } => {
                Ok(SimpleFunction::Quadratic(QuadraticForm::new(q, c)?))
            }
        }
    }
}

impl From<SimpleFunction> for FunctionSpec {
    fn from(f: SimpleFunction) -> Self {
        match f {
            SimpleFunction::Indicator(set) => FunctionSpec::Indicator { set: set.spec() },
            SimpleFunction::L1Norm { weight, dim } => FunctionSpec::L1 { weight, dim },
            SimpleFunction::Quadratic(form) => FunctionSpec::Quadratic {
                q: form.rows(),
                c: Point::from_vec_unchecked(form.c),
            },
        }
    }
}

impl SimpleFunction {
    pub fn l1(weight: f64, dim: usize) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::construction("l1 weight must be finite and nonnegative"));
        }
        if dim == 0 {
            return Err(Error::construction("dimension must be positive"));
        }
        Ok(SimpleFunction::L1Norm { weight, dim })
    }

    pub fn quadratic(rows: Vec<Vec<f64>>, c: Point) -> Result<Self> {
        Ok(SimpleFunction::Quadratic(QuadraticForm::new(rows, c)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            SimpleFunction::Indicator(s) => s.dim(),
            SimpleFunction::L1Norm { dim, .. } => *dim,
            SimpleFunction::Quadratic(f) => f.dim(),
        }
    }

    /// Function value; `+inf` outside the set for indicators.
    pub fn value(&self, z: &Point) -> Result<f64> {
        z.check_dim(self.dim(), "function value")?;
        Ok(match self {
            SimpleFunction::Indicator(s) => {
                if s.distance(z)? == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            SimpleFunction::L1Norm { weight, .. } => {
                weight * z.coords().iter().map(|v| v.abs()).sum::<f64>()
            }
            SimpleFunction::Quadratic(f) => f.value(z.coords()),
        })
    }

    /// `argmin_z step * f(z) + 1/2 |z - x|^2`.
    pub fn prox(&self, step: f64, x: &Point) -> Result<Point> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::usage(format!("prox step must be positive, got {step}")));
        }
        x.check_dim(self.dim(), "prox")?;
        let z = self.prox_slice(step, x.coords());
        Point::new(z)
    }

    pub(crate) fn prox_slice(&self, step: f64, x: &[f64]) -> Vec<f64> {
        match self {
            SimpleFunction::Indicator(s) => s.project_slice(x),
            SimpleFunction::L1Norm { weight, .. } => {
                let t = step * weight;
                x.iter()
                    .map(|&v| v.signum() * (v.abs() - t).max(0.0))
                    .collect()
            }
            SimpleFunction::Quadratic(f) => {
                // (I + step Q) z = x + step Q c
                let n = f.dim();
                let a = DMatrix::identity(n, n) + &f.q * step;
                let c = DVector::from_column_slice(&f.c);
                let rhs = DVector::from_column_slice(x) + (&f.q * c) * step;
                let chol = a
                    .cholesky()
                    .expect("I + step*Q is positive definite for PSD Q and step > 0");
                chol.solve(&rhs).iter().copied().collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    /// Golden-section minimisation of |z| + (z - x)^2 / 2 on a bracket.
    fn brute_force_l1_coordinate(x: f64) -> f64 {
        let f = |z: f64| z.abs() + 0.5 * (z - x) * (z - x);
        let (mut lo, mut hi) = (-10.0_f64, 10.0_f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn l1_prox_matches_brute_force() {
        let x = pt(&[3.0, -0.5, 0.0]);
        let f = SimpleFunction::l1(1.0, 3).unwrap();
        let z = f.prox(1.0, &x).unwrap();
        for i in 0..3 {
            assert!((z[i] - brute_force_l1_coordinate(x[i])).abs() < 1e-6);
        }
        assert_eq!(z, pt(&[2.0, 0.0, 0.0]));
    }

    #[test]
    fn indicator_prox_is_step_independent_projection() {
        let set = PrimitiveSet::boxed(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        let f = SimpleFunction::Indicator(set.clone());
        let x = pt(&[2.0, -1.0]);
        assert_eq!(f.prox(5.0, &x).unwrap(), pt(&[1.0, 0.0]));
        assert_eq!(f.prox(0.1, &x).unwrap(), set.project(&x).unwrap());
    }

    #[test]
    fn quadratic_prox_at_minimiser_is_fixed() {
        let f = SimpleFunction::quadratic(vec![vec![1.0, 0.0], vec![0.0, 1.0]], pt(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(f.prox(1.0, &pt(&[0.0, 0.0])).unwrap(), pt(&[0.0, 0.0]));
        // Q = I, c = 0: prox_t(x) = x / (1 + t)
        let z = f.prox(3.0, &pt(&[4.0, -8.0])).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SimpleFunction::quadratic(vec![vec![1.0, 2.0], vec![2.0, 1.0]], pt(&[0.0, 0.0]))
            .is_err());
        assert!(SimpleFunction::quadratic(vec![vec![1.0, 0.5], vec![0.0, 1.0]], pt(&[0.0, 0.0]))
            .is_err());
        let f = SimpleFunction::l1(1.0, 1).unwrap();
        assert!(matches!(f.prox(0.0, &pt(&[1.0])), Err(Error::Usage(_))));
        assert!(matches!(f.prox(-1.0, &pt(&[1.0])), Err(Error::Usage(_))));
    }
}
