//! Dense symmetric linear solves for the normal equations.
//!
//! Systems here are small (d x d with d in the tens), so a direct Cholesky
//! factorization is the default. Statistics assembled through removals can
//! lose positive definiteness at rounding level, in which case we fall back
//! to LU with partial pivoting. A short iterative-refinement loop keeps the
//! relative residual within the solver contract.

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-9;
const REFINE_STEPS: usize = 3;

enum Factor {
    /// Lower-triangular Cholesky factor, row-major.
    Cholesky(Vec<f64>),
    /// LU in-place factors plus the pivot row order.
    Lu { lu: Vec<f64>, piv: Vec<usize> },
}

impl Factor {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factor::Cholesky(l) => {
                let d = rhs.len();
                let mut y = vec![0.0; d];
                for i in 0..d {
                    let mut s = rhs[i];
                    for j in 0..i {
                        s -= l[i * d + j] * y[j];
                    }
                    y[i] = s / l[i * d + i];
                }
                let mut x = vec![0.0; d];
                for i in (0..d).rev() {
                    let mut s = y[i];
                    for j in i + 1..d {
                        s -= l[j * d + i] * x[j];
                    }
                    x[i] = s / l[i * d + i];
                }
                x
            }
            Factor::Lu { lu, piv } => {
                let d = rhs.len();
                let mut x: Vec<f64> = piv.iter().map(|&p| rhs[p]).collect();
                for i in 1..d {
                    let mut s = x[i];
                    for j in 0..i {
                        s -= lu[i * d + j] * x[j];
                    }
                    x[i] = s;
                }
                for i in (0..d).rev() {
                    let mut s = x[i];
                    for j in i + 1..d {
                        s -= lu[i * d + j] * x[j];
                    }
                    x[i] = s / lu[i * d + i];
                }
                x
            }
        }
    }
}

fn cholesky(m: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    // Pivots at rounding level of the largest diagonal entry mean the
    // matrix is numerically rank-deficient; bail out to LU.
    let tol = (0..d)
        .map(|i| m[i * d + i])
        .fold(0.0f64, f64::max)
        .max(1.0)
        * d as f64
        * f64::EPSILON;
    for i in 0..d {
        for j in 0..=i {
            let mut s = m[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= tol || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn lu(m: &[f64], d: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut lu = m.to_vec();
    let mut piv: Vec<usize> = (0..d).collect();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = scale * (d as f64) * f64::EPSILON;
    for k in 0..d {
        let mut best = k;
        for i in k + 1..d {
            if lu[i * d + k].abs() > lu[best * d + k].abs() {
                best = i;
            }
        }
        if lu[best * d + k].abs() <= tol {
            return Err(Error::SingularSystem);
        }
        if best != k {
            for j in 0..d {
                lu.swap(k * d + j, best * d + j);
            }
            piv.swap(k, best);
        }
        let pivot = lu[k * d + k];
        for i in k + 1..d {
            let f = lu[i * d + k] / pivot;
            lu[i * d + k] = f;
            for j in k + 1..d {
                lu[i * d + j] -= f * lu[k * d + j];
            }
        }
    }
    Ok((lu, piv))
}

fn mat_vec(m: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|j| m[i * d + j] * x[j]).sum())
        .collect()
}

fn residual_norm(m: &[f64], d: usize, x: &[f64], b: &[f64]) -> f64 {
    let mx = mat_vec(m, d, x);
    (0..d).map(|i| (mx[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Solves `(A + lambda I) x = b` for symmetric `a` (row-major d x d).
pub fn solve_regularized(a: &[f64], d: usize, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), d * d);
    assert_eq!(b.len(), d);
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if d == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.to_vec();
    for i in 0..d {
        m[i * d + i] += lambda;
    }
    let factor = match cholesky(&m, d) {
        Some(l) => Factor::Cholesky(l),
        None => {
            let (lu, piv) = lu(&m, d)?;
            Factor::Lu { lu, piv }
        }
    };
    let mut x = factor.solve(b);
    let b_scale = b.iter().fold(0.0f64, |acc, v| acc + v * v).sqrt().max(1.0);
    for _ in 0..REFINE_STEPS {
        if residual_norm(&m, d, &x, b) / b_scale <= RESIDUAL_TOL {
            break;
        }
        let mx = mat_vec(&m, d, &x);
        let r: Vec<f64> = (0..d).map(|i| b[i] - mx[i]).collect();
        let dx = factor.solve(&r);
        for i in 0..d {
            x[i] += dx[i];
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x)
}
