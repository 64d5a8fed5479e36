//! Dense symmetric solves sized for tabular problems.
//!
//! Parameter dimensions here are at most a few hundred (features plus
//! one-hot width), so a textbook Cholesky factorization is both simpler and
//! faster than pulling in a LAPACK binding. The conjugate-gradient routine
//! serves the matrix-free path where the operator is only available as
//! Hessian-vector products.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:.6e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error(
        "conjugate gradient did not converge: relative residual {residual:.3e} after {iters} iterations"
    )]
    CgNonConvergence { residual: f64, iters: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Array2<f64>,
}

impl CholeskyFactor {
    /// Factor `a = L Lᵀ`. Only the lower triangle of `a` is read.
    pub fn new(a: &Array2<f64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: diag,
                    index: j,
                });
            }
            let diag = diag.sqrt();
            l[(j, j)] = diag;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / diag;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve `A x = b` via the two triangular solves.
    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>, LinalgError> {
        let n = self.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let l = &self.lower;
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= l[(i, k)] * y[k];
            }
            y[i] = v / l[(i, i)];
        }
        let mut x = Array1::<f64>::zeros(n);
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v -= l[(k, i)] * x[k];
            }
            x[i] = v / l[(i, i)];
        }
        Ok(x)
    }
}

/// Solve `A x = b` for a symmetric positive definite operator given only as
/// `v ↦ A v`, by conjugate gradient.
///
/// Converges when the residual drops below `rel_tol · ‖b‖₂`.
pub fn conjugate_gradient<F>(
    apply: F,
    b: ArrayView1<f64>,
    rel_tol: f64,
    max_iters: usize,
) -> Result<Array1<f64>, LinalgError>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(Array1::zeros(b.len()));
    }
    let mut x = Array1::<f64>::zeros(b.len());
    let mut r = b.to_owned();
    let mut p = r.clone();
    let mut rs_old = r.dot(&r);
    let mut iters = 0;
    loop {
        let resid = rs_old.sqrt() / b_norm;
        if resid <= rel_tol {
            return Ok(x);
        }
        if iters >= max_iters {
            return Err(LinalgError::CgNonConvergence {
                residual: resid,
                iters,
            });
        }
        let ap = apply(p.view());
        let p_ap = p.dot(&ap);
        if p_ap <= 0.0 || !p_ap.is_finite() {
            // Operator is not positive definite along p; CG has broken down.
            return Err(LinalgError::CgNonConvergence {
                residual: resid,
                iters,
            });
        }
        let alpha = rs_old / p_ap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_new = r.dot(&r);
        p = &r + &(&p * (rs_new / rs_old));
        rs_old = rs_new;
        iters += 1;
    }
}

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn norm1(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}
