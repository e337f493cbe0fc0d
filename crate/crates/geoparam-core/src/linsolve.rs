//! Preconditioned conjugate gradients for symmetric positive definite
//! systems, written against a matrix-free operator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A symmetric positive (semi)definite operator `y = A x`.
#[allow(clippy::len_without_is_empty)]
pub trait LinearOp {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal of `A`, used as the Jacobi preconditioner.
    fn diagonal(&self) -> Vec<f64>;
}

/// Outcome of a converged CG solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final true-residual norm relative to `||b||`.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients.
///
/// Stops when `||b - A x|| <= tol * ||b||`; errors with the residual if
/// `max_iters` is exhausted first. A zero right-hand side returns zero.
pub fn pcg(op: &dyn LinearOp, b: &[f64], tol: f64, max_iters: usize) -> Result<CgSolution> {
    let n = op.len();
    assert_eq!(b.len(), n, "rhs length");
    let b_norm = math::norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let diag = op.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = math::dot(&r, &z);
    let mut ap = vec![0.0; n];

    for iter in 1..=max_iters {
        op.apply(&p, &mut ap);
        let pap = math::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Numerical(alloc::format!(
                "cg: operator not positive definite (p^T A p = {pap})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = math::norm2(&r) / b_norm;
        if rel <= tol {
            return Ok(CgSolution {
                x,
                iterations: iter,
                relative_residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = math::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(alloc::format!(
        "cg: residual {} above tolerance {tol} after {max_iters} iterations",
        math::norm2(&r) / b_norm
    )))
}
