//! Thin row-major wrapper over the `matrixmultiply` f64 kernel.
//!
//! This is the only place the crate touches unsafe code; the wrapper checks
//! every slice length before handing pointers to the kernel. A single gemm
//! call is deterministic for fixed operand sizes, which keeps forward and
//! backward passes bit-reproducible.

#![allow(unsafe_code)]

use alloc::vec;
use alloc::vec::Vec;

/// `c[m,n] = alpha * a[m,k] . b[k,n] + beta * c[m,n]`, all row-major.
#[allow(clippy::too_many_arguments)] // mirrors the BLAS calling convention
pub fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: out length");
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] = a[k,m]^T . b[k,n]` without materializing the transpose.
pub fn dgemm_at_b(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), k * m, "gemm_at_b: lhs length");
    assert_eq!(b.len(), k * n, "gemm_at_b: rhs length");
    assert_eq!(c.len(), m * n, "gemm_at_b: out length");
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] += a[m,k] . b[n,k]^T`.
pub fn dgemm_a_bt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), m * k, "gemm_a_bt: lhs length");
    assert_eq!(b.len(), n * k, "gemm_a_bt: rhs length");
    assert_eq!(c.len(), m * n, "gemm_a_bt: out length");
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y[m] = a[m,n] . x[n]`.
pub fn matvec(m: usize, n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(x.len(), n);
    let mut y = vec![0.0; m];
    for (row, out) in a.chunks_exact(n).zip(y.iter_mut()) {
        *out = crate::math::dot(row, x);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let mut rng = crate::rng::SeedRng::new(3);
        for &(m, k, n) in &[(1, 1, 1), (2, 3, 4), (5, 7, 2), (8, 8, 8)] {
            let a = rng.normal_vec(m * k);
            let b = rng.normal_vec(k * n);
            let mut c = vec![0.0; m * n];
            dgemm(m, k, n, 1.0, &a, &b, 0.0, &mut c);
            let want = naive(m, k, n, &a, &b);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn transpose_variants_agree_with_naive() {
        let mut rng = crate::rng::SeedRng::new(4);
        let (m, k, n) = (4, 6, 5);
        let at = rng.normal_vec(k * m);
        let b = rng.normal_vec(k * n);
        let mut c = vec![0.0; m * n];
        dgemm_at_b(m, k, n, &at, &b, &mut c);
        // a[i,p] = at[p,i]
        let a: Vec<f64> = (0..m * k).map(|i| at[(i % k) * m + i / k]).collect();
        let want = naive(m, k, n, &a, &b);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        let a2 = rng.normal_vec(m * k);
        let bt = rng.normal_vec(n * k);
        let mut c2 = vec![1.0; m * n];
        dgemm_a_bt_acc(m, k, n, &a2, &bt, &mut c2);
        let b2: Vec<f64> = (0..k * n).map(|i| bt[(i % n) * k + i / n]).collect();
        let mut want2 = naive(m, k, n, &a2, &b2);
        for w in want2.iter_mut() {
            *w += 1.0;
        }
        for (x, y) in c2.iter().zip(&want2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
