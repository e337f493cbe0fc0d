//! Dense symmetric eigendecomposition: Householder tridiagonalization
//! followed by the implicit-shift QL iteration, both accumulating the
//! orthogonal transform. Deterministic, O(n^3), f64.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// sqrt(a^2 + b^2) without destructive overflow.
fn pythag(a: f64, b: f64) -> f64 {
    let (aa, ab) = (math::abs(a), math::abs(b));
    if aa > ab {
        let r = ab / aa;
        aa * math::sqrt(1.0 + r * r)
    } else if ab > 0.0 {
        let r = aa / ab;
        ab * math::sqrt(1.0 + r * r)
    } else {
        0.0
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        math::abs(a)
    } else {
        -math::abs(a)
    }
}

/// Reduce the symmetric matrix in `z` (row-major n x n) to tridiagonal form,
/// accumulating the transform into `z`. Returns (diagonal, subdiagonal).
fn tridiagonalize(z: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| math::abs(z[i * n + k])).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let mut f = z[i * n + l];
                let g = if f >= 0.0 { -math::sqrt(h) } else { math::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                f = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in j + 1..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * z[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }
    (d, e)
}

/// Implicit-shift QL on the tridiagonal (d, e), rotating the columns of `z`
/// along. On return `d` holds eigenvalues and column j of `z` the matching
/// eigenvector.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = math::abs(d[m]) + math::abs(d[m + 1]);
                if math::abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 64 {
                return Err(Error::Numerical(alloc::format!(
                    "QL iteration failed to converge at index {l} (residual {})",
                    e[l]
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = pythag(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + sign(r, g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = pythag(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigendecomposition of a dense symmetric matrix (row-major `n x n`).
///
/// Returns eigenvalues in nonincreasing order and the matching eigenvectors
/// as rows of an `n x n` row-major matrix (row `i` pairs with value `i`).
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.len() != n * n {
        return Err(Error::ShapeMismatch {
            op: "symmetric_eigen",
            lhs: vec![n, n],
            rhs: vec![matrix.len()],
        });
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut z = matrix.to_vec();
    let (mut d, mut e) = tridiagonalize(&mut z, n);
    ql_implicit(&mut d, &mut e, &mut z, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("NaN eigenvalue"));
    let values: Vec<f64> = order.iter().map(|&j| d[j]).collect();
    let mut vectors = vec![0.0; n * n];
    for (row, &j) in order.iter().enumerate() {
        for k in 0..n {
            vectors[row * n + k] = z[k * n + j];
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    fn reconstruct(vals: &[f64], vecs: &[f64], n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for r in 0..n {
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] += vals[r] * vecs[r * n + i] * vecs[r * n + j];
                }
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix_recovers_entries() {
        let a = vec![3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 7.0];
        let (vals, vecs) = symmetric_eigen(&a, 3).unwrap();
        assert!((vals[0] - 7.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        assert!((vals[2] + 1.0).abs() < 1e-12);
        // top eigenvector must be +-e_z
        assert!((vecs[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_matrices_reconstruct() {
        let mut rng = SeedRng::new(21);
        for n in [2usize, 5, 9, 16] {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.normal();
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
            let (vals, vecs) = symmetric_eigen(&a, n).unwrap();
            for w in vals.windows(2) {
                assert!(w[0] >= w[1]);
            }
            // orthonormal rows
            for i in 0..n {
                for j in 0..n {
                    let dot =
                        crate::math::dot(&vecs[i * n..(i + 1) * n], &vecs[j * n..(j + 1) * n]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "n={n} <v{i},v{j}>={dot}");
                }
            }
            let rec = reconstruct(&vals, &vecs, n);
            for (x, y) in rec.iter().zip(&a) {
                assert!((x - y).abs() < 1e-9, "n={n}: {x} vs {y}");
            }
        }
    }
}
