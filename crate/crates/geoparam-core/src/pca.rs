//! Truncated principal-component parametrization of realization datasets.
//!
//! Fitting eigendecomposes the sample covariance `C = Y Y^T / N` of the
//! centered data. When fewer samples than grid cells are available the
//! N x N Gram matrix `Y^T Y / N` is decomposed instead — its nonzero
//! eigenvalues equal C's and its eigenvectors map onto C's via `u = Y v /
//! ||Y v||` — so the M x M covariance is never materialized in that regime.
//! Sampling evaluates `y = mean + sum_i xi_i sqrt(lambda_i) u_i` with
//! standard-normal coefficients; outputs are continuous and deliberately
//! unclamped.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Dataset, ValueRange};
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::gemm;
use crate::math;
use crate::rng::SeedRng;

/// Eigenvalues this far (relatively) below the leading one carry no usable
/// direction; their eigenvectors are dropped while the values still count
/// toward the total variance.
const EIGVEC_KEEP_REL: f64 = 1e-12;

/// A fitted, truncatable PCA model of `nx x ny` fields.
#[derive(Clone, Debug)]
pub struct PcaModel {
    nx: usize,
    ny: usize,
    mean: Vec<f64>,
    /// Full spectrum (length min(M, N)), nonincreasing, clamped to >= 0.
    eigvals: Vec<f64>,
    /// Row `i` is the unit eigenvector of eigenvalue `i`; only the leading
    /// `kept` directions are stored.
    eigvecs: Vec<f64>,
    kept: usize,
    /// Number of retained components used by `sample`.
    pub m: usize,
    /// Variance fraction the current `m` was chosen for.
    pub variance_fraction: f64,
}

impl PcaModel {
    /// Fit on a binary-range dataset.
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("pca training dataset"));
        }
        if dataset.range() != ValueRange::Binary {
            return Err(Error::Contract(
                "pca fits on binary-range datasets".into(),
            ));
        }
        let m_dim = dataset.patch_len();
        let n = dataset.len();

        let mut mean = vec![0.0; m_dim];
        for patch in dataset.iter_patches() {
            for (acc, &v) in mean.iter_mut().zip(patch) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= n as f64;
        }

        // Centered data, one sample per row.
        let mut centered = Vec::with_capacity(n * m_dim);
        for patch in dataset.iter_patches() {
            centered.extend(patch.iter().zip(&mean).map(|(&v, &mu)| v - mu));
        }

        let (eigvals, eigvecs, kept) = if n < m_dim {
            Self::fit_gram(&centered, n, m_dim)?
        } else {
            Self::fit_direct(&centered, n, m_dim)?
        };

        Ok(PcaModel {
            nx: dataset.nx(),
            ny: dataset.ny(),
            mean,
            eigvals,
            eigvecs,
            kept,
            m: kept,
            variance_fraction: 1.0,
        })
    }

    /// Gram route (N < M): eigen of `Y^T Y / N`, then map vectors up.
    fn fit_gram(centered: &[f64], n: usize, m_dim: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mut gram = vec![0.0; n * n];
        gemm::dgemm_a_bt_acc(n, m_dim, n, centered, centered, &mut gram);
        for v in gram.iter_mut() {
            *v /= n as f64;
        }
        let (raw_vals, vecs) = symmetric_eigen(&gram, n)?;
        let eigvals: Vec<f64> = raw_vals.iter().map(|&v| v.max(0.0)).collect();
        let cutoff = eigvals.first().copied().unwrap_or(0.0) * EIGVEC_KEEP_REL;
        let kept = eigvals.iter().take_while(|&&v| v > cutoff && v > 0.0).count();

        let mut up = vec![0.0; kept * m_dim];
        for r in 0..kept {
            let v = &vecs[r * n..(r + 1) * n];
            let u = &mut up[r * m_dim..(r + 1) * m_dim];
            for (i, &vi) in v.iter().enumerate() {
                let sample = &centered[i * m_dim..(i + 1) * m_dim];
                for (uj, &sj) in u.iter_mut().zip(sample) {
                    *uj += vi * sj;
                }
            }
            let norm = math::norm2(u);
            for uj in u.iter_mut() {
                *uj /= norm;
            }
        }
        Ok((eigvals, up, kept))
    }

    /// Direct route (N >= M): eigen of the M x M covariance itself.
    fn fit_direct(centered: &[f64], n: usize, m_dim: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mut cov = vec![0.0; m_dim * m_dim];
        gemm::dgemm_at_b(m_dim, n, m_dim, centered, centered, &mut cov);
        for v in cov.iter_mut() {
            *v /= n as f64;
        }
        let (raw_vals, vecs) = symmetric_eigen(&cov, m_dim)?;
        let eigvals: Vec<f64> = raw_vals.iter().map(|&v| v.max(0.0)).collect();
        let cutoff = eigvals.first().copied().unwrap_or(0.0) * EIGVEC_KEEP_REL;
        let kept = eigvals.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
        let eigvecs = vecs[..kept * m_dim].to_vec();
        Ok((eigvals, eigvecs, kept))
    }

    /// Smallest component count whose cumulative variance reaches
    /// `fraction` of the total. A zero spectrum yields `m = 0` (the caller
    /// should warn). Monotone in `fraction`.
    pub fn truncate(&self, fraction: f64) -> Result<PcaModel> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "variance fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let total: f64 = self.eigvals.iter().sum();
        let mut out = self.clone();
        out.variance_fraction = fraction;
        if total <= 0.0 {
            out.m = 0;
            return Ok(out);
        }
        let target = fraction * total;
        let mut cum = 0.0;
        let mut m = self.eigvals.len();
        for (i, &v) in self.eigvals.iter().enumerate() {
            cum += v;
            if cum >= target {
                m = i + 1;
                break;
            }
        }
        out.m = m.min(self.kept);
        Ok(out)
    }

    /// Evaluate the parametrization at coefficients `xi` (length `m`):
    /// `y = mean + sum_i xi_i sqrt(lambda_i) u_i`, continuous-valued on the
    /// binary scale, no thresholding.
    pub fn sample(&self, xi: &[f64]) -> Result<Field> {
        if xi.len() != self.m {
            return Err(Error::ShapeMismatch {
                op: "pca sample",
                lhs: vec![xi.len()],
                rhs: vec![self.m],
            });
        }
        let m_dim = self.mean.len();
        let mut out = self.mean.clone();
        for (i, &c) in xi.iter().enumerate() {
            let w = c * math::sqrt(self.eigvals[i]);
            let u = &self.eigvecs[i * m_dim..(i + 1) * m_dim];
            for (o, &uj) in out.iter_mut().zip(u) {
                *o += w * uj;
            }
        }
        Field::new(self.nx, self.ny, out)
    }

    /// Draw one realization with `xi ~ N(0, I_m)`.
    pub fn sample_random(&self, rng: &mut SeedRng) -> Field {
        let xi = rng.normal_vec(self.m);
        self.sample(&xi).expect("xi length matches m by construction")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn mean_field(&self) -> Field {
        Field::new(self.nx, self.ny, self.mean.clone()).expect("stored mean is well-formed")
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    /// Number of eigenvectors actually stored.
    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        let m_dim = self.mean.len();
        &self.eigvecs[i * m_dim..(i + 1) * m_dim]
    }

    /// Rebuild a model from checkpointed parts (used by the IO layer).
    pub fn from_parts(
        nx: usize,
        ny: usize,
        mean: Vec<f64>,
        eigvals: Vec<f64>,
        eigvecs: Vec<f64>,
        m: usize,
        variance_fraction: f64,
    ) -> Result<Self> {
        let m_dim = nx * ny;
        if mean.len() != m_dim || !eigvecs.len().is_multiple_of(m_dim) {
            return Err(Error::ShapeMismatch {
                op: "PcaModel::from_parts",
                lhs: vec![nx, ny],
                rhs: vec![mean.len(), eigvecs.len()],
            });
        }
        let kept = eigvecs.len() / m_dim;
        if m > kept || kept > eigvals.len() {
            return Err(Error::Contract(alloc::format!(
                "retained count m={m} exceeds stored eigenpairs {kept}"
            )));
        }
        Ok(PcaModel {
            nx,
            ny,
            mean,
            eigvals,
            eigvecs,
            kept,
            m,
            variance_fraction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(patches: &[&[f64]], nx: usize, ny: usize) -> Dataset {
        let values: Vec<f64> = patches.iter().flat_map(|p| p.iter().copied()).collect();
        Dataset::new(nx, ny, patches.len(), values, ValueRange::Binary).unwrap()
    }

    #[test]
    fn identical_patches_give_zero_spectrum_and_mean() {
        let p = [0.0, 1.0, 1.0, 0.0];
        let ds = toy_dataset(&[&p, &p, &p], 2, 2);
        let model = PcaModel::fit(&ds).unwrap();
        assert!(model.eigenvalues().iter().all(|&v| v == 0.0));
        assert_eq!(model.mean_field().values(), &p);
        let t = model.truncate(0.75).unwrap();
        assert_eq!(t.m, 0);
        // sampling with no components returns the mean
        assert_eq!(t.sample(&[]).unwrap().values(), &p);
    }

    #[test]
    fn two_point_toy_matches_hand_eigendecomposition() {
        // The centered pair +-(0.5, 0) has C=[[0.25,0],[0,0]], so the
        // spectrum is (0.25, 0) with u1 = +-e_x; built from the binary-range
        // samples y1=(1,0.5), y2=(0,0.5).
        let ds = toy_dataset(&[&[1.0, 0.5], &[0.0, 0.5]], 2, 1);
        let model = PcaModel::fit(&ds).unwrap();
        assert!((model.eigenvalues()[0] - 0.25).abs() < 1e-12);
        assert!(model.eigenvalues()[1].abs() < 1e-12);
        let u = model.eigenvector(0);
        assert!((u[0].abs() - 1.0).abs() < 1e-10);
        assert!(u[1].abs() < 1e-10);
    }

    #[test]
    fn sample_is_mean_plus_scaled_eigvec() {
        // toy: mean 0.5 per cell, u1=(1,0)/|..|, lambda known; xi=(1) moves
        // along u1 by sqrt(lambda).
        let ds = toy_dataset(&[&[1.0, 0.5], &[0.0, 0.5]], 2, 1);
        let model = PcaModel::fit(&ds).unwrap().truncate(1.0).unwrap();
        assert_eq!(model.m, 1);
        let y = model.sample(&[1.0]).unwrap();
        let lam = model.eigenvalues()[0];
        let u0 = model.eigenvector(0)[0];
        assert!((y.values()[0] - (0.5 + lam.sqrt() * u0)).abs() < 1e-12);
        assert!((y.values()[1] - 0.5).abs() < 1e-12);
        assert!(model.sample(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn truncate_threshold_examples() {
        // lambda = (4,3,2,1): cumulative fractions 0.4, 0.7, 0.9, 1.0.
        let model = PcaModel {
            nx: 2,
            ny: 2,
            mean: vec![0.0; 4],
            eigvals: vec![4.0, 3.0, 2.0, 1.0],
            eigvecs: vec![0.0; 16],
            kept: 4,
            m: 4,
            variance_fraction: 1.0,
        };
        assert_eq!(model.truncate(0.75).unwrap().m, 3);
        assert_eq!(model.truncate(0.4).unwrap().m, 1);
        assert_eq!(model.truncate(1.0).unwrap().m, 4);
        assert!(model.truncate(0.0).is_err());
        assert!(model.truncate(1.5).is_err());

        let single = PcaModel {
            eigvals: vec![1.0, 0.0, 0.0],
            kept: 1,
            m: 1,
            eigvecs: vec![0.0; 4],
            ..model
        };
        assert_eq!(single.truncate(0.75).unwrap().m, 1);
    }

    #[test]
    fn truncate_is_monotone_in_fraction() {
        let ds_img = crate::dataset::generate_conceptual(crate::dataset::Pattern::SemiStraight, 4);
        let ds = crate::dataset::crop_patches(&ds_img, 20, 60, 5).unwrap();
        let model = PcaModel::fit(&ds).unwrap();
        let mut last = 0;
        for f in [0.1, 0.3, 0.5, 0.75, 0.9, 1.0] {
            let m = model.truncate(f).unwrap().m;
            assert!(m >= last, "fraction {f}: m {m} < {last}");
            last = m;
        }
    }

    #[test]
    fn fit_requires_binary_nonempty() {
        let ds = toy_dataset(&[&[1.0, 0.0]], 2, 1);
        let tanh = crate::dataset::to_tanh_range(&ds).unwrap();
        assert!(PcaModel::fit(&tanh).is_err());
    }
}
