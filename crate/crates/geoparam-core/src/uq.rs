//! Monte Carlo uncertainty propagation and ensemble statistics.
//!
//! Realizations are drawn from a [`RealizationSource`], pushed one at a
//! time through the flow simulator, and reduced on the fly: per-cell
//! streaming moment accumulators (numerically stable one-pass updates with
//! an associative merge), interpolated water-cut curve statistics, and
//! Scott's-rule histogram / kernel density estimates of the breakthrough
//! time. Only the statistics snapshot, the water-cut series and the
//! breakthrough scalar are retained per realization.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::flow::{simulate, FlowProblem, PermField, SimConfig};
use crate::math;
use crate::pca::PcaModel;
use crate::rng::SeedRng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Cells whose ensemble variance falls below this are masked out of the
/// skewness/kurtosis maps.
pub const VARIANCE_MASK_EPS: f64 = 1e-12;

/// Bandwidth fallback when the sample spread is exactly zero.
pub const DEGENERATE_BANDWIDTH: f64 = 0.01;

/// Which generator produced an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceTag {
    Data,
    Pca,
    Gan,
}

impl SourceTag {
    pub fn name(&self) -> &'static str {
        match self {
            SourceTag::Data => "data",
            SourceTag::Pca => "pca",
            SourceTag::Gan => "gan",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "data" => Ok(SourceTag::Data),
            "pca" => Ok(SourceTag::Pca),
            "gan" => Ok(SourceTag::Gan),
            other => Err(Error::Config(alloc::format!("unknown source `{other}`"))),
        }
    }
}

/// Streaming per-cell central-moment sums (unnormalized M2..M4) with an
/// associative merge, so partial accumulators can be reduced in any
/// grouping.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    cells: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(cells: usize) -> Self {
        MomentAccumulator {
            cells,
            n: 0,
            mean: vec![0.0; cells],
            m2: vec![0.0; cells],
            m3: vec![0.0; cells],
            m4: vec![0.0; cells],
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// One-pass update with a new observation vector.
    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.cells, "observation size");
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        for (c, &x) in values.iter().enumerate() {
            let delta = x - self.mean[c];
            let delta_n = delta / n;
            let delta_n2 = delta_n * delta_n;
            let term1 = delta * delta_n * n1;
            self.mean[c] += delta_n;
            self.m4[c] += term1 * delta_n2 * (n * n - 3.0 * n + 3.0)
                + 6.0 * delta_n2 * self.m2[c]
                - 4.0 * delta_n * self.m3[c];
            self.m3[c] += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2[c];
            self.m2[c] += term1;
        }
    }

    /// Combine two accumulators as if their observations were concatenated.
    pub fn merge(mut self, other: &MomentAccumulator) -> Self {
        assert_eq!(self.cells, other.cells, "accumulator widths");
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other.clone();
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        for c in 0..self.cells {
            let delta = other.mean[c] - self.mean[c];
            let d2 = delta * delta;
            let (m2a, m3a, m4a) = (self.m2[c], self.m3[c], self.m4[c]);
            let (m2b, m3b, m4b) = (other.m2[c], other.m3[c], other.m4[c]);
            self.mean[c] += delta * nb / n;
            self.m2[c] = m2a + m2b + d2 * na * nb / n;
            self.m3[c] = m3a
                + m3b
                + d2 * delta * na * nb * (na - nb) / (n * n)
                + 3.0 * delta * (na * m2b - nb * m2a) / n;
            self.m4[c] = m4a
                + m4b
                + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d2 * (na * na * m2b + nb * nb * m2a) / (n * n)
                + 4.0 * delta * (na * m3b - nb * m3a) / n;
        }
        self.n += other.n;
        self
    }

    /// Population-moment maps (1/n normalization, non-excess kurtosis).
    pub fn finalize(&self, nx: usize, ny: usize, source: SourceTag) -> Result<EnsembleStats> {
        if nx * ny != self.cells {
            return Err(Error::ShapeMismatch {
                op: "MomentAccumulator::finalize",
                lhs: vec![nx, ny],
                rhs: vec![self.cells],
            });
        }
        if self.n < 2 {
            return Err(Error::Contract(
                "moment maps need at least two realizations".into(),
            ));
        }
        let n = self.n as f64;
        let mut variance = vec![0.0; self.cells];
        let mut skewness = vec![0.0; self.cells];
        let mut kurtosis = vec![0.0; self.cells];
        let mut mask = vec![false; self.cells];
        for c in 0..self.cells {
            let v = self.m2[c] / n;
            variance[c] = v.max(0.0);
            if variance[c] >= VARIANCE_MASK_EPS {
                mask[c] = true;
                let s = math::sqrt(variance[c]);
                skewness[c] = (self.m3[c] / n) / (s * s * s);
                kurtosis[c] = (self.m4[c] / n) / (variance[c] * variance[c]);
            }
        }
        Ok(EnsembleStats {
            count: self.n,
            source,
            mean: Field::new(nx, ny, self.mean.clone())?,
            variance: Field::new(nx, ny, variance)?,
            skewness: Field::new(nx, ny, skewness)?,
            kurtosis: Field::new(nx, ny, kurtosis)?,
            mask,
        })
    }
}

/// First four population moment maps of an ensemble, plus the validity mask
/// for the scale-free moments.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub count: usize,
    pub source: SourceTag,
    pub mean: Field,
    pub variance: Field,
    /// `m3 / m2^(3/2)`; 0 where masked.
    pub skewness: Field,
    /// Non-excess `m4 / m2^2` (Gaussian = 3); 0 where masked.
    pub kurtosis: Field,
    /// True where the variance is at least [`VARIANCE_MASK_EPS`].
    pub mask: Vec<bool>,
}

impl EnsembleStats {
    /// Cell with the largest variance; ties break to the lowest row-major
    /// index. Errors when every cell is masked.
    pub fn max_variance_cell(&self) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (c, &v) in self.variance.values().iter().enumerate() {
            if !self.mask[c] {
                continue;
            }
            if best.map(|(_, bv)| v > bv).unwrap_or(true) {
                best = Some((c, v));
            }
        }
        best.map(|(c, _)| c)
            .ok_or_else(|| Error::Contract("every cell is variance-masked".into()))
    }

    pub fn masked_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }
}

/// Per-cell moment maps of an in-memory ensemble (streamed internally).
pub fn moment_maps<'a>(
    snapshots: impl IntoIterator<Item = &'a [f64]>,
    nx: usize,
    ny: usize,
    source: SourceTag,
) -> Result<EnsembleStats> {
    let mut acc = MomentAccumulator::new(nx * ny);
    for snap in snapshots {
        acc.push(snap);
    }
    acc.finalize(nx, ny, source)
}

/// Histogram bin width by Scott's rule, `3.49 sigma n^(-1/3)`.
pub fn scott_bin_width(sigma: f64, n: usize) -> f64 {
    3.49 * sigma * math::powf(n as f64, -1.0 / 3.0)
}

/// KDE bandwidth by Scott's rule, `sigma n^(-1/5)`.
pub fn scott_bandwidth(sigma: f64, n: usize) -> f64 {
    sigma * math::powf(n as f64, -1.0 / 5.0)
}

/// Equal-width histogram.
#[derive(Clone, Debug)]
pub struct Histogram {
    /// `bins + 1` edges, ascending.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bin `samples` over `[lo, hi]` with the given bin width (the bin count
    /// rounds up; out-of-range values clamp to the end bins).
    pub fn build(samples: &[f64], lo: f64, hi: f64, width: f64) -> Result<Histogram> {
        if hi <= lo || width <= 0.0 {
            return Err(Error::Config(alloc::format!(
                "histogram needs hi > lo and width > 0, got [{lo}, {hi}] width {width}"
            )));
        }
        let bins = math::ceil((hi - lo) / width).max(1.0) as usize;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect();
        let mut counts = vec![0usize; bins];
        for &x in samples {
            let pos = math::floor((x - lo) / (hi - lo) * bins as f64);
            let idx = (pos.max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Ok(Histogram { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// A Gaussian kernel density estimate with its evaluation grid, plus the
/// companion histogram of the same samples.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub samples: Vec<f64>,
    pub histogram: Histogram,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityEstimate {
    /// Scott's-rule KDE of `samples` (at least 2), evaluated on 512 points
    /// spanning `[min - 3h, max + 3h]`. `hist_range` fixes the histogram
    /// support (e.g. `[0,1]` for saturations, with the 1/256 width floor);
    /// otherwise the sample range is used.
    pub fn from_samples(samples: Vec<f64>, hist_range: Option<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Contract(alloc::format!(
                "density estimation needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("density samples must be finite".into()));
        }
        let n = samples.len();
        let mean = math::mean(&samples);
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let sigma = math::sqrt(var.max(0.0));

        let mut bandwidth = scott_bandwidth(sigma, n);
        if bandwidth <= 0.0 {
            bandwidth = DEGENERATE_BANDWIDTH;
        }
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (grid_lo, grid_hi) = (lo - 3.0 * bandwidth, hi + 3.0 * bandwidth);
        let grid: Vec<f64> = (0..512)
            .map(|i| grid_lo + (grid_hi - grid_lo) * i as f64 / 511.0)
            .collect();

        let histogram = match hist_range {
            Some((rlo, rhi)) => {
                let width = scott_bin_width(sigma, n).max(1.0 / 256.0);
                Histogram::build(&samples, rlo, rhi, width)?
            }
            None => {
                if hi > lo {
                    let width = if sigma > 0.0 {
                        scott_bin_width(sigma, n)
                    } else {
                        hi - lo
                    };
                    Histogram::build(&samples, lo, hi, width)?
                } else {
                    // all samples identical: one bin around them
                    let pad = math::abs(lo).max(1.0) * 1e-9;
                    Histogram::build(&samples, lo - pad, lo + pad, 2.0 * pad)?
                }
            }
        };

        let mut estimate = DensityEstimate {
            samples,
            histogram,
            bandwidth,
            grid,
            density: Vec::new(),
        };
        estimate.density = estimate.grid.iter().map(|&x| estimate.eval(x)).collect();
        Ok(estimate)
    }

    /// KDE value at an arbitrary point.
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm =
            1.0 / (self.samples.len() as f64 * h * math::sqrt(2.0 * core::f64::consts::PI));
        self.samples
            .iter()
            .map(|&xi| {
                let z = (x - xi) / h;
                math::exp(-0.5 * z * z)
            })
            .sum::<f64>()
            * norm
    }

    /// Trapezoid integral of the density over its grid.
    pub fn grid_integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
            .sum()
    }
}

/// Histogram (and KDE) of the statistics snapshot at the maximum-variance
/// cell. Returns the chosen cell index alongside the estimate.
pub fn point_histogram(
    snapshot_values: &[Vec<f64>],
    stats: &EnsembleStats,
) -> Result<(usize, DensityEstimate)> {
    let cell = stats.max_variance_cell()?;
    let samples: Vec<f64> = snapshot_values.iter().map(|snap| snap[cell]).collect();
    let estimate = DensityEstimate::from_samples(samples, Some((0.0, 1.0)))?;
    Ok((cell, estimate))
}

/// Breakthrough-time density; absent breakthroughs are excluded and
/// reported back as a count.
pub fn breakthrough_density(samples: &[Option<f64>]) -> Result<(DensityEstimate, usize)> {
    let finite: Vec<f64> = samples.iter().filter_map(|&s| s).collect();
    let absent = samples.len() - finite.len();
    let estimate = DensityEstimate::from_samples(finite, None)?;
    Ok((estimate, absent))
}

/// Pointwise mean and population variance of curves interpolated onto a
/// shared grid.
#[derive(Clone, Debug)]
pub struct CurveStats {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: usize,
}

/// Uniform PVI grid over `[0, 2]`.
pub fn pvi_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| 2.0 * i as f64 / (points - 1) as f64)
        .collect()
}

fn interp(curve: &[(f64, f64)], x: f64) -> f64 {
    match curve.binary_search_by(|&(t, _)| t.partial_cmp(&x).expect("finite times")) {
        Ok(i) => curve[i].1,
        Err(0) => curve[0].1,
        Err(i) if i == curve.len() => curve[curve.len() - 1].1,
        Err(i) => {
            let (t0, v0) = curve[i - 1];
            let (t1, v1) = curve[i];
            v0 + (v1 - v0) * (x - t0) / (t1 - t0)
        }
    }
}

/// Interpolate every curve onto `grid` and reduce pointwise.
pub fn curve_stats(curves: &[Vec<(f64, f64)>], grid: &[f64]) -> Result<CurveStats> {
    if curves.is_empty() {
        return Err(Error::Empty("curve ensemble"));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    for (i, curve) in curves.iter().enumerate() {
        let covered = curve
            .first()
            .zip(curve.last())
            .map(|(&(a, _), &(b, _))| a <= lo + 1e-12 && b >= hi - 1e-9)
            .unwrap_or(false);
        if !covered {
            return Err(Error::Contract(alloc::format!(
                "curve {i} does not cover the grid [{lo}, {hi}]"
            )));
        }
    }
    let n = curves.len() as f64;
    let mut mean = vec![0.0; grid.len()];
    let mut variance = vec![0.0; grid.len()];
    for (gi, &x) in grid.iter().enumerate() {
        let vals: Vec<f64> = curves.iter().map(|c| interp(c, x)).collect();
        let m = math::mean(&vals);
        mean[gi] = m;
        variance[gi] = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    }
    Ok(CurveStats {
        grid: grid.to_vec(),
        mean,
        variance,
        count: curves.len(),
    })
}

/// A deterministic indexed stream of log-permeability realizations
/// (binary-range values, continuous allowed).
pub trait RealizationSource: Sync {
    fn realization(&self, index: usize) -> Result<Field>;
}

/// Uniform subsample of a stored dataset, without replacement.
pub struct DataSource<'a> {
    dataset: &'a Dataset,
    indices: Vec<usize>,
}

impl<'a> DataSource<'a> {
    pub fn subsample(dataset: &'a Dataset, n: usize, seed: u64) -> Result<Self> {
        if n > dataset.len() {
            return Err(Error::Capacity {
                requested: n,
                available: dataset.len(),
            });
        }
        let mut rng = SeedRng::stream(seed, 0);
        Ok(DataSource {
            dataset,
            indices: rng.sample_without_replacement(dataset.len(), n),
        })
    }
}

impl RealizationSource for DataSource<'_> {
    fn realization(&self, index: usize) -> Result<Field> {
        Ok(self.dataset.patch_field(self.indices[index]))
    }
}

/// Fresh PCA samples, one independent stream per realization index.
pub struct PcaSource<'a> {
    pub model: &'a PcaModel,
    pub seed: u64,
}

impl RealizationSource for PcaSource<'_> {
    fn realization(&self, index: usize) -> Result<Field> {
        let mut rng = SeedRng::stream(self.seed, index as u64 + 1);
        Ok(self.model.sample_random(&mut rng))
    }
}

/// Everything retained from one propagated ensemble.
pub struct EnsembleResult {
    pub stats: EnsembleStats,
    /// Statistics-snapshot values per surviving realization.
    pub snapshot_values: Vec<Vec<f64>>,
    /// Water-cut curves (PVI, fraction) per surviving realization.
    pub curves: Vec<Vec<(f64, f64)>>,
    /// Breakthrough PVI per surviving realization (None = not reached).
    pub breakthroughs: Vec<Option<f64>>,
    /// (realization index, error) for failed simulations.
    pub failures: Vec<(usize, Error)>,
}

// Fixed chunking keeps the reduction grouping (and thus the exact bits)
// independent of the worker count.
const PROPAGATE_CHUNK: usize = 32;

/// Per-realization retained outputs: snapshot, water-cut curve,
/// breakthrough.
type SimulationYield = (Vec<f64>, Vec<(f64, f64)>, Option<f64>);

struct ChunkOutput {
    acc: MomentAccumulator,
    snapshots: Vec<Vec<f64>>,
    curves: Vec<Vec<(f64, f64)>>,
    breakthroughs: Vec<Option<f64>>,
    failures: Vec<(usize, Error)>,
}

/// Draw `n` realizations from `source`, simulate each, and reduce. One
/// realization's simulation is a pure function, so chunks may run on any
/// number of workers; the fixed chunk grouping keeps results bit-identical
/// regardless.
pub fn propagate(
    source: &dyn RealizationSource,
    prob: &FlowProblem,
    sim: &SimConfig,
    n: usize,
    tag: SourceTag,
) -> Result<EnsembleResult> {
    if n < 2 {
        return Err(Error::Contract("ensemble propagation needs n >= 2".into()));
    }
    if sim.snapshot_times.is_empty() {
        return Err(Error::Contract(
            "propagation needs a statistics snapshot time".into(),
        ));
    }
    let starts: Vec<usize> = (0..n).step_by(PROPAGATE_CHUNK).collect();
    let run_chunk = |&start: &usize| -> ChunkOutput {
        let end = (start + PROPAGATE_CHUNK).min(n);
        let mut out = ChunkOutput {
            acc: MomentAccumulator::new(0),
            snapshots: Vec::new(),
            curves: Vec::new(),
            breakthroughs: Vec::new(),
            failures: Vec::new(),
        };
        let mut acc: Option<MomentAccumulator> = None;
        for i in start..end {
            let sim_one = || -> Result<SimulationYield> {
                let log_perm = source.realization(i)?;
                let perm = PermField::from_log(&log_perm)?;
                let sol = simulate(&perm, prob, sim)?;
                let snap = sol.snapshots[0].1.values().to_vec();
                Ok((snap, sol.water_cut, sol.breakthrough))
            };
            match sim_one() {
                Ok((snap, curve, bt)) => {
                    acc.get_or_insert_with(|| MomentAccumulator::new(snap.len()))
                        .push(&snap);
                    out.snapshots.push(snap);
                    out.curves.push(curve);
                    out.breakthroughs.push(bt);
                }
                Err(e) => out.failures.push((i, e)),
            }
        }
        if let Some(acc) = acc {
            out.acc = acc;
        }
        out
    };

    #[cfg(feature = "parallel")]
    let chunks: Vec<ChunkOutput> = starts.par_iter().map(run_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<ChunkOutput> = starts.iter().map(run_chunk).collect();

    let mut acc: Option<MomentAccumulator> = None;
    let mut snapshot_values = Vec::new();
    let mut curves = Vec::new();
    let mut breakthroughs = Vec::new();
    let mut failures = Vec::new();
    for chunk in chunks {
        if chunk.acc.count() > 0 {
            acc = Some(match acc {
                None => chunk.acc,
                Some(prev) => prev.merge(&chunk.acc),
            });
        }
        snapshot_values.extend(chunk.snapshots);
        curves.extend(chunk.curves);
        breakthroughs.extend(chunk.breakthroughs);
        failures.extend(chunk.failures);
    }

    if failures.len() * 100 > n {
        return Err(Error::Numerical(alloc::format!(
            "{} of {n} simulations failed (more than 1%); first failure at \
             realization {}: {}",
            failures.len(),
            failures[0].0,
            failures[0].1
        )));
    }
    let acc = acc.ok_or(Error::Empty("propagated ensemble"))?;
    let first = source.realization(0)?;
    let stats = acc.finalize(first.nx(), first.ny(), tag)?;
    Ok(EnsembleResult {
        stats,
        snapshot_values,
        curves,
        breakthroughs,
        failures,
    })
}
