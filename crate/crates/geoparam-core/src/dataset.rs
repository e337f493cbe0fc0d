//! Channelized conceptual images, patch datasets and value-range maps.
//!
//! The conceptual images are procedural stand-ins for hand-drawn binary
//! facies maps: 250x250 grids of high-permeability channels (value 1) in a
//! low-permeability background (value 0). Two channel styles are provided,
//! near-horizontal random-walk bands and strongly curved sinusoids. A
//! generated image is accepted only if its channel fraction lands in
//! `[0.15, 0.45]`; otherwise generation retries with the next sub-seed, so
//! the output is still a pure function of `(pattern, seed)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::math;
use crate::rng::SeedRng;

/// Side length of a conceptual image.
pub const CONCEPTUAL_SIZE: usize = 250;
/// Side length of a realization patch.
pub const PATCH_SIZE: usize = 50;
/// Accepted channel-pixel fraction of a conceptual image.
pub const CHANNEL_FRACTION_RANGE: (f64, f64) = (0.15, 0.45);

/// Channel style of a conceptual image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// Near-horizontal bands following a slight random walk.
    SemiStraight,
    /// Sinusoidal bands with randomized amplitude, period and phase.
    Meandering,
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::SemiStraight => "semi_straight",
            Pattern::Meandering => "meandering",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "semi_straight" => Ok(Pattern::SemiStraight),
            "meandering" => Ok(Pattern::Meandering),
            other => Err(Error::Config(alloc::format!(
                "unknown pattern `{other}` (expected semi_straight or meandering)"
            ))),
        }
    }
}

/// A binary 250x250 log-permeability exemplar.
#[derive(Clone, Debug)]
pub struct ConceptualImage {
    pub grid: Field,
    pub pattern: Pattern,
    pub seed: u64,
}

/// Value range tag of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueRange {
    /// `[0, 1]`, the native binary facies encoding.
    Binary,
    /// `[-1, 1]`, matching a tanh output activation.
    Tanh,
}

impl ValueRange {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ValueRange::Binary => (0.0, 1.0),
            ValueRange::Tanh => (-1.0, 1.0),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v.is_finite() && v >= lo && v <= hi
    }
}

/// An ordered collection of equally sized patches plus range metadata.
#[derive(Clone, Debug)]
pub struct Dataset {
    nx: usize,
    ny: usize,
    count: usize,
    values: Vec<f64>,
    range: ValueRange,
    /// Top-left crop offsets, present when the patches came from an image.
    pub offsets: Option<Vec<(usize, usize)>>,
    /// Source image metadata, when applicable.
    pub source: Option<(Pattern, u64)>,
}

impl Dataset {
    /// Build a dataset, strictly checking that every value lies in `range`.
    pub fn new(
        nx: usize,
        ny: usize,
        count: usize,
        values: Vec<f64>,
        range: ValueRange,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || values.len() != nx * ny * count {
            return Err(Error::ShapeMismatch {
                op: "Dataset::new",
                lhs: alloc::vec![count, ny, nx],
                rhs: alloc::vec![values.len()],
            });
        }
        if let Some(bad) = values.iter().find(|v| !range.contains(**v)) {
            return Err(Error::Contract(alloc::format!(
                "dataset value {bad} outside declared {range:?} range"
            )));
        }
        Ok(Dataset {
            nx,
            ny,
            count,
            values,
            range,
            offsets: None,
            source: None,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn patch_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Raw values of patch `i`.
    pub fn patch(&self, i: usize) -> &[f64] {
        let n = self.patch_len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn patch_field(&self, i: usize) -> Field {
        Field::new(self.nx, self.ny, self.patch(i).to_vec()).expect("patch is well-formed")
    }

    pub fn iter_patches(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.patch_len())
    }

    pub fn mean(&self) -> f64 {
        math::mean(&self.values)
    }
}

/// Fraction of channel (value 1) pixels in a binary field.
pub fn channel_fraction(grid: &Field) -> f64 {
    grid.mean()
}

/// Pooled lag-1 Pearson autocorrelation along rows (horizontal) and along
/// columns (vertical).
pub fn lag1_autocorrelation(grid: &Field) -> (f64, f64) {
    let corr = |pairs: &mut dyn Iterator<Item = (f64, f64)>| {
        let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (a, b) in pairs {
            n += 1.0;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        let cov = sab / n - (sa / n) * (sb / n);
        let va = saa / n - (sa / n) * (sa / n);
        let vb = sbb / n - (sb / n) * (sb / n);
        if va <= 0.0 || vb <= 0.0 {
            0.0
        } else {
            cov / math::sqrt(va * vb)
        }
    };
    let horizontal = corr(&mut (0..grid.ny()).flat_map(|y| {
        (0..grid.nx() - 1).map(move |x| (x, y))
    })
    .map(|(x, y)| (grid.at(x, y), grid.at(x + 1, y))));
    let vertical = corr(&mut (0..grid.ny() - 1).flat_map(|y| {
        (0..grid.nx()).map(move |x| (x, y))
    })
    .map(|(x, y)| (grid.at(x, y), grid.at(x, y + 1))));
    (horizontal, vertical)
}

fn stamp_disc(grid: &mut Field, cx: i64, cy: i64, radius: i64) {
    let n = grid.nx() as i64;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && x < n && y >= 0 && y < grid.ny() as i64 {
                    grid.set(x as usize, y as usize, 1.0);
                }
            }
        }
    }
}

fn draw_semi_straight(rng: &mut SeedRng) -> Field {
    let n = CONCEPTUAL_SIZE;
    let mut grid = Field::zeros(n, n);
    let channels = 10 + rng.below(4); // 10..=13
    for _ in 0..channels {
        let mut row = rng.below(n) as i64;
        let radius = 2 + rng.below(3) as i64; // band half-width 2..=4
        for x in 0..n as i64 {
            // small vertical drift
            if rng.uniform() < 0.3 {
                row += if rng.uniform() < 0.5 { 1 } else { -1 };
            }
            row = row.clamp(0, n as i64 - 1);
            stamp_disc(&mut grid, x, row, radius);
        }
    }
    grid
}

fn draw_meandering(rng: &mut SeedRng) -> Field {
    let n = CONCEPTUAL_SIZE;
    let mut grid = Field::zeros(n, n);
    let channels = 9 + rng.below(4); // 9..=12
    for _ in 0..channels {
        let center = rng.uniform_in(0.0, n as f64);
        let amplitude = rng.uniform_in(18.0, 45.0);
        let period = rng.uniform_in(55.0, 120.0);
        let phase = rng.uniform_in(0.0, core::f64::consts::TAU);
        let radius = 2 + rng.below(2) as i64; // 2..=3
        for x in 0..n as i64 {
            let y = center + amplitude * math::sin(core::f64::consts::TAU * x as f64 / period + phase);
            stamp_disc(&mut grid, x, math::round(y) as i64, radius);
        }
    }
    grid
}

/// Generate a 250x250 binary conceptual image, deterministic in
/// `(pattern, seed)`. Retries with sub-seeds until the channel fraction
/// lands in [`CHANNEL_FRACTION_RANGE`].
pub fn generate_conceptual(pattern: Pattern, seed: u64) -> ConceptualImage {
    let (lo, hi) = CHANNEL_FRACTION_RANGE;
    for attempt in 0..10_000u64 {
        let mut rng = SeedRng::stream(seed, attempt);
        let grid = match pattern {
            Pattern::SemiStraight => draw_semi_straight(&mut rng),
            Pattern::Meandering => draw_meandering(&mut rng),
        };
        let fraction = channel_fraction(&grid);
        if fraction >= lo && fraction <= hi {
            return ConceptualImage {
                grid,
                pattern,
                seed,
            };
        }
    }
    unreachable!("channel fraction never reached {lo}..{hi} after 10000 attempts");
}

/// Crop `count` patches of side `patch` from an image, sampled uniformly
/// without replacement over all top-left offsets.
pub fn crop_patches(
    img: &ConceptualImage,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    let n = img.grid.nx();
    if patch == 0 || patch > n {
        return Err(Error::Config(alloc::format!(
            "patch size {patch} does not fit a {n}x{n} image"
        )));
    }
    let per_axis = n - patch + 1;
    let positions = per_axis * per_axis;
    if count > positions {
        return Err(Error::Capacity {
            requested: count,
            available: positions,
        });
    }
    let mut rng = SeedRng::stream(seed, 0);
    let chosen = rng.sample_without_replacement(positions, count);
    let mut values = Vec::with_capacity(count * patch * patch);
    let mut offsets = Vec::with_capacity(count);
    for id in chosen {
        let (ox, oy) = (id % per_axis, id / per_axis);
        offsets.push((ox, oy));
        for y in 0..patch {
            let start = img.grid.idx(ox, oy + y);
            values.extend_from_slice(&img.grid.values()[start..start + patch]);
        }
    }
    let mut ds = Dataset::new(patch, patch, count, values, ValueRange::Binary)?;
    ds.offsets = Some(offsets);
    ds.source = Some((img.pattern, img.seed));
    Ok(ds)
}

fn remap(d: &Dataset, from: ValueRange, to: ValueRange, f: impl Fn(f64) -> f64) -> Result<Dataset> {
    if d.range != from {
        return Err(Error::Contract(alloc::format!(
            "expected a {from:?}-range dataset, got {:?}",
            d.range
        )));
    }
    let mut out = Dataset::new(
        d.nx,
        d.ny,
        d.count,
        d.values.iter().map(|&v| f(v)).collect(),
        to,
    )?;
    out.offsets = d.offsets.clone();
    out.source = d.source;
    Ok(out)
}

/// Affine map `[0,1] -> [-1,1]`, `v -> 2v - 1`.
pub fn to_tanh_range(d: &Dataset) -> Result<Dataset> {
    remap(d, ValueRange::Binary, ValueRange::Tanh, |v| 2.0 * v - 1.0)
}

/// Affine map `[-1,1] -> [0,1]`, `v -> (v + 1) / 2`.
pub fn to_binary_range(d: &Dataset) -> Result<Dataset> {
    remap(d, ValueRange::Tanh, ValueRange::Binary, |v| (v + 1.0) / 2.0)
}
