//! "GPDS" dataset pack: one binary file holding every patch of a dataset.
//!
//! Layout (little-endian): magic "GPDS", version u32, count u32, nx u32,
//! ny u32, range tag u8 (0 = binary [0,1], 1 = tanh [-1,1]), then
//! `count * nx * ny` raw f64 values, one patch after another, row-major.
//! The declared range is strictly validated on both save and load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use geoparam_core::dataset::{Dataset, ValueRange};

const MAGIC: &[u8; 4] = b"GPDS";
const VERSION: u32 = 1;

fn range_tag(range: ValueRange) -> u8 {
    match range {
        ValueRange::Binary => 0,
        ValueRange::Tanh => 1,
    }
}

fn tag_range(tag: u8) -> Result<ValueRange> {
    match tag {
        0 => Ok(ValueRange::Binary),
        1 => Ok(ValueRange::Tanh),
        other => bail!("unknown dataset range tag {other}"),
    }
}

pub fn write_pack(path: &Path, ds: &Dataset) -> Result<()> {
    // `Dataset` enforces its range invariant on construction; re-checking on
    // save keeps a corrupted in-memory state from reaching disk.
    let range = ds.range();
    if let Some(bad) = ds.values().iter().find(|v| !range.contains(**v)) {
        bail!("dataset value {bad} outside its declared {range:?} range");
    }
    let file =
        File::create(path).with_context(|| format!("cannot create pack {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u32).to_le_bytes())?;
    w.write_all(&(ds.nx() as u32).to_le_bytes())?;
    w.write_all(&(ds.ny() as u32).to_le_bytes())?;
    w.write_all(&[range_tag(range)])?;
    for &v in ds.values() {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pack(path: &Path) -> Result<Dataset> {
    let file =
        File::open(path).with_context(|| format!("cannot open pack {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{} is not a GPDS file", path.display());
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        bail!("unsupported GPDS version {version}");
    }
    r.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let nx = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let ny = u32::from_le_bytes(u32buf) as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let range = tag_range(tag[0])?;

    let numel = count
        .checked_mul(nx * ny)
        .context("dataset dimensions overflow")?;
    let mut values = Vec::with_capacity(numel);
    let mut buf = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut buf)?;
        values.push(f64::from_bits(u64::from_le_bytes(buf)));
    }
    // strict range check on load happens inside Dataset::new
    Dataset::new(nx, ny, count, values, range)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}
