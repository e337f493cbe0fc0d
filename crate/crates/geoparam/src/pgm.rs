//! Binary PGM (P5) export for quick visual inspection of fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use geoparam_core::field::Field;

fn write_p5(path: &Path, nx: usize, ny: usize, pixels: &[u8]) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}

/// Export a binary-range field: `pixel = round(v * 255)` after clamping to
/// `[0, 1]`.
pub fn write_binary_range(path: &Path, field: &Field) -> Result<()> {
    let pixels: Vec<u8> = field
        .values()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    write_p5(path, field.nx(), field.ny(), &pixels)
}

/// Export an arbitrary field min-max normalized to the full gray range.
/// A constant field maps to mid-gray.
pub fn write_normalized(path: &Path, field: &Field) -> Result<()> {
    let lo = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let pixels: Vec<u8> = if hi > lo {
        field
            .values()
            .iter()
            .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round() as u8)
            .collect()
    } else {
        vec![128; field.len()]
    };
    write_p5(path, field.nx(), field.ny(), &pixels)
}
