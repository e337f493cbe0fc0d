//! "GPCK" checkpoint container: a flat binary file of named f64 tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "GPCK"
//! version u32      1
//! count   u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8), rank u32, dims (u64 each),
//!   values (raw little-endian f64 bits)
//! ```
//!
//! Values round-trip bit-exactly (NaN payloads and signed zeros included).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use geoparam_core::tensor::Tensor;

const MAGIC: &[u8; 4] = b"GPCK";
const VERSION: u32 = 1;

/// One named tensor read back from a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl TensorEntry {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        TensorEntry {
            name: name.into(),
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.values.clone())
            .with_context(|| format!("tensor `{}` is malformed", self.name))
    }

    pub fn scalar(&self) -> Result<f64> {
        if self.values.len() != 1 {
            bail!("tensor `{}` is not a scalar", self.name);
        }
        Ok(self.values[0])
    }
}

pub fn write_entries(path: &Path, entries: &[TensorEntry]) -> Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create checkpoint {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
        for &d in &e.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let numel: usize = e.shape.iter().product();
        if numel != e.values.len() {
            bail!("tensor `{}`: {} values for shape {:?}", e.name, e.values.len(), e.shape);
        }
        for &v in &e.values {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<TensorEntry>> {
    let file =
        File::open(path).with_context(|| format!("cannot open checkpoint {}", path.display()))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{} is not a GPCK file (magic {:?})", path.display(), magic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        bail!("unsupported GPCK version {version}");
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).context("tensor name is not UTF-8")?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        let mut buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            values.push(f64::from_bits(u64::from_le_bytes(buf)));
        }
        entries.push(TensorEntry {
            name,
            shape,
            values,
        });
    }
    Ok(entries)
}

/// Find one entry by name.
pub fn find<'a>(entries: &'a [TensorEntry], name: &str) -> Result<&'a TensorEntry> {
    entries
        .iter()
        .find(|e| e.name == name)
        .with_context(|| format!("checkpoint has no tensor named `{name}`"))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
