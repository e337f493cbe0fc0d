//! A 2-D scalar grid (log-permeability, pressure, saturation, moment maps).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major 2-D grid: `values[y * nx + x]`, `nx` columns by `ny` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(Error::ShapeMismatch {
                op: "Field::new",
                lhs: vec![nx, ny],
                rhs: vec![values.len()],
            });
        }
        Ok(Field { nx, ny, values })
    }

    pub fn zeros(nx: usize, ny: usize) -> Self {
        Field {
            nx,
            ny,
            values: vec![0.0; nx * ny],
        }
    }

    pub fn filled(nx: usize, ny: usize, v: f64) -> Self {
        Field {
            nx,
            ny,
            values: vec![v; nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny);
        y * self.nx + x
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = self.idx(x, y);
        self.values[i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        crate::math::mean(&self.values)
    }

    /// Elementwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Transposed copy (x and y swapped).
    pub fn transposed(&self) -> Field {
        let mut out = Field::zeros(self.ny, self.nx);
        for y in 0..self.ny {
            for x in 0..self.nx {
                out.set(y, x, self.at(x, y));
            }
        }
        out
    }
}
