//! im2col-based 2-D cross-correlation kernels.
//!
//! Three primitives cover forward and backward for both convolution
//! flavors: `fwd` (image -> features), `dx` (features -> image, the adjoint)
//! and `dw` (kernel gradient). A transposed convolution is exactly the
//! adjoint, so its forward pass is `dx` and its backward passes are `fwd` /
//! `dw` with the roles of the two feature maps swapped.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gemm;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Geometry of one conv configuration (shared by conv and conv-transpose).
///
/// `h`/`w` are the image-side sizes, `out_h`/`out_w` the feature-side sizes:
/// conv maps `[cin, h, w] -> [cout, out_h, out_w]` and the adjoint maps back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Feature-map size along one axis; errors unless `(n + 2 pad - k)` is a
/// nonnegative multiple of `stride`.
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || k == 0 {
        return Err(Error::Config(alloc::format!(
            "convolution kernel {k} / stride {stride} must be positive"
        )));
    }
    let padded = n + 2 * pad;
    if padded < k || !(padded - k).is_multiple_of(stride) {
        return Err(Error::Config(alloc::format!(
            "convolution output size ({n} + 2*{pad} - {k}) / {stride} + 1 is not a positive integer"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl ConvGeom {
    /// Geometry for a forward convolution on an `[cin, h, w]` input.
    pub fn forward(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        h: usize,
        w: usize,
    ) -> Result<Self> {
        Ok(ConvGeom {
            cin,
            cout,
            k,
            stride,
            pad,
            h,
            w,
            out_h: conv_out_size(h, k, stride, pad)?,
            out_w: conv_out_size(w, k, stride, pad)?,
        })
    }

    /// Geometry for a transposed convolution on an `[cout, out_h, out_w]`
    /// input; the produced image side is `(n-1)*stride - 2*pad + k`.
    pub fn transposed(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Result<Self> {
        let img = |n: usize| -> Result<usize> {
            let grown = (n - 1) * stride + k;
            if grown <= 2 * pad {
                return Err(Error::Config(alloc::format!(
                    "transposed convolution output ({n}-1)*{stride} - 2*{pad} + {k} is not positive"
                )));
            }
            Ok(grown - 2 * pad)
        };
        Ok(ConvGeom {
            cin,
            cout,
            k,
            stride,
            pad,
            h: img(in_h)?,
            w: img(in_w)?,
            out_h: in_h,
            out_w: in_w,
        })
    }

    pub fn image_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn feature_len(&self) -> usize {
        self.cout * self.out_h * self.out_w
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn kernel_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }
}

/// Unfold one image into the `[cin*k*k, out_h*out_w]` patch matrix.
fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    debug_assert_eq!(x.len(), g.image_len());
    debug_assert_eq!(col.len(), g.col_rows() * g.col_cols());
    let cols = g.col_cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let out = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut out[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Fold a patch matrix back into an image by scatter-add (adjoint of
/// `im2col`).
fn col2im(col: &[f64], g: &ConvGeom, x: &mut [f64]) {
    debug_assert_eq!(x.len(), g.image_len());
    let cols = g.col_cols();
    x.fill(0.0);
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn fwd_one(x: &[f64], kernel: &[f64], g: &ConvGeom, out: &mut [f64]) {
    let mut col = vec![0.0; g.col_rows() * g.col_cols()];
    im2col(x, g, &mut col);
    gemm::dgemm(
        g.cout,
        g.col_rows(),
        g.col_cols(),
        1.0,
        kernel,
        &col,
        0.0,
        out,
    );
}

fn dx_one(dy: &[f64], kernel: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let mut col = vec![0.0; g.col_rows() * g.col_cols()];
    gemm::dgemm_at_b(g.col_rows(), g.cout, g.col_cols(), kernel, dy, &mut col);
    col2im(&col, g, dx);
}

fn dw_one(x: &[f64], dy: &[f64], g: &ConvGeom, dw: &mut [f64]) {
    let mut col = vec![0.0; g.col_rows() * g.col_cols()];
    im2col(x, g, &mut col);
    gemm::dgemm_a_bt_acc(g.cout, g.col_cols(), g.col_rows(), dy, &col, dw);
}

/// Run `f` over (input sample, output sample) pairs; parallel when the
/// feature is enabled. Outputs are disjoint slices so the result is
/// bit-identical for any thread count.
fn for_each_sample(
    batch: usize,
    input: &[f64],
    in_stride: usize,
    out: &mut [f64],
    out_stride: usize,
    f: impl Fn(&[f64], &mut [f64]) + Sync,
) {
    debug_assert_eq!(input.len(), batch * in_stride);
    debug_assert_eq!(out.len(), batch * out_stride);
    #[cfg(feature = "parallel")]
    {
        input
            .par_chunks_exact(in_stride.max(1))
            .zip(out.par_chunks_exact_mut(out_stride.max(1)))
            .for_each(|(xs, ys)| f(xs, ys));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (xs, ys) in input
            .chunks_exact(in_stride.max(1))
            .zip(out.chunks_exact_mut(out_stride.max(1)))
        {
            f(xs, ys);
        }
    }
}

/// Batched cross-correlation: `[batch, cin, h, w] -> [batch, cout, out_h, out_w]`.
pub fn conv_fwd(batch: usize, x: &[f64], kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    assert_eq!(kernel.len(), g.kernel_len());
    let mut out = vec![0.0; batch * g.feature_len()];
    for_each_sample(
        batch,
        x,
        g.image_len(),
        &mut out,
        g.feature_len(),
        |xs, ys| fwd_one(xs, kernel, g, ys),
    );
    out
}

/// Batched adjoint: `[batch, cout, out_h, out_w] -> [batch, cin, h, w]`.
/// This is conv's input gradient and conv-transpose's forward pass.
pub fn conv_dx(batch: usize, dy: &[f64], kernel: &[f64], g: &ConvGeom) -> Vec<f64> {
    assert_eq!(kernel.len(), g.kernel_len());
    let mut dx = vec![0.0; batch * g.image_len()];
    for_each_sample(
        batch,
        dy,
        g.feature_len(),
        &mut dx,
        g.image_len(),
        |ds, xs| dx_one(ds, kernel, g, xs),
    );
    dx
}

// Fixed chunk count so the reduction order (and hence the bits) never
// depends on how many threads run.
const DW_CHUNKS: usize = 8;

/// Batched kernel gradient: accumulates `dW[cout, cin*k*k]` over the batch.
pub fn conv_dw(batch: usize, x: &[f64], dy: &[f64], g: &ConvGeom) -> Vec<f64> {
    let chunk = batch.div_ceil(DW_CHUNKS).max(1);
    let starts: Vec<usize> = (0..batch).step_by(chunk).collect();
    let partial = |&s: &usize| {
        let e = (s + chunk).min(batch);
        let mut dw = vec![0.0; g.kernel_len()];
        for i in s..e {
            dw_one(
                &x[i * g.image_len()..(i + 1) * g.image_len()],
                &dy[i * g.feature_len()..(i + 1) * g.feature_len()],
                g,
                &mut dw,
            );
        }
        dw
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = starts.par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = starts.iter().map(partial).collect();

    let mut dw = vec![0.0; g.kernel_len()];
    for p in partials {
        for (acc, v) in dw.iter_mut().zip(p) {
            *acc += v;
        }
    }
    dw
}

/// Per-output-channel bias gradient: sums `dy` over batch and spatial dims.
pub fn conv_db(batch: usize, dy: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut db = vec![0.0; g.cout];
    let hw = g.out_h * g.out_w;
    for s in 0..batch {
        for (c, acc) in db.iter_mut().enumerate() {
            let base = (s * g.cout + c) * hw;
            *acc += dy[base..base + hw].iter().sum::<f64>();
        }
    }
    db
}

/// Add a per-channel bias to a `[batch, cout, out_h, out_w]` buffer.
pub fn add_channel_bias(batch: usize, out: &mut [f64], bias: &[f64], hw: usize) {
    for s in 0..batch {
        for (c, &b) in bias.iter().enumerate() {
            let base = (s * bias.len() + c) * hw;
            for v in &mut out[base..base + hw] {
                *v += b;
            }
        }
    }
}
