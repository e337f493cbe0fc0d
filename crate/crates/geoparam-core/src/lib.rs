//! Parametrization of channelized geological models with PCA and a
//! Wasserstein GAN, validated by propagating realization ensembles through
//! a single-phase Darcy flow simulator.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`dataset`]: procedural 250x250 channelized conceptual images, 50x50
//!   patch datasets, and the binary `[0,1]` <-> tanh `[-1,1]` range maps.
//! - [`pca`]: truncated principal-component parametrization fitted on a
//!   realization dataset, with Gaussian sampling.
//! - [`graph`]/[`net`]/[`optim`]: a minimal dense-tensor reverse-mode
//!   autodiff engine with the layers the GAN needs (fully connected,
//!   strided and transposed convolutions, batch norm), RMSProp updates and
//!   weight clipping.
//! - [`wgan`]: DCGAN-style generator/critic pair trained with the
//!   Wasserstein objective (clipped critic, alternating updates).
//! - [`flow`]: two-point flux finite-volume pressure solve plus explicit
//!   upwind saturation transport for quarter-five-spot and uniform-flow
//!   problems on the unit square.
//! - [`uq`]: Monte Carlo ensemble propagation with streaming moment maps,
//!   water-cut curve statistics and breakthrough-time density estimates.
//!
//! Everything is `f64`, deterministic under explicit seeds, and usable
//! without `std` (enable the `libm` feature, disable default features);
//! file formats and the CLI live in the companion `geoparam` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("geoparam-core needs either the `std` or the `libm` feature for f64 math");

pub mod dataset;
pub mod error;
pub mod field;
pub mod flow;
pub mod gemm;
pub mod graph;
pub mod linsolve;
pub mod math;
pub mod net;
pub mod optim;
pub mod params;
pub mod pca;
pub mod rng;
pub mod tensor;
pub mod uq;
pub mod wgan;

mod conv;
mod eigen;

pub use error::{Error, Result};
pub use field::Field;
pub use rng::SeedRng;
pub use tensor::Tensor;
