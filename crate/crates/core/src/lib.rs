//! Multi-grain multiple-instance learning for scene classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`ops`], [`autodiff`], [`functional`], [`finite_diff`]: dense
//!   tensors, convolution kernels and reverse-mode gradients.
//! * [`backbone`], [`mgp`], [`mbmir`], [`ssf`], [`model`]: the network and its
//!   training objective.
//! * [`mil`]: classic MIL labels, alternative fusion strategies, covariance.
//! * [`data`]: image formats, datasets, synthetic scenes, heatmaps.
//! * [`train`]: configuration, optimiser, training and evaluation, checkpoints,
//!   experiments and gradient checking.
//! * [`cli`]: the `agos` command line.

pub mod autodiff;
pub mod backbone;
pub mod cli;
pub mod data;
pub mod error;
pub mod finite_diff;
pub mod functional;
pub mod mbmir;
pub mod mgp;
pub mod mil;
pub mod model;
pub mod ops;
pub mod params;
pub mod ssf;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Real, Shape, Tensor};
