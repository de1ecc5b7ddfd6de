//! Convolution with partial-convolution-based padding.
//!
//! The core idea: treat padded cells as missing data and re-weight each
//! border output by the ratio of the full window size to the number of
//! window taps that land on valid input. Interior windows keep ratio 1 and
//! are bit-identical to ordinary zero-padded convolution.
//!
//! The crate is `no_std` + `alloc`: pure tensor math, padding schemes, the
//! ratio-map machinery with caching, a small reverse-mode gradient engine
//! with an SGD trainer, synthetic border-sensitive datasets, tiled inference
//! and segmentation metrics. File formats, checkpoints and the CLI live in
//! the companion `pconv-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod conv;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod layers;
pub mod mask;
pub mod metrics;
pub mod model;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod padding;
pub mod ratio;
pub mod rng;
pub mod tensor;
pub mod tile;
pub mod train;

pub use conv::{conv2d_forward, conv2d_forward_cached, conv2d_partial_with_ratio, ConvWeights};
pub use error::{Error, Result};
pub use geometry::{ConvGeometry, PadMode};
pub use mask::{chain_masks, update_mask, Mask, MaskChain};
pub use padding::pad;
pub use ratio::{compute_ratio_map, RatioCache, RatioMap};
pub use tensor::{BinOp, DType, Tensor};
