//! Convolution geometry arithmetic: kernel, stride, dilation, symmetric
//! per-axis padding, and the output-extent formula shared by every
//! convolution path.

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// How border cells are treated by a convolution.
///
/// `Partial` is not a materialized fill: it is zero fill plus per-position
/// re-weighting, and is only meaningful inside the convolution kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PadMode {
    Zero,
    Reflect,
    Replicate,
    Partial,
}

impl fmt::Display for PadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PadMode::Zero => write!(f, "zero"),
            PadMode::Reflect => write!(f, "reflect"),
            PadMode::Replicate => write!(f, "replicate"),
            PadMode::Partial => write!(f, "partial"),
        }
    }
}

impl FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PadMode::Zero),
            "reflect" => Ok(PadMode::Reflect),
            "replicate" => Ok(PadMode::Replicate),
            "partial" => Ok(PadMode::Partial),
            other => Err(Error::InvalidArgument(format!(
                "unknown pad mode `{other}` (expected zero|reflect|replicate|partial)"
            ))),
        }
    }
}

/// Kernel extents, strides, dilations and symmetric per-side padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvGeometry {
    pub k_h: usize,
    pub k_w: usize,
    pub s_h: usize,
    pub s_w: usize,
    pub d_h: usize,
    pub d_w: usize,
    pub p_h: usize,
    pub p_w: usize,
}

impl ConvGeometry {
    pub fn new(
        (k_h, k_w): (usize, usize),
        (s_h, s_w): (usize, usize),
        (d_h, d_w): (usize, usize),
        (p_h, p_w): (usize, usize),
    ) -> Self {
        ConvGeometry { k_h, k_w, s_h, s_w, d_h, d_w, p_h, p_w }
    }

    /// Square kernel/stride/dilation with symmetric padding.
    pub fn square(k: usize, stride: usize, pad: usize, dilation: usize) -> Self {
        Self::new((k, k), (stride, stride), (dilation, dilation), (pad, pad))
    }

    /// Effective kernel extents under dilation: e = d*(k-1)+1.
    pub fn effective_kernel(&self) -> (usize, usize) {
        (self.d_h * (self.k_h - 1) + 1, self.d_w * (self.k_w - 1) + 1)
    }

    pub fn window_size(&self) -> usize {
        self.k_h * self.k_w
    }

    fn check_positive(&self) -> Result<()> {
        if self.k_h == 0 || self.k_w == 0 || self.s_h == 0 || self.s_w == 0 || self.d_h == 0
            || self.d_w == 0
        {
            return Err(Error::InvalidGeometry(format!(
                "kernel/stride/dilation must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Output extents for an H x W input: floor((H + 2p - e)/s) + 1.
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.check_positive()?;
        let (e_h, e_w) = self.effective_kernel();
        let span_h = h + 2 * self.p_h;
        let span_w = w + 2 * self.p_w;
        if span_h < e_h || span_w < e_w {
            return Err(Error::InvalidGeometry(format!(
                "effective kernel {e_h}x{e_w} exceeds padded input {span_h}x{span_w}"
            )));
        }
        Ok(((span_h - e_h) / self.s_h + 1, (span_w - e_w) / self.s_w + 1))
    }

    /// Full validity check for an input extent, including the reflect
    /// constraint p <= extent-1.
    pub fn validate(&self, h: usize, w: usize, mode: PadMode) -> Result<()> {
        self.out_dims(h, w)?;
        if mode == PadMode::Reflect && (self.p_h > h - 1 || self.p_w > w - 1) {
            return Err(Error::InvalidGeometry(format!(
                "reflect padding ({}, {}) exceeds extent-1 for {h}x{w} input",
                self.p_h, self.p_w
            )));
        }
        Ok(())
    }
}
