//! Convolution forward pass for all padding modes.
//!
//! "Convolution" is cross-correlation (no kernel flip), as in every deep
//! learning framework. Zero/reflect/replicate run over the materialized pad.
//! Partial runs over the zero pad and re-weights each output position by
//! the ratio map; positions whose window saw no valid cell produce 0 and
//! receive no bias. The per-element reduction order is fixed (input-channel
//! major, then kernel rows, then kernel columns) so results are bitwise
//! deterministic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, PadMode};
use crate::mask::{update_mask, Mask};
use crate::padding::pad;
use crate::ratio::{compute_ratio_map, RatioCache, RatioMap};
use crate::tensor::{BinOp, DType, Tensor};

/// Filter weights (C_out x C_in x k_h x k_w) plus optional per-channel bias.
#[derive(Debug, Clone)]
pub struct ConvWeights {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl ConvWeights {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        let (c_out, _c_in, _k_h, _k_w) = weight.dim4()?;
        if weight.dtype() == DType::U8 {
            return Err(Error::UnsupportedDtype(String::from("u8 conv weights")));
        }
        if let Some(b) = &bias {
            if b.dims() != [c_out] {
                return Err(Error::ShapeMismatch(format!(
                    "bias dims {:?} do not match {c_out} output channels",
                    b.dims()
                )));
            }
            if b.dtype() != weight.dtype() {
                return Err(Error::DtypeMismatch(format!(
                    "bias {} vs weight {}",
                    b.dtype(),
                    weight.dtype()
                )));
            }
        }
        Ok(ConvWeights { weight, bias })
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.dims()[2], self.weight.dims()[3])
    }
}

fn validate(x: &Tensor, w: &ConvWeights, geom: &ConvGeometry, mode: PadMode) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, wd) = x.dim4()?;
    if x.dtype() == DType::U8 {
        return Err(Error::UnsupportedDtype(String::from("u8 conv input")));
    }
    if x.dtype() != w.weight.dtype() {
        return Err(Error::DtypeMismatch(format!(
            "input {} vs weight {}",
            x.dtype(),
            w.weight.dtype()
        )));
    }
    if c != w.c_in() {
        return Err(Error::ShapeMismatch(format!(
            "input has {c} channels, weight expects {}",
            w.c_in()
        )));
    }
    if w.kernel() != (geom.k_h, geom.k_w) {
        return Err(Error::ShapeMismatch(format!(
            "weight kernel {:?} vs geometry kernel ({}, {})",
            w.kernel(),
            geom.k_h,
            geom.k_w
        )));
    }
    geom.validate(h, wd, mode)?;
    Ok((n, c, h, wd))
}

fn check_mask(mask: Option<&Mask>, mode: PadMode, h: usize, w: usize) -> Result<()> {
    if let Some(m) = mask {
        if mode != PadMode::Partial {
            return Err(Error::InvalidArgument(String::from(
                "validity masks are only meaningful with partial padding",
            )));
        }
        if m.h() != h || m.w() != w {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} does not match input {h}x{w}",
                m.h(),
                m.w()
            )));
        }
    }
    Ok(())
}

/// Zero out hole cells of the input per the mask (broadcast over batch and
/// channels). No-op for all-ones masks.
fn apply_mask(x: &Tensor, mask: &Mask) -> Result<Tensor> {
    if mask.is_all_ones() {
        return Ok(x.clone());
    }
    let (n, c, h, w) = x.dim4()?;
    let mask_t = mask.as_tensor().cast(x.dtype())?;
    // tile the 1x1xHxW mask across N and C
    let plane = h * w;
    match x.dtype() {
        DType::F32 => {
            let mv = mask_t.f32s()?;
            let mut data = Vec::with_capacity(n * c * plane);
            for _ in 0..n * c {
                data.extend_from_slice(mv);
            }
            let tiled = Tensor::from_f32(&[n, c, h, w], data)?;
            x.elementwise(&tiled, BinOp::Mul)
        }
        DType::F64 => {
            let mv = mask_t.f64s()?;
            let mut data = Vec::with_capacity(n * c * plane);
            for _ in 0..n * c {
                data.extend_from_slice(mv);
            }
            let tiled = Tensor::from_f64(&[n, c, h, w], data)?;
            x.elementwise(&tiled, BinOp::Mul)
        }
        DType::U8 => unreachable!("u8 rejected in validate"),
    }
}

/// Cross-correlation over an already padded input. Fixed reduction order:
/// input channel, kernel row, kernel column.
pub(crate) fn xcorr<T: Float>(
    xp: &[T],
    n: usize,
    c_in: usize,
    pw_ext: usize,
    ph_ext: usize,
    wgt: &[T],
    c_out: usize,
    geom: &ConvGeometry,
    h_out: usize,
    w_out: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); n * c_out * h_out * w_out];
    let x_plane = ph_ext * pw_ext;
    let w_plane = geom.k_h * geom.k_w;
    for nb in 0..n {
        let x_base_n = nb * c_in * x_plane;
        let out_base_n = nb * c_out * h_out * w_out;
        for co in 0..c_out {
            let w_base_co = co * c_in * w_plane;
            let out_base = out_base_n + co * h_out * w_out;
            for i in 0..h_out {
                for j in 0..w_out {
                    let mut acc = T::zero();
                    for ci in 0..c_in {
                        let xb = x_base_n + ci * x_plane;
                        let wb = w_base_co + ci * w_plane;
                        for u in 0..geom.k_h {
                            let py = i * geom.s_h + u * geom.d_h;
                            let row = xb + py * pw_ext + j * geom.s_w;
                            let wrow = wb + u * geom.k_w;
                            if geom.d_w == 1 {
                                let ws = &wgt[wrow..wrow + geom.k_w];
                                let xs = &xp[row..row + geom.k_w];
                                for t in 0..geom.k_w {
                                    acc = acc + ws[t] * xs[t];
                                }
                            } else {
                                for v in 0..geom.k_w {
                                    acc = acc + wgt[wrow + v] * xp[row + v * geom.d_w];
                                }
                            }
                        }
                    }
                    out[out_base + i * w_out + j] = acc;
                }
            }
        }
    }
    out
}

/// Scale by the ratio map and add bias in place.
///
/// Positions with num == den are left untouched before the bias (ratio 1
/// applies no arithmetic at all, so the zero-padding special case stays
/// bit-identical). Invalid positions are forced to 0 and get no bias.
fn apply_ratio_bias<T: Float>(
    out: &mut [T],
    ratio: Option<&RatioMap>,
    bias: Option<&[T]>,
    n: usize,
    c_out: usize,
    h_out: usize,
    w_out: usize,
) {
    let plane = h_out * w_out;
    for nb in 0..n {
        for co in 0..c_out {
            let base = (nb * c_out + co) * plane;
            let b = bias.map(|b| b[co]);
            for idx in 0..plane {
                let slot = &mut out[base + idx];
                match ratio {
                    Some(r) => {
                        let (num, den) = r.num_den(idx);
                        if den == 0.0 {
                            *slot = T::zero();
                            continue;
                        }
                        if num != den {
                            let num_t = T::from(num).expect("ratio numerator fits dtype");
                            let den_t = T::from(den).expect("ratio denominator fits dtype");
                            *slot = *slot * num_t / den_t;
                        }
                        if let Some(b) = b {
                            *slot = *slot + b;
                        }
                    }
                    None => {
                        if let Some(b) = b {
                            *slot = *slot + b;
                        }
                    }
                }
            }
        }
    }
}

fn finite_check(out: &Tensor) -> Result<()> {
    let ok = match out.dtype() {
        DType::F32 => out.f32s()?.iter().all(|v| v.is_finite()),
        DType::F64 => out.f64s()?.iter().all(|v| v.is_finite()),
        DType::U8 => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from("convolution output")))
    }
}

fn forward_impl(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
    ratio: Option<&RatioMap>,
) -> Result<(Tensor, Mask)> {
    let (n, c_in, h, wd) = validate(x, w, geom, mode)?;
    check_mask(mask, mode, h, wd)?;
    let (h_out, w_out) = geom.out_dims(h, wd)?;
    if let Some(r) = ratio {
        if r.h_out() != h_out || r.w_out() != w_out {
            return Err(Error::ShapeMismatch(format!(
                "ratio map {}x{} vs output {h_out}x{w_out}",
                r.h_out(),
                r.w_out()
            )));
        }
    }
    debug_assert!(ratio.is_none() || mode == PadMode::Partial);

    let padded = match mode {
        PadMode::Partial => {
            let masked = match mask {
                Some(m) => apply_mask(x, m)?,
                None => x.clone(),
            };
            pad(&masked, geom, PadMode::Zero, 0.0)?
        }
        other => pad(x, geom, other, 0.0)?,
    };
    let (_, _, ph_ext, pw_ext) = padded.dim4()?;
    let c_out = w.c_out();

    let out = match x.dtype() {
        DType::F32 => {
            let mut data = xcorr(
                padded.f32s()?,
                n,
                c_in,
                pw_ext,
                ph_ext,
                w.weight.f32s()?,
                c_out,
                geom,
                h_out,
                w_out,
            );
            let bias = w.bias.as_ref().map(|b| b.f32s()).transpose()?;
            apply_ratio_bias(&mut data, ratio, bias, n, c_out, h_out, w_out);
            Tensor::from_f32(&[n, c_out, h_out, w_out], data)
        }
        DType::F64 => {
            let mut data = xcorr(
                padded.f64s()?,
                n,
                c_in,
                pw_ext,
                ph_ext,
                w.weight.f64s()?,
                c_out,
                geom,
                h_out,
                w_out,
            );
            let bias = w.bias.as_ref().map(|b| b.f64s()).transpose()?;
            apply_ratio_bias(&mut data, ratio, bias, n, c_out, h_out, w_out);
            Tensor::from_f64(&[n, c_out, h_out, w_out], data)
        }
        DType::U8 => unreachable!("u8 rejected in validate"),
    }?;
    finite_check(&out)?;

    let out_mask = match mode {
        PadMode::Partial => {
            let input_mask = match mask {
                Some(m) => m.clone(),
                None => Mask::all_ones(h, wd)?,
            };
            update_mask(&input_mask, geom)?
        }
        _ => Mask::all_ones(h_out, w_out)?,
    };
    Ok((out, out_mask))
}

/// Convolution forward. Returns the output tensor and the updated validity
/// mask (all ones for the materialized padding modes).
pub fn conv2d_forward(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
) -> Result<(Tensor, Mask)> {
    match mode {
        PadMode::Partial => {
            let (_, _, h, wd) = x.dim4()?;
            let ratio = compute_ratio_map(geom, h, wd, mask)?;
            forward_impl(x, w, geom, mode, mask, Some(&ratio))
        }
        _ => forward_impl(x, w, geom, mode, mask, None),
    }
}

/// Same as [`conv2d_forward`] but reuses ratio maps across calls with the
/// same geometry, extents and mask fingerprint.
pub fn conv2d_forward_cached(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
    cache: &mut RatioCache,
) -> Result<(Tensor, Mask)> {
    match mode {
        PadMode::Partial => {
            let (_, _, h, wd) = x.dim4()?;
            let ratio = cache.get_or_compute(geom, h, wd, mask)?.clone();
            forward_impl(x, w, geom, mode, mask, Some(&ratio))
        }
        _ => forward_impl(x, w, geom, mode, mask, None),
    }
}

/// Partial-mode forward with an explicit ratio map. Forcing a uniform ratio
/// of 1 reproduces the zero-padding path bit for bit.
pub fn conv2d_partial_with_ratio(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    ratio: &RatioMap,
    mask: Option<&Mask>,
) -> Result<(Tensor, Mask)> {
    forward_impl(x, w, geom, PadMode::Partial, mask, Some(ratio))
}
