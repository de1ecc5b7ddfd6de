//! Forward and backward passes for the toy network zoo: convolution (all
//! padding modes), dense, relu, average pooling, flatten, and
//! softmax-cross-entropy heads for classification and segmentation.
//!
//! The partial-mode backward follows from the forward being an ordinary
//! zero-pad convolution scaled per output position by a constant: the
//! incoming gradient is pre-scaled by the same ratio (zeroed where the
//! window saw no valid cell), and the bias gradient sums the unscaled
//! gradient over valid positions only.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::conv::ConvWeights;
use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, PadMode};
use crate::mask::Mask;
use crate::padding::{pad, pad_source};
use crate::ratio::{compute_ratio_map, RatioCache, RatioMap};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Option<Tensor>,
}

/// Analytic gradients of [`crate::conv2d_forward`] with respect to input,
/// weights and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let ratio = match mode {
        PadMode::Partial => {
            let (_, _, h, wd) = x.dim4()?;
            Some(compute_ratio_map(geom, h, wd, mask)?)
        }
        _ => None,
    };
    conv2d_backward_impl(x, w, geom, mode, mask, grad_out, ratio.as_ref())
}

/// Same as [`conv2d_backward`] but reuses cached ratio maps.
pub fn conv2d_backward_cached(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
    grad_out: &Tensor,
    cache: &mut RatioCache,
) -> Result<ConvGrads> {
    let ratio = match mode {
        PadMode::Partial => {
            let (_, _, h, wd) = x.dim4()?;
            Some(cache.get_or_compute(geom, h, wd, mask)?.clone())
        }
        _ => None,
    };
    conv2d_backward_impl(x, w, geom, mode, mask, grad_out, ratio.as_ref())
}

fn conv2d_backward_impl(
    x: &Tensor,
    w: &ConvWeights,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
    grad_out: &Tensor,
    ratio: Option<&RatioMap>,
) -> Result<ConvGrads> {
    let (n, c_in, h, wd) = x.dim4()?;
    geom.validate(h, wd, mode)?;
    let (h_out, w_out) = geom.out_dims(h, wd)?;
    let c_out = w.c_out();
    if grad_out.dims() != [n, c_out, h_out, w_out] {
        return Err(Error::ShapeMismatch(format!(
            "grad_out dims {:?}, expected [{n}, {c_out}, {h_out}, {w_out}]",
            grad_out.dims()
        )));
    }
    if grad_out.dtype() != x.dtype() {
        return Err(Error::DtypeMismatch(format!(
            "grad_out {} vs input {}",
            grad_out.dtype(),
            x.dtype()
        )));
    }

    // padded forward input, exactly as the forward pass saw it
    let padded = match mode {
        PadMode::Partial => {
            let masked = match mask {
                Some(m) if !m.is_all_ones() => {
                    let mt = m.as_tensor().cast(x.dtype())?;
                    mask_multiply(x, &mt)?
                }
                _ => x.clone(),
            };
            pad(&masked, geom, PadMode::Zero, 0.0)?
        }
        other => pad(x, geom, other, 0.0)?,
    };
    let (_, _, ph_ext, pw_ext) = padded.dim4()?;

    let wants_bias = w.bias.is_some();
    let (grad_x, grad_w, grad_b) = match x.dtype() {
        DType::F32 => {
            let (gx, gw, gb) = backward_kernel::<f32>(
                padded.f32s()?,
                w.weight.f32s()?,
                grad_out.f32s()?,
                ratio,
                mode,
                geom,
                n,
                c_in,
                c_out,
                h,
                wd,
                ph_ext,
                pw_ext,
                h_out,
                w_out,
                wants_bias,
            );
            (
                Tensor::from_f32(&[n, c_in, h, wd], gx)?,
                Tensor::from_f32(&[c_out, c_in, geom.k_h, geom.k_w], gw)?,
                gb.map(|gb| Tensor::from_f32(&[c_out], gb)).transpose()?,
            )
        }
        DType::F64 => {
            let (gx, gw, gb) = backward_kernel::<f64>(
                padded.f64s()?,
                w.weight.f64s()?,
                grad_out.f64s()?,
                ratio,
                mode,
                geom,
                n,
                c_in,
                c_out,
                h,
                wd,
                ph_ext,
                pw_ext,
                h_out,
                w_out,
                wants_bias,
            );
            (
                Tensor::from_f64(&[n, c_in, h, wd], gx)?,
                Tensor::from_f64(&[c_out, c_in, geom.k_h, geom.k_w], gw)?,
                gb.map(|gb| Tensor::from_f64(&[c_out], gb)).transpose()?,
            )
        }
        DType::U8 => {
            return Err(Error::UnsupportedDtype(String::from("u8 conv backward")))
        }
    };

    // the forward multiplied hole cells by 0, so their gradient is 0
    let grad_x = match (mode, mask) {
        (PadMode::Partial, Some(m)) if !m.is_all_ones() => {
            let mt = m.as_tensor().cast(grad_x.dtype())?;
            mask_multiply(&grad_x, &mt)?
        }
        _ => grad_x,
    };

    Ok(ConvGrads { grad_x, grad_w, grad_b })
}

/// Multiply every (batch, channel) plane of `x` by the 1x1xHxW mask plane.
fn mask_multiply(x: &Tensor, mask_plane: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dim4()?;
    let plane = h * w;
    match x.dtype() {
        DType::F32 => {
            let xs = x.f32s()?;
            let ms = mask_plane.f32s()?;
            let mut out = Vec::with_capacity(xs.len());
            for p in 0..n * c {
                let base = p * plane;
                for i in 0..plane {
                    out.push(xs[base + i] * ms[i]);
                }
            }
            Tensor::from_f32(&[n, c, h, w], out)
        }
        DType::F64 => {
            let xs = x.f64s()?;
            let ms = mask_plane.f64s()?;
            let mut out = Vec::with_capacity(xs.len());
            for p in 0..n * c {
                let base = p * plane;
                for i in 0..plane {
                    out.push(xs[base + i] * ms[i]);
                }
            }
            Tensor::from_f64(&[n, c, h, w], out)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 mask multiply"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_kernel<T: Float>(
    xp: &[T],
    wgt: &[T],
    grad_out: &[T],
    ratio: Option<&RatioMap>,
    mode: PadMode,
    geom: &ConvGeometry,
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    ph_ext: usize,
    pw_ext: usize,
    h_out: usize,
    w_out: usize,
    wants_bias: bool,
) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
    let x_plane = ph_ext * pw_ext;
    let w_plane = geom.k_h * geom.k_w;
    let out_plane = h_out * w_out;
    let mut grad_w = vec![T::zero(); c_out * c_in * w_plane];
    let mut grad_xp = vec![T::zero(); n * c_in * x_plane];
    let mut grad_b = if wants_bias { Some(vec![T::zero(); c_out]) } else { None };

    for nb in 0..n {
        let x_base_n = nb * c_in * x_plane;
        for co in 0..c_out {
            let out_base = (nb * c_out + co) * out_plane;
            let w_base_co = co * c_in * w_plane;
            for i in 0..h_out {
                for j in 0..w_out {
                    let idx = i * w_out + j;
                    let g_raw = grad_out[out_base + idx];
                    // scale per output position; invalid positions produced a
                    // constant 0 in the forward, so nothing flows back
                    let (gs, valid) = match ratio {
                        Some(r) => {
                            let (num, den) = r.num_den(idx);
                            if den == 0.0 {
                                (T::zero(), false)
                            } else if num != den {
                                let num_t = T::from(num).expect("ratio fits dtype");
                                let den_t = T::from(den).expect("ratio fits dtype");
                                (g_raw * num_t / den_t, true)
                            } else {
                                (g_raw, true)
                            }
                        }
                        None => (g_raw, true),
                    };
                    if valid {
                        if let Some(gb) = grad_b.as_mut() {
                            gb[co] = gb[co] + g_raw;
                        }
                    } else {
                        continue;
                    }
                    for ci in 0..c_in {
                        let xb = x_base_n + ci * x_plane;
                        let wb = w_base_co + ci * w_plane;
                        for u in 0..geom.k_h {
                            let py = i * geom.s_h + u * geom.d_h;
                            let row = xb + py * pw_ext + j * geom.s_w;
                            let wrow = wb + u * geom.k_w;
                            for v in 0..geom.k_w {
                                let pos = row + v * geom.d_w;
                                grad_w[wrow + v] = grad_w[wrow + v] + gs * xp[pos];
                                grad_xp[pos] = grad_xp[pos] + wgt[wrow + v] * gs;
                            }
                        }
                    }
                }
            }
        }
    }

    // fold the padded-input gradient back through the padding index map;
    // zero-mode pad cells are fill values with no source
    let fold_mode = if mode == PadMode::Partial { PadMode::Zero } else { mode };
    let mut grad_x = vec![T::zero(); n * c_in * h * w];
    for p in 0..n * c_in {
        let src_base = p * x_plane;
        let dst_base = p * h * w;
        for py in 0..ph_ext {
            let sy = match pad_source(fold_mode, py, geom.p_h, h) {
                Some(sy) => sy,
                None => continue,
            };
            for px in 0..pw_ext {
                if let Some(sx) = pad_source(fold_mode, px, geom.p_w, w) {
                    let d = dst_base + sy * w + sx;
                    grad_x[d] = grad_x[d] + grad_xp[src_base + py * pw_ext + px];
                }
            }
        }
    }

    (grad_x, grad_w, grad_b)
}

// ---------------------------------------------------------------------------
// relu

pub fn relu_forward(x: &Tensor) -> Result<Tensor> {
    match x.dtype() {
        DType::F32 => {
            let out: Vec<f32> = x.f32s()?.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            Tensor::from_f32(x.dims(), out)
        }
        DType::F64 => {
            let out: Vec<f64> = x.f64s()?.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            Tensor::from_f64(x.dims(), out)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 relu"))),
    }
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.dims() != grad_out.dims() {
        return Err(Error::ShapeMismatch(format!(
            "relu backward {:?} vs {:?}",
            x.dims(),
            grad_out.dims()
        )));
    }
    match x.dtype() {
        DType::F32 => {
            let out: Vec<f32> = x
                .f32s()?
                .iter()
                .zip(grad_out.f32s()?)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect();
            Tensor::from_f32(x.dims(), out)
        }
        DType::F64 => {
            let out: Vec<f64> = x
                .f64s()?
                .iter()
                .zip(grad_out.f64s()?)
                .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                .collect();
            Tensor::from_f64(x.dims(), out)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 relu"))),
    }
}

// ---------------------------------------------------------------------------
// average pooling (no padding, no dilation)

fn pool_out(h: usize, w: usize, k: usize, s: usize) -> Result<(usize, usize)> {
    ConvGeometry::square(k, s, 0, 1).out_dims(h, w)
}

pub fn avgpool_forward(x: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dim4()?;
    let (h_out, w_out) = pool_out(h, w, k, stride)?;
    match x.dtype() {
        DType::F32 => {
            let out = avgpool_kernel(x.f32s()?, n * c, h, w, k, stride, h_out, w_out);
            Tensor::from_f32(&[n, c, h_out, w_out], out)
        }
        DType::F64 => {
            let out = avgpool_kernel(x.f64s()?, n * c, h, w, k, stride, h_out, w_out);
            Tensor::from_f64(&[n, c, h_out, w_out], out)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 avgpool"))),
    }
}

fn avgpool_kernel<T: Float>(
    xs: &[T],
    planes: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<T> {
    let count = T::from(k * k).expect("window count fits dtype");
    let mut out = vec![T::zero(); planes * h_out * w_out];
    for p in 0..planes {
        let src = p * h * w;
        let dst = p * h_out * w_out;
        for i in 0..h_out {
            for j in 0..w_out {
                let mut acc = T::zero();
                for u in 0..k {
                    let row = src + (i * s + u) * w + j * s;
                    for v in 0..k {
                        acc = acc + xs[row + v];
                    }
                }
                out[dst + i * w_out + j] = acc / count;
            }
        }
    }
    out
}

pub fn avgpool_backward(x_dims: &[usize], k: usize, stride: usize, grad_out: &Tensor) -> Result<Tensor> {
    if x_dims.len() != 4 {
        return Err(Error::ShapeMismatch(String::from("avgpool input must be 4-D")));
    }
    let (n, c, h, w) = (x_dims[0], x_dims[1], x_dims[2], x_dims[3]);
    let (h_out, w_out) = pool_out(h, w, k, stride)?;
    if grad_out.dims() != [n, c, h_out, w_out] {
        return Err(Error::ShapeMismatch(format!(
            "avgpool grad_out dims {:?}, expected [{n}, {c}, {h_out}, {w_out}]",
            grad_out.dims()
        )));
    }
    match grad_out.dtype() {
        DType::F32 => {
            let gx = avgpool_back_kernel(grad_out.f32s()?, n * c, h, w, k, stride, h_out, w_out);
            Tensor::from_f32(x_dims, gx)
        }
        DType::F64 => {
            let gx = avgpool_back_kernel(grad_out.f64s()?, n * c, h, w, k, stride, h_out, w_out);
            Tensor::from_f64(x_dims, gx)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 avgpool"))),
    }
}

fn avgpool_back_kernel<T: Float>(
    gs: &[T],
    planes: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<T> {
    let count = T::from(k * k).expect("window count fits dtype");
    let mut out = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let src = p * h_out * w_out;
        let dst = p * h * w;
        for i in 0..h_out {
            for j in 0..w_out {
                let g = gs[src + i * w_out + j] / count;
                for u in 0..k {
                    let row = dst + (i * s + u) * w + j * s;
                    for v in 0..k {
                        out[row + v] = out[row + v] + g;
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// flatten

pub fn flatten_forward(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dim4()?;
    x.reshape(&[n, c * h * w])
}

pub fn flatten_backward(x_dims: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    grad_out.reshape(x_dims)
}

// ---------------------------------------------------------------------------
// dense

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, i_dim) = match x.dims() {
        [n, i] => (*n, *i),
        other => {
            return Err(Error::ShapeMismatch(format!("dense input must be 2-D, got {other:?}")))
        }
    };
    let (o_dim, wi) = match w.dims() {
        [o, i] => (*o, *i),
        other => {
            return Err(Error::ShapeMismatch(format!("dense weight must be 2-D, got {other:?}")))
        }
    };
    if wi != i_dim || b.dims() != [o_dim] {
        return Err(Error::ShapeMismatch(format!(
            "dense shapes: x {:?}, w {:?}, b {:?}",
            x.dims(),
            w.dims(),
            b.dims()
        )));
    }
    match x.dtype() {
        DType::F32 => {
            let out = dense_kernel(x.f32s()?, w.f32s()?, b.f32s()?, n, i_dim, o_dim);
            let t = Tensor::from_f32(&[n, o_dim], out)?;
            Ok(t)
        }
        DType::F64 => {
            let out = dense_kernel(x.f64s()?, w.f64s()?, b.f64s()?, n, i_dim, o_dim);
            let t = Tensor::from_f64(&[n, o_dim], out)?;
            Ok(t)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 dense"))),
    }
}

fn dense_kernel<T: Float>(xs: &[T], ws: &[T], bs: &[T], n: usize, i_dim: usize, o_dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * o_dim];
    for nb in 0..n {
        let xrow = &xs[nb * i_dim..(nb + 1) * i_dim];
        for o in 0..o_dim {
            let wrow = &ws[o * i_dim..(o + 1) * i_dim];
            let mut acc = T::zero();
            for i in 0..i_dim {
                acc = acc + xrow[i] * wrow[i];
            }
            out[nb * o_dim + o] = acc + bs[o];
        }
    }
    out
}

pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, i_dim) = (x.dims()[0], x.dims()[1]);
    let o_dim = w.dims()[0];
    if grad_out.dims() != [n, o_dim] {
        return Err(Error::ShapeMismatch(format!(
            "dense grad_out dims {:?}, expected [{n}, {o_dim}]",
            grad_out.dims()
        )));
    }
    match x.dtype() {
        DType::F32 => {
            let (gx, gw, gb) = dense_back_kernel(x.f32s()?, w.f32s()?, grad_out.f32s()?, n, i_dim, o_dim);
            Ok((
                Tensor::from_f32(&[n, i_dim], gx)?,
                Tensor::from_f32(&[o_dim, i_dim], gw)?,
                Tensor::from_f32(&[o_dim], gb)?,
            ))
        }
        DType::F64 => {
            let (gx, gw, gb) = dense_back_kernel(x.f64s()?, w.f64s()?, grad_out.f64s()?, n, i_dim, o_dim);
            Ok((
                Tensor::from_f64(&[n, i_dim], gx)?,
                Tensor::from_f64(&[o_dim, i_dim], gw)?,
                Tensor::from_f64(&[o_dim], gb)?,
            ))
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 dense"))),
    }
}

fn dense_back_kernel<T: Float>(
    xs: &[T],
    ws: &[T],
    gs: &[T],
    n: usize,
    i_dim: usize,
    o_dim: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut gx = vec![T::zero(); n * i_dim];
    let mut gw = vec![T::zero(); o_dim * i_dim];
    let mut gb = vec![T::zero(); o_dim];
    for nb in 0..n {
        let xrow = &xs[nb * i_dim..(nb + 1) * i_dim];
        for o in 0..o_dim {
            let g = gs[nb * o_dim + o];
            gb[o] = gb[o] + g;
            let wrow = &ws[o * i_dim..(o + 1) * i_dim];
            for i in 0..i_dim {
                gw[o * i_dim + i] = gw[o * i_dim + i] + g * xrow[i];
                gx[nb * i_dim + i] = gx[nb * i_dim + i] + g * wrow[i];
            }
        }
    }
    (gx, gw, gb)
}

// ---------------------------------------------------------------------------
// softmax cross-entropy

/// Mean softmax cross-entropy over a batch of logits [N, K] with one label
/// per row. Returns (loss, grad wrt logits).
pub fn softmax_xent_classify(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = match logits.dims() {
        [n, k] => (*n, *k),
        other => {
            return Err(Error::ShapeMismatch(format!("logits must be 2-D, got {other:?}")))
        }
    };
    if labels.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    match logits.dtype() {
        DType::F32 => {
            let (loss, grad) = xent_kernel(logits.f32s()?, labels, n, k);
            Ok((loss, Tensor::from_f32(&[n, k], grad)?))
        }
        DType::F64 => {
            let (loss, grad) = xent_kernel(logits.f64s()?, labels, n, k);
            Ok((loss, Tensor::from_f64(&[n, k], grad)?))
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 logits"))),
    }
}

fn xent_kernel<T: Float>(logits: &[T], labels: &[usize], n: usize, k: usize) -> (f64, Vec<T>) {
    let inv_n = T::from(1.0 / n as f64).expect("batch size fits dtype");
    let mut grad = vec![T::zero(); n * k];
    let mut loss = 0.0f64;
    for nb in 0..n {
        let row = &logits[nb * k..(nb + 1) * k];
        let mut m = row[0];
        for &v in row.iter().skip(1) {
            if v > m {
                m = v;
            }
        }
        let mut sum = T::zero();
        for &v in row {
            sum = sum + (v - m).exp();
        }
        let y = labels[nb];
        // ln(sum exp(x - m)) - (x_y - m)
        loss += (sum.ln() - (row[y] - m)).to_f64().unwrap_or(f64::NAN) / n as f64;
        for c in 0..k {
            let p = (row[c] - m).exp() / sum;
            let target = if c == y { T::one() } else { T::zero() };
            grad[nb * k + c] = (p - target) * inv_n;
        }
    }
    (loss, grad)
}

/// Mean per-pixel softmax cross-entropy over [N, K, H, W] logits with u8
/// label maps [N, H, W]. Returns (loss, grad wrt logits).
pub fn softmax_xent_segment(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    let (n, k, h, w) = logits.dim4()?;
    if labels.dims() != [n, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "label dims {:?}, expected [{n}, {h}, {w}]",
            labels.dims()
        )));
    }
    let lab = labels.u8s()?;
    if let Some(&bad) = lab.iter().find(|&&l| (l as usize) >= k) {
        return Err(Error::LabelOutOfRange { label: bad as usize, classes: k });
    }
    match logits.dtype() {
        DType::F32 => {
            let (loss, grad) = seg_xent_kernel(logits.f32s()?, lab, n, k, h, w);
            Ok((loss, Tensor::from_f32(&[n, k, h, w], grad)?))
        }
        DType::F64 => {
            let (loss, grad) = seg_xent_kernel(logits.f64s()?, lab, n, k, h, w);
            Ok((loss, Tensor::from_f64(&[n, k, h, w], grad)?))
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 logits"))),
    }
}

fn seg_xent_kernel<T: Float>(
    logits: &[T],
    labels: &[u8],
    n: usize,
    k: usize,
    h: usize,
    w: usize,
) -> (f64, Vec<T>) {
    let plane = h * w;
    let pixels = n * plane;
    let inv = T::from(1.0 / pixels as f64).expect("pixel count fits dtype");
    let mut grad = vec![T::zero(); n * k * plane];
    let mut loss = 0.0f64;
    for nb in 0..n {
        for px in 0..plane {
            let mut m = logits[(nb * k) * plane + px];
            for c in 1..k {
                let v = logits[(nb * k + c) * plane + px];
                if v > m {
                    m = v;
                }
            }
            let mut sum = T::zero();
            for c in 0..k {
                sum = sum + (logits[(nb * k + c) * plane + px] - m).exp();
            }
            let y = labels[nb * plane + px] as usize;
            let xy = logits[(nb * k + y) * plane + px];
            loss += (sum.ln() - (xy - m)).to_f64().unwrap_or(f64::NAN) / pixels as f64;
            for c in 0..k {
                let p = (logits[(nb * k + c) * plane + px] - m).exp() / sum;
                let target = if c == y { T::one() } else { T::zero() };
                grad[(nb * k + c) * plane + px] = (p - target) * inv;
            }
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DType;

    #[test]
    fn grad_b_counts_positions() {
        // all-ones grad_out on a fully valid output: grad_b = N * H_out * W_out
        let x = Tensor::ones(&[2, 1, 5, 5], DType::F64).unwrap();
        let w = ConvWeights::new(Tensor::ones(&[3, 1, 3, 3], DType::F64).unwrap(), Some(Tensor::zeros(&[3], DType::F64).unwrap())).unwrap();
        let geom = ConvGeometry::square(3, 1, 1, 1);
        let g = Tensor::ones(&[2, 3, 5, 5], DType::F64).unwrap();
        let grads = conv2d_backward(&x, &w, &geom, PadMode::Partial, None, &g).unwrap();
        for &v in grads.grad_b.unwrap().f64s().unwrap() {
            assert_eq!(v, 50.0);
        }
    }

    #[test]
    fn partial_invalid_positions_block_gradient() {
        // p=3 with k=3 on 2x2: ring positions are invalid; a grad_out that is
        // nonzero only there must produce all-zero gradients.
        let x = Tensor::ones(&[1, 1, 2, 2], DType::F64).unwrap();
        let w = ConvWeights::new(Tensor::ones(&[1, 1, 3, 3], DType::F64).unwrap(), None).unwrap();
        let geom = ConvGeometry::square(3, 1, 3, 1);
        let mut g = alloc::vec![0.0f64; 36];
        for j in 0..6 {
            g[j] = 1.0; // top ring row only
        }
        let g = Tensor::from_f64(&[1, 1, 6, 6], g).unwrap();
        let grads = conv2d_backward(&x, &w, &geom, PadMode::Partial, None, &g).unwrap();
        assert!(grads.grad_x.f64s().unwrap().iter().all(|&v| v == 0.0));
        assert!(grads.grad_w.f64s().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn avgpool_roundtrip_shapes() {
        let x = Tensor::ones(&[1, 2, 6, 6], DType::F64).unwrap();
        let y = avgpool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.dims(), &[1, 2, 3, 3]);
        for &v in y.f64s().unwrap() {
            assert_eq!(v, 1.0);
        }
        let gx = avgpool_backward(&[1, 2, 6, 6], 2, 2, &y).unwrap();
        assert_eq!(gx.dims(), &[1, 2, 6, 6]);
        for &v in gx.f64s().unwrap() {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn xent_uniform_logits() {
        let logits = Tensor::zeros(&[2, 4], DType::F64).unwrap();
        let (loss, grad) = softmax_xent_classify(&logits, &[0, 3]).unwrap();
        assert!((loss - (4.0f64).ln()).abs() < 1e-12);
        let g = grad.f64s().unwrap();
        // p = 1/4 everywhere, target rows subtract 1, all scaled by 1/N
        assert!((g[0] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        assert!((g[1] - 0.25 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Tensor::zeros(&[1, 3], DType::F64).unwrap();
        assert!(matches!(
            softmax_xent_classify(&logits, &[3]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }
}
