//! Brute-force reference implementations for the test suites.
//!
//! Everything here recomputes results from first principles (coordinate
//! arithmetic on the unpadded input, scalar loops, explicit tap
//! enumeration) and must stay independent of the main kernels. Only
//! compiled with the `oracle` feature; never used by production code.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{ConvGeometry, PadMode};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// Value of the virtually padded input at padded coordinates, by coordinate
/// arithmetic (no materialized pad).
fn padded_value(
    x: &[f64],
    h: usize,
    w: usize,
    plane: usize,
    py: isize,
    px: isize,
    p_h: usize,
    p_w: usize,
    mode: PadMode,
) -> f64 {
    let map = |rel: isize, extent: usize| -> Option<usize> {
        if rel >= 0 && (rel as usize) < extent {
            return Some(rel as usize);
        }
        match mode {
            PadMode::Zero | PadMode::Partial => None,
            PadMode::Replicate => Some(if rel < 0 { 0 } else { extent - 1 }),
            PadMode::Reflect => {
                let idx = if rel < 0 { -rel } else { 2 * (extent as isize - 1) - rel };
                Some(idx as usize)
            }
        }
    };
    let sy = map(py - p_h as isize, h);
    let sx = map(px - p_w as isize, w);
    match (sy, sx) {
        (Some(sy), Some(sx)) => x[plane * h * w + sy * w + sx],
        _ => 0.0,
    }
}

/// Count of window taps landing on valid mask cells (zero-padded view) and
/// the one-padded window sum, at one output position.
pub fn tap_counts(
    geom: &ConvGeometry,
    h: usize,
    w: usize,
    mask: Option<&Mask>,
    i: usize,
    j: usize,
) -> (u32, u32) {
    let mut den = 0u32;
    let mut num = 0u32;
    for u in 0..geom.k_h {
        for v in 0..geom.k_w {
            let sy = (i * geom.s_h + u * geom.d_h) as isize - geom.p_h as isize;
            let sx = (j * geom.s_w + v * geom.d_w) as isize - geom.p_w as isize;
            let inside = sy >= 0 && (sy as usize) < h && sx >= 0 && (sx as usize) < w;
            if inside {
                let valid = mask
                    .map(|m| m.get(sy as usize, sx as usize))
                    .unwrap_or(true);
                if valid {
                    den += 1;
                    num += 1;
                }
            } else {
                // padding taps read 1 from the one-padded mask
                num += 1;
            }
        }
    }
    (num, den)
}

/// Brute-force ratio values: Some(num/den) per output position or None
/// where no tap is valid.
pub fn ratio_by_tap_count(
    geom: &ConvGeometry,
    h: usize,
    w: usize,
    mask: Option<&Mask>,
) -> Vec<Vec<Option<f64>>> {
    let (h_out, w_out) = geom.out_dims(h, w).expect("valid geometry");
    (0..h_out)
        .map(|i| {
            (0..w_out)
                .map(|j| {
                    let (num, den) = tap_counts(geom, h, w, mask, i, j);
                    if den == 0 {
                        None
                    } else {
                        Some(num as f64 / den as f64)
                    }
                })
                .collect()
        })
        .collect()
}

/// Naive six-nested-loop convolution reference over f64 tensors, covering
/// all four padding modes (partial takes an optional mask).
pub fn naive_conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    geom: &ConvGeometry,
    mode: PadMode,
    mask: Option<&Mask>,
) -> Tensor {
    let (n, c_in, h, w) = x.dim4().expect("4-D input");
    let (c_out, _, k_h, k_w) = weight.dim4().expect("4-D weight");
    let (h_out, w_out) = geom.out_dims(h, w).expect("valid geometry");
    let xs = x.f64s().expect("f64 input");
    let ws = weight.f64s().expect("f64 weight");
    let bs = bias.map(|b| b.f64s().expect("f64 bias"));

    // hole cells contribute zero under partial padding
    let masked: Vec<f64> = match (mode, mask) {
        (PadMode::Partial, Some(m)) => {
            let mut out = xs.to_vec();
            for plane in 0..n * c_in {
                for y in 0..h {
                    for xcol in 0..w {
                        if !m.get(y, xcol) {
                            out[plane * h * w + y * w + xcol] = 0.0;
                        }
                    }
                }
            }
            out
        }
        _ => xs.to_vec(),
    };

    let inner_mode = if mode == PadMode::Partial { PadMode::Zero } else { mode };
    let mut out = vec![0.0f64; n * c_out * h_out * w_out];
    for nb in 0..n {
        for co in 0..c_out {
            for i in 0..h_out {
                for j in 0..w_out {
                    let mut acc = 0.0f64;
                    for ci in 0..c_in {
                        for u in 0..k_h {
                            for v in 0..k_w {
                                let py = (i * geom.s_h + u * geom.d_h) as isize;
                                let px = (j * geom.s_w + v * geom.d_w) as isize;
                                let xv = padded_value(
                                    &masked,
                                    h,
                                    w,
                                    nb * c_in + ci,
                                    py,
                                    px,
                                    geom.p_h,
                                    geom.p_w,
                                    inner_mode,
                                );
                                let wv = ws[((co * c_in + ci) * k_h + u) * k_w + v];
                                acc += wv * xv;
                            }
                        }
                    }
                    let slot = ((nb * c_out + co) * h_out + i) * w_out + j;
                    out[slot] = match mode {
                        PadMode::Partial => {
                            let (num, den) = tap_counts(geom, h, w, mask, i, j);
                            if den == 0 {
                                0.0
                            } else {
                                acc * (num as f64) / (den as f64)
                                    + bs.map(|b| b[co]).unwrap_or(0.0)
                            }
                        }
                        _ => acc + bs.map(|b| b[co]).unwrap_or(0.0),
                    };
                }
            }
        }
    }
    Tensor::from_f64(&[n, c_out, h_out, w_out], out).expect("finite oracle output")
}

/// Brute-force mask update: true wherever any window tap lands on a valid
/// cell.
pub fn mask_update_sim(mask: &[Vec<bool>], geom: &ConvGeometry) -> Vec<Vec<bool>> {
    let h = mask.len();
    let w = mask[0].len();
    let (h_out, w_out) = geom.out_dims(h, w).expect("valid geometry");
    (0..h_out)
        .map(|i| {
            (0..w_out)
                .map(|j| {
                    (0..geom.k_h).any(|u| {
                        (0..geom.k_w).any(|v| {
                            let sy = (i * geom.s_h + u * geom.d_h) as isize - geom.p_h as isize;
                            let sx = (j * geom.s_w + v * geom.d_w) as isize - geom.p_w as isize;
                            sy >= 0
                                && (sy as usize) < h
                                && sx >= 0
                                && (sx as usize) < w
                                && mask[sy as usize][sx as usize]
                        })
                    })
                })
                .collect()
        })
        .collect()
}

/// Layer-by-layer chain simulation; returns every layer's input mask, the
/// final output, and the first 1-based layer whose output is all ones.
pub fn chain_sim(
    layers: &[ConvGeometry],
    initial: Vec<Vec<bool>>,
) -> (Vec<Vec<Vec<bool>>>, Vec<Vec<bool>>, Option<usize>) {
    let mut inputs = Vec::new();
    let mut current = initial;
    let mut saturation = None;
    for (idx, geom) in layers.iter().enumerate() {
        inputs.push(current.clone());
        current = mask_update_sim(&current, geom);
        if saturation.is_none() && current.iter().all(|row| row.iter().all(|&b| b)) {
            saturation = Some(idx + 1);
        }
    }
    (inputs, current, saturation)
}

/// Scalar per-pixel mean IoU oracle over raw label slices.
pub fn scalar_miou(
    pred: &[u8],
    gt: &[u8],
    ignore: Option<&[bool]>,
    k: usize,
) -> Option<f64> {
    let mut tp = vec![0u64; k];
    let mut fp = vec![0u64; k];
    let mut fn_ = vec![0u64; k];
    let mut any = false;
    for i in 0..pred.len() {
        if ignore.map(|m| m[i]).unwrap_or(false) {
            continue;
        }
        any = true;
        let (p, g) = (pred[i] as usize, gt[i] as usize);
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    if !any {
        return None;
    }
    let mut sum = 0.0;
    let mut cnt = 0usize;
    for c in 0..k {
        let denom = tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += tp[c] as f64 / denom as f64;
            cnt += 1;
        }
    }
    if cnt == 0 {
        None
    } else {
        Some(sum / cnt as f64)
    }
}
