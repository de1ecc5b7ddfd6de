//! Materialized padding for zero (constant fill), reflect and replicate
//! schemes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, PadMode};
use crate::tensor::{DType, Storage, Tensor};

/// Map a padded coordinate back to a source coordinate, or None for cells
/// that take the fill value (zero mode only).
#[inline]
pub(crate) fn pad_source(mode: PadMode, padded: usize, pad: usize, extent: usize) -> Option<usize> {
    let rel = padded as isize - pad as isize;
    if rel >= 0 && (rel as usize) < extent {
        return Some(rel as usize);
    }
    match mode {
        PadMode::Zero | PadMode::Partial => None,
        PadMode::Replicate => Some(if rel < 0 { 0 } else { extent - 1 }),
        PadMode::Reflect => {
            // mirror excluding the border pixel: -1 -> 1, extent -> extent-2
            let idx = if rel < 0 { -rel } else { 2 * (extent as isize - 1) - rel };
            debug_assert!(idx >= 0 && (idx as usize) < extent);
            Some(idx as usize)
        }
    }
}

/// Pad a 4-D tensor symmetrically per the geometry's (p_h, p_w).
///
/// Zero mode writes `fill` into the new cells (fill 0 gives the zero-padded
/// input, fill 1 on a ones mask gives the one-padded mask). Reflect mirrors
/// excluding the border pixel; replicate repeats it. Partial is rejected:
/// it has no materialized form.
pub fn pad(x: &Tensor, geom: &ConvGeometry, mode: PadMode, fill: f64) -> Result<Tensor> {
    if mode == PadMode::Partial {
        return Err(Error::InvalidArgument(String::from(
            "partial padding is not a materialized fill",
        )));
    }
    let (n, c, h, w) = x.dim4()?;
    let (p_h, p_w) = (geom.p_h, geom.p_w);
    if mode == PadMode::Reflect && (p_h > h - 1 || p_w > w - 1) {
        return Err(Error::InvalidGeometry(format!(
            "reflect padding ({p_h}, {p_w}) exceeds extent-1 for {h}x{w} input"
        )));
    }
    if p_h == 0 && p_w == 0 {
        return Ok(x.clone());
    }
    let (ph_ext, pw_ext) = (h + 2 * p_h, w + 2 * p_w);
    let dims = [n, c, ph_ext, pw_ext];

    match x.dtype() {
        DType::F32 => {
            let src = x.f32s()?;
            let out = pad_plane(src, n * c, h, w, p_h, p_w, mode, fill as f32);
            Tensor::from_f32(&dims, out)
        }
        DType::F64 => {
            let src = x.f64s()?;
            let out = pad_plane(src, n * c, h, w, p_h, p_w, mode, fill);
            Tensor::from_f64(&dims, out)
        }
        DType::U8 => {
            if fill < 0.0 || fill > 255.0 || fill.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "fill value {fill} not representable as u8"
                )));
            }
            let src = x.u8s()?;
            let out = pad_plane(src, n * c, h, w, p_h, p_w, mode, fill as u8);
            Tensor::from_u8(&dims, out)
        }
    }
}

fn pad_plane<T: Copy>(
    src: &[T],
    planes: usize,
    h: usize,
    w: usize,
    p_h: usize,
    p_w: usize,
    mode: PadMode,
    fill: T,
) -> Vec<T> {
    let (ph_ext, pw_ext) = (h + 2 * p_h, w + 2 * p_w);
    let mut out = vec![fill; planes * ph_ext * pw_ext];
    for plane in 0..planes {
        let src_base = plane * h * w;
        let dst_base = plane * ph_ext * pw_ext;
        for py in 0..ph_ext {
            let sy = match pad_source(mode, py, p_h, h) {
                Some(sy) => sy,
                None => continue,
            };
            for px in 0..pw_ext {
                if let Some(sx) = pad_source(mode, px, p_w, w) {
                    out[dst_base + py * pw_ext + px] = src[src_base + sy * w + sx];
                }
            }
        }
    }
    out
}

#[allow(dead_code)]
pub(crate) fn storage_name(s: &Storage) -> &'static str {
    match s {
        Storage::F32(_) => "f32",
        Storage::F64(_) => "f64",
        Storage::U8(_) => "u8",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn row(vals: &[f64]) -> Tensor {
        Tensor::from_f64(&[1, 1, 1, vals.len()], vals.to_vec()).unwrap()
    }

    fn pad_row(x: &Tensor, p: usize, mode: PadMode, fill: f64) -> Vec<f64> {
        let geom = ConvGeometry::new((1, 1), (1, 1), (1, 1), (0, p));
        pad(x, &geom, mode, fill).unwrap().f64s().unwrap().to_vec()
    }

    #[test]
    fn zero_pad_row() {
        assert_eq!(
            pad_row(&row(&[1.0, 2.0, 3.0]), 1, PadMode::Zero, 0.0),
            vec![0.0, 1.0, 2.0, 3.0, 0.0]
        );
    }

    #[test]
    fn reflect_pad_row() {
        assert_eq!(
            pad_row(&row(&[1.0, 2.0, 3.0]), 1, PadMode::Reflect, 0.0),
            vec![2.0, 1.0, 2.0, 3.0, 2.0]
        );
    }

    #[test]
    fn replicate_pad_row() {
        assert_eq!(
            pad_row(&row(&[1.0, 2.0, 3.0]), 2, PadMode::Replicate, 0.0),
            vec![1.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0]
        );
    }

    #[test]
    fn one_fill_for_masks() {
        assert_eq!(
            pad_row(&row(&[1.0, 1.0]), 2, PadMode::Zero, 1.0),
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn zero_padding_identity_when_p0() {
        let x = row(&[4.0, 5.0]);
        let geom = ConvGeometry::square(3, 1, 0, 1);
        for mode in [PadMode::Zero, PadMode::Reflect, PadMode::Replicate] {
            assert!(pad(&x, &geom, mode, 0.0).unwrap().bit_eq(&x));
        }
    }

    #[test]
    fn reflect_too_wide_rejected() {
        let x = row(&[1.0, 2.0, 3.0]);
        let geom = ConvGeometry::new((1, 1), (1, 1), (1, 1), (0, 3));
        assert!(matches!(
            pad(&x, &geom, PadMode::Reflect, 0.0),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn partial_not_materializable() {
        let x = row(&[1.0]);
        let geom = ConvGeometry::square(1, 1, 0, 1);
        assert!(matches!(
            pad(&x, &geom, PadMode::Partial, 0.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
