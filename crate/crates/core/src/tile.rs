//! Square tile plans with configurable overlap, per-tile inference and
//! stitching.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::geometry::PadMode;
use crate::model::Model;
use crate::ratio::RatioCache;
use crate::tensor::{DType, Tensor};

/// How overlapped pixels are combined when stitching tile outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StitchRule {
    /// Mean of the scores from every covering tile.
    Average,
    /// Score from the tile whose center is nearest the pixel (earlier tile
    /// on ties).
    CenterPriority,
}

/// Placement of square tiles over an H x W image. The stride is
/// max(1, round(t * (1 - overlap))) and the last tile per axis is clamped to
/// end exactly at the image edge, so the union always covers the image.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub tile: usize,
    pub overlap: f64,
    pub stride: usize,
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut origins = Vec::new();
    let mut o = 0usize;
    loop {
        let clamped = o.min(extent - tile);
        if origins.last() != Some(&clamped) {
            origins.push(clamped);
        }
        if o + tile >= extent {
            break;
        }
        o += stride;
    }
    origins
}

pub fn make_tile_plan(h: usize, w: usize, tile: usize, overlap: f64) -> Result<TilePlan> {
    if tile == 0 || tile > h.min(w) {
        return Err(Error::InvalidArgument(format!(
            "tile {tile} larger than image {h}x{w}"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("overlap {overlap} outside [0, 1)")));
    }
    let stride = ((tile as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let rows = axis_origins(h, tile, stride);
    let cols = axis_origins(w, tile, stride);
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            origins.push((r, c));
        }
    }
    Ok(TilePlan { tile, overlap, stride, origins })
}

impl TilePlan {
    /// Number of tiles covering each pixel.
    pub fn coverage(&self, h: usize, w: usize) -> Vec<u32> {
        let mut cov = vec![0u32; h * w];
        for &(oy, ox) in &self.origins {
            for y in oy..oy + self.tile {
                for x in ox..ox + self.tile {
                    cov[y * w + x] += 1;
                }
            }
        }
        cov
    }
}

fn slice_tile(image: &Tensor, oy: usize, ox: usize, t: usize) -> Result<Tensor> {
    let (n, c, _h, w) = image.dim4()?;
    debug_assert_eq!(n, 1);
    match image.dtype() {
        DType::F32 => {
            let src = image.f32s()?;
            let mut out = Vec::with_capacity(c * t * t);
            for ch in 0..c {
                let plane = ch * _h * w;
                for y in oy..oy + t {
                    out.extend_from_slice(&src[plane + y * w + ox..plane + y * w + ox + t]);
                }
            }
            Tensor::from_f32(&[1, c, t, t], out)
        }
        DType::F64 => {
            let src = image.f64s()?;
            let mut out = Vec::with_capacity(c * t * t);
            for ch in 0..c {
                let plane = ch * _h * w;
                for y in oy..oy + t {
                    out.extend_from_slice(&src[plane + y * w + ox..plane + y * w + ox + t]);
                }
            }
            Tensor::from_f64(&[1, c, t, t], out)
        }
        DType::U8 => Err(Error::UnsupportedDtype(String::from("u8 tile inference"))),
    }
}

/// Run a shape-preserving model over every tile and stitch per-pixel class
/// scores back to full image extent. Stitching accumulates in f64 in fixed
/// tile order, so results are deterministic and equal-valued overlaps stitch
/// exactly.
pub fn tiled_infer(
    model: &Model,
    image: &Tensor,
    plan: &TilePlan,
    rule: StitchRule,
    mode_override: Option<PadMode>,
    cache: &mut RatioCache,
) -> Result<Tensor> {
    let (n, c, h, w) = image.dim4()?;
    if n != 1 {
        return Err(Error::InvalidArgument(String::from(
            "tiled inference takes one image at a time",
        )));
    }
    let t = plan.tile;
    if t > h.min(w) {
        return Err(Error::InvalidArgument(format!("tile {t} larger than image {h}x{w}")));
    }
    let out_dims = model.spec.trace_dims(&[1, c, t, t])?;
    let out_last = out_dims.last().expect("trace non-empty");
    if out_last.len() != 4 || out_last[2] != t || out_last[3] != t {
        return Err(Error::ShapeMismatch(format!(
            "model is not shape-preserving: tile {t}x{t} maps to {out_last:?}"
        )));
    }
    let k = out_last[1];

    let mut scores = vec![0.0f64; k * h * w];
    let mut weight: Vec<f64> = match rule {
        StitchRule::Average => vec![0.0; h * w],
        StitchRule::CenterPriority => vec![f64::INFINITY; h * w],
    };

    for &(oy, ox) in &plan.origins {
        let tile_in = slice_tile(image, oy, ox, t)?;
        let out = model.forward(&tile_in, mode_override, cache)?;
        let center_y = oy as f64 + (t as f64 - 1.0) / 2.0;
        let center_x = ox as f64 + (t as f64 - 1.0) / 2.0;
        for ty in 0..t {
            let y = oy + ty;
            for tx in 0..t {
                let x = ox + tx;
                let px = y * w + x;
                match rule {
                    StitchRule::Average => {
                        weight[px] += 1.0;
                        for ch in 0..k {
                            scores[ch * h * w + px] +=
                                out.value_f64((ch * t + ty) * t + tx);
                        }
                    }
                    StitchRule::CenterPriority => {
                        let dist = (y as f64 - center_y)
                            .abs()
                            .max((x as f64 - center_x).abs());
                        if dist < weight[px] {
                            weight[px] = dist;
                            for ch in 0..k {
                                scores[ch * h * w + px] =
                                    out.value_f64((ch * t + ty) * t + tx);
                            }
                        }
                    }
                }
            }
        }
    }

    if rule == StitchRule::Average {
        for px in 0..h * w {
            debug_assert!(weight[px] > 0.0, "tile plan must cover every pixel");
            for ch in 0..k {
                scores[ch * h * w + px] /= weight[px];
            }
        }
    }

    let scored = Tensor::from_f64(&[1, k, h, w], scores)?;
    scored.cast(image.dtype())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_tiling_no_overlap() {
        let plan = make_tile_plan(8, 8, 4, 0.0).unwrap();
        assert_eq!(plan.stride, 4);
        assert_eq!(plan.origins, alloc::vec![(0, 0), (0, 4), (4, 0), (4, 4)]);
    }

    #[test]
    fn clamped_final_origin() {
        // 9 wide, tile 6, overlap 1/3: stride 4, origins clamp 4 -> 3
        let plan = make_tile_plan(9, 9, 6, 1.0 / 3.0).unwrap();
        assert_eq!(plan.stride, 4);
        let rows: Vec<usize> = alloc::vec![0, 3];
        assert_eq!(
            plan.origins,
            rows.iter()
                .flat_map(|&r| rows.iter().map(move |&c| (r, c)))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn coverage_is_total() {
        for (h, w, t, f) in [(8, 8, 4, 0.0), (9, 7, 4, 0.25), (24, 24, 12, 0.0), (10, 10, 3, 0.5)] {
            let plan = make_tile_plan(h, w, t, f).unwrap();
            let cov = plan.coverage(h, w);
            assert!(cov.iter().all(|&c| c >= 1), "{h}x{w} t={t} f={f}");
            // last tile ends exactly at the edge
            assert!(plan.origins.iter().any(|&(r, _)| r + t == h));
            assert!(plan.origins.iter().any(|&(_, c)| c + t == w));
        }
    }

    #[test]
    fn tile_larger_than_image_rejected() {
        assert!(matches!(
            make_tile_plan(4, 4, 5, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_tile_plan(8, 8, 4, 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
