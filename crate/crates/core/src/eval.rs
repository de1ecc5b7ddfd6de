//! Segmentation evaluation: full-image or tiled prediction over a dataset
//! and the center leave-out sweep comparing two padding schemes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{Dataset, Split, Target};
use crate::error::{Error, Result};
use crate::geometry::PadMode;
use crate::metrics::{center_leaveout_mask, ConfusionMatrix};
use crate::model::Model;
use crate::ratio::RatioCache;
use crate::tensor::{DType, Tensor};
use crate::tile::{make_tile_plan, tiled_infer, StitchRule};
use crate::train::argmax_segment;

/// Tiling options for evaluation; `None` elsewhere means full-image
/// inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileEvalOptions {
    pub tile: usize,
    pub overlap: f64,
    pub rule: StitchRule,
}

/// Predicted and ground-truth label maps ([H, W] u8) for every item of a
/// split.
pub fn predict_labels<D: Dataset>(
    model: &Model,
    data: &D,
    split: Split,
    tiling: Option<&TileEvalOptions>,
    mode_override: Option<PadMode>,
) -> Result<Vec<(Tensor, Tensor)>> {
    let [c, h, w] = data.input_dims();
    let mut cache = RatioCache::new();
    let plan = tiling
        .map(|t| make_tile_plan(h, w, t.tile, t.overlap))
        .transpose()?;
    let mut out = Vec::with_capacity(data.len(split));
    for idx in 0..data.len(split) {
        let (pixels, target) = data.item(split, idx);
        let gt = match target {
            Target::Map(m) => m,
            Target::Class(_) => {
                return Err(Error::InvalidArgument(String::from(
                    "segmentation evaluation needs per-pixel targets",
                )))
            }
        };
        let image = Tensor::from_f64(&[1, c, h, w], pixels)?.cast(DType::F32)?;
        let scores = match (&plan, tiling) {
            (Some(plan), Some(opts)) => {
                tiled_infer(model, &image, plan, opts.rule, mode_override, &mut cache)?
            }
            _ => model.forward(&image, mode_override, &mut cache)?,
        };
        let pred = argmax_segment(&scores)?.reshape(&[h, w])?;
        out.push((pred, gt));
    }
    Ok(out)
}

/// Dataset-level mean IoU from prediction pairs under one leave-out mask
/// fraction pair.
fn miou_for_fraction(
    pairs: &[(Tensor, Tensor)],
    h: usize,
    w: usize,
    classes: usize,
    frac: (f64, f64),
) -> Result<f64> {
    let ignore = center_leaveout_mask(h, w, frac.0, frac.1)?;
    let mut cm = ConfusionMatrix::new(classes);
    for (pred, gt) in pairs {
        cm.accumulate(pred, gt, Some(&ignore))?;
    }
    cm.mean_iou()
}

/// Mean IoU of one model per leave-out fraction pair.
pub fn miou_sweep<D: Dataset>(
    model: &Model,
    data: &D,
    fractions: &[(f64, f64)],
    tiling: Option<&TileEvalOptions>,
    mode_override: Option<PadMode>,
) -> Result<Vec<(f64, f64, f64)>> {
    let [_, h, w] = data.input_dims();
    let pairs = predict_labels(model, data, Split::Val, tiling, mode_override)?;
    fractions
        .iter()
        .map(|&(fa, fb)| Ok((fa, fb, miou_for_fraction(&pairs, h, w, data.classes(), (fa, fb))?)))
        .collect()
}

/// One row of the leave-out sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction_h: f64,
    pub fraction_w: f64,
    pub miou_zero: f64,
    pub miou_partial: f64,
    pub diff: f64,
}

/// Compare two same-architecture checkpoints (zero-trained vs
/// partial-trained) across center leave-out fractions. Predictions are
/// computed once per model and re-scored per fraction.
pub fn border_eval_sweep<D: Dataset>(
    model_zero: &Model,
    model_partial: &Model,
    data: &D,
    fractions: &[(f64, f64)],
    tiling: Option<&TileEvalOptions>,
) -> Result<Vec<SweepRow>> {
    if !model_zero.spec.same_architecture(&model_partial.spec) {
        return Err(Error::InvalidArgument(String::from(
            "checkpoints have different architectures",
        )));
    }
    let [_, h, w] = data.input_dims();
    let classes = data.classes();
    let zero_pairs = predict_labels(model_zero, data, Split::Val, tiling, None)?;
    let partial_pairs = predict_labels(model_partial, data, Split::Val, tiling, None)?;
    fractions
        .iter()
        .map(|&(fa, fb)| {
            let mz = miou_for_fraction(&zero_pairs, h, w, classes, (fa, fb))?;
            let mp = miou_for_fraction(&partial_pairs, h, w, classes, (fa, fb))?;
            Ok(SweepRow {
                fraction_h: fa,
                fraction_w: fb,
                miou_zero: mz,
                miou_partial: mp,
                diff: mp - mz,
            })
        })
        .collect()
}
