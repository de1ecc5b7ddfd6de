//! Segmentation metrics: confusion matrices, per-class and mean IoU,
//! center leave-out ignore masks, and rank correlation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pixels marked true are excluded from metric accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct IgnoreMask {
    h: usize,
    w: usize,
    ignore: Vec<bool>,
}

impl IgnoreMask {
    pub fn none(h: usize, w: usize) -> Self {
        IgnoreMask { h, w, ignore: vec![false; h * w] }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn is_ignored(&self, y: usize, x: usize) -> bool {
        self.ignore[y * self.w + x]
    }

    pub fn ignored_count(&self) -> usize {
        self.ignore.iter().filter(|&&b| b).count()
    }

    pub fn evaluated_count(&self) -> usize {
        self.h * self.w - self.ignored_count()
    }

    /// True when every pixel this mask ignores is also ignored by `other`.
    pub fn subset_of(&self, other: &IgnoreMask) -> bool {
        self.h == other.h
            && self.w == other.w
            && self
                .ignore
                .iter()
                .zip(&other.ignore)
                .all(|(a, b)| !a || *b)
    }
}

/// Centered axis-aligned leave-out rectangle: round-half-up of H*frac_h by
/// W*frac_w pixels, placed by integer midpoint. Fraction 0 ignores nothing.
pub fn center_leaveout_mask(h: usize, w: usize, frac_h: f64, frac_w: f64) -> Result<IgnoreMask> {
    if !(0.0..1.0).contains(&frac_h) || !(0.0..1.0).contains(&frac_w) {
        return Err(Error::InvalidArgument(format!(
            "leave-out fractions ({frac_h}, {frac_w}) outside [0, 1)"
        )));
    }
    let rh = (h as f64 * frac_h + 0.5).floor() as usize;
    let rw = (w as f64 * frac_w + 0.5).floor() as usize;
    let y0 = (h - rh) / 2;
    let x0 = (w - rw) / 2;
    let mut ignore = vec![false; h * w];
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            ignore[y * w + x] = true;
        }
    }
    Ok(IgnoreMask { h, w, ignore })
}

/// K x K confusion counts (row = ground truth, column = prediction) plus the
/// number of ignored pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k], ignored: 0 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn total_counted(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Accumulate one prediction/ground-truth pair of u8 label maps [H, W].
    pub fn accumulate(
        &mut self,
        pred: &Tensor,
        gt: &Tensor,
        ignore: Option<&IgnoreMask>,
    ) -> Result<()> {
        let pdims = pred.dims();
        if pdims.len() != 2 || pdims != gt.dims() {
            return Err(Error::ShapeMismatch(format!(
                "label maps must be matching 2-D, got {:?} vs {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        let (h, w) = (pdims[0], pdims[1]);
        if let Some(m) = ignore {
            if m.h() != h || m.w() != w {
                return Err(Error::ShapeMismatch(format!(
                    "ignore mask {}x{} vs labels {h}x{w}",
                    m.h(),
                    m.w()
                )));
            }
        }
        let p = pred.u8s()?;
        let g = gt.u8s()?;
        for y in 0..h {
            for x in 0..w {
                if ignore.map(|m| m.is_ignored(y, x)).unwrap_or(false) {
                    self.ignored += 1;
                    continue;
                }
                let (pv, gv) = (p[y * w + x] as usize, g[y * w + x] as usize);
                if pv >= self.k {
                    return Err(Error::LabelOutOfRange { label: pv, classes: self.k });
                }
                if gv >= self.k {
                    return Err(Error::LabelOutOfRange { label: gv, classes: self.k });
                }
                self.counts[gv * self.k + pv] += 1;
            }
        }
        Ok(())
    }

    /// Per-class IoU = tp / (tp + fp + fn); None for classes that never
    /// appear in either prediction or ground truth.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let tp = self.count(c, c);
                let fp: u64 = (0..self.k).filter(|&g| g != c).map(|g| self.count(g, c)).sum();
                let fn_: u64 = (0..self.k).filter(|&p| p != c).map(|p| self.count(c, p)).sum();
                let denom = tp + fp + fn_;
                if denom == 0 {
                    None
                } else {
                    Some(tp as f64 / denom as f64)
                }
            })
            .collect()
    }

    /// Mean IoU over classes that appear; errors when nothing was counted.
    pub fn mean_iou(&self) -> Result<f64> {
        if self.total_counted() == 0 {
            return Err(Error::NoEvaluatedPixels);
        }
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return Err(Error::NoEvaluatedPixels);
        }
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct MiouResult {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// Mean IoU of one prediction against ground truth, both u8 [H, W].
pub fn miou(
    pred: &Tensor,
    gt: &Tensor,
    ignore: Option<&IgnoreMask>,
    k: usize,
) -> Result<MiouResult> {
    let mut cm = ConfusionMatrix::new(k);
    cm.accumulate(pred, gt, ignore)?;
    Ok(MiouResult { per_class: cm.per_class_iou(), mean: cm.mean_iou()? })
}

/// Average ranks (ties share the mean rank).
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &idx[i..=j] {
            out[slot] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson over average ranks). Returns 0 when
/// either input has zero rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(alloc::string::String::from(
            "need at least two points",
        )));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
