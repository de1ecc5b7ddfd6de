//! Synthetic border-sensitive datasets.
//!
//! Both generators concentrate class-discriminative content near the image
//! border so that padding quality measurably affects accuracy. Generation is
//! a pure function of (kind, extents, seed, split, index): items are drawn
//! from per-index ChaCha8 substreams, and train/val use disjoint stream
//! ranges.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

const VAL_STREAM_OFFSET: u64 = 1 << 32;

/// Classification label or per-pixel label map.
#[derive(Debug, Clone)]
pub enum Target {
    Class(usize),
    Map(Tensor),
}

/// Anything the trainer can iterate: sized splits of (image, target) pairs.
pub trait Dataset {
    fn len(&self, split: Split) -> usize;
    fn classes(&self) -> usize;
    /// (C, H, W) of one item.
    fn input_dims(&self) -> [usize; 3];
    /// Raw pixels (C*H*W, row-major) plus the target for one item.
    fn item(&self, split: Split, idx: usize) -> (Vec<f64>, Target);

    fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    /// Assemble a batch tensor in the given compute dtype.
    fn batch(&self, split: Split, indices: &[usize], dtype: DType) -> Result<(Tensor, Targets)> {
        let [c, h, w] = self.input_dims();
        let n = indices.len();
        let mut pixels = Vec::with_capacity(n * c * h * w);
        let mut classes = Vec::new();
        let mut maps: Vec<u8> = Vec::new();
        for &idx in indices {
            let (px, target) = self.item(split, idx);
            debug_assert_eq!(px.len(), c * h * w);
            pixels.extend_from_slice(&px);
            match target {
                Target::Class(cls) => classes.push(cls),
                Target::Map(m) => maps.extend_from_slice(m.u8s()?),
            }
        }
        let x = Tensor::from_f64(&[n, c, h, w], pixels)?.cast(dtype)?;
        let targets = if maps.is_empty() {
            Targets::Classes(classes)
        } else {
            Targets::Maps(Tensor::from_u8(&[n, h, w], maps)?)
        };
        Ok((x, targets))
    }
}

#[derive(Debug, Clone)]
pub enum Targets {
    Classes(Vec<usize>),
    Maps(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DatasetKind {
    BorderClassify,
    BorderSegment,
}

/// Parameterized synthetic dataset. `margin` is the border band width that
/// carries the class signal; `noise` the peak-to-peak background amplitude.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetHandle {
    pub kind: DatasetKind,
    pub h: usize,
    pub w: usize,
    pub classes: usize,
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub margin: usize,
    pub noise: f64,
}

impl DatasetHandle {
    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.val_size == 0 {
            return Err(Error::InvalidArgument(String::from("empty split")));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!("noise {} outside [0, 1]", self.noise)));
        }
        if self.margin == 0 || 2 * self.margin >= self.h.min(self.w) {
            return Err(Error::InvalidArgument(format!(
                "margin {} incompatible with {}x{} images",
                self.margin, self.h, self.w
            )));
        }
        match self.kind {
            DatasetKind::BorderClassify => {
                if !(2..=4).contains(&self.classes) {
                    return Err(Error::InvalidArgument(String::from(
                        "border-classify supports 2..=4 classes (one border side each)",
                    )));
                }
            }
            DatasetKind::BorderSegment => {
                if self.classes != 3 {
                    return Err(Error::InvalidArgument(String::from(
                        "border-segment uses exactly 3 classes (background + two patterns)",
                    )));
                }
                if self.h < 3 * (self.margin + 2) || self.w < 3 * (self.margin + 2) {
                    return Err(Error::InvalidArgument(format!(
                        "{}x{} too small for border-segment with margin {}",
                        self.h, self.w, self.margin
                    )));
                }
            }
        }
        Ok(())
    }

    fn item_rng(&self, split: Split, idx: usize) -> ChaCha8Rng {
        let offset = match split {
            Split::Train => 0,
            Split::Val => VAL_STREAM_OFFSET,
        };
        rng::seeded_stream(self.seed, offset + idx as u64)
    }

    fn noise_background(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.h * self.w)
            .map(|_| 0.5 + self.noise * (rng::next_unit_f64(rng) - 0.5))
            .collect()
    }

    /// Band of `margin` pixels along one side: 0 top, 1 right, 2 bottom,
    /// 3 left.
    fn in_band(&self, side: usize, y: usize, x: usize) -> bool {
        match side {
            0 => y < self.margin,
            1 => x >= self.w - self.margin,
            2 => y >= self.h - self.margin,
            3 => x < self.margin,
            _ => false,
        }
    }

    fn classify_item(&self, split: Split, idx: usize) -> (Vec<f64>, Target) {
        let mut rng = self.item_rng(split, idx);
        let label = idx % self.classes;
        let mut img = self.noise_background(&mut rng);
        let base = rng::next_range_f64(&mut rng, 0.74, 0.90);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.in_band(label, y, x) {
                    let jitter = 0.08 * (rng::next_unit_f64(&mut rng) - 0.5);
                    img[y * self.w + x] = base + jitter;
                }
            }
        }
        // dimmer distractor band on another side keeps the discrimination
        // relational rather than a plain brightness threshold
        let distractor_side = (label + 1 + rng::next_below(&mut rng, self.classes - 1)) % self.classes;
        let strength = rng::next_range_f64(&mut rng, 0.35, 0.6);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.in_band(distractor_side, y, x) && !self.in_band(label, y, x) {
                    let jitter = 0.08 * (rng::next_unit_f64(&mut rng) - 0.5);
                    img[y * self.w + x] = 0.5 + strength * (base - 0.5) + jitter;
                }
            }
        }
        (img, Target::Class(label))
    }

    /// Pattern value: class 1 is row stripes, class 2 is a checkerboard.
    fn pattern(class: usize, y: usize, x: usize, phase: usize, bright: f64, dark: f64) -> f64 {
        let on = match class {
            1 => (y + phase) % 2 == 0,
            _ => (y + x + phase) % 2 == 0,
        };
        if on {
            bright
        } else {
            dark
        }
    }

    fn dist_to_border(&self, y: usize, x: usize) -> usize {
        y.min(x).min(self.h - 1 - y).min(self.w - 1 - x)
    }

    fn segment_item(&self, split: Split, idx: usize) -> (Vec<f64>, Target) {
        let mut rng = self.item_rng(split, idx);
        let mut img = self.noise_background(&mut rng);
        let mut labels = vec![0u8; self.h * self.w];

        let ring_class = 1 + rng::next_below(&mut rng, 2);
        let ring_phase = rng::next_below(&mut rng, 2);
        let bright = rng::next_range_f64(&mut rng, 0.68, 0.80);
        let dark = rng::next_range_f64(&mut rng, 0.20, 0.32);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.dist_to_border(y, x) < self.margin {
                    let jitter = 0.06 * (rng::next_unit_f64(&mut rng) - 0.5);
                    img[y * self.w + x] =
                        Self::pattern(ring_class, y, x, ring_phase, bright, dark) + jitter;
                    labels[y * self.w + x] = ring_class as u8;
                }
            }
        }

        // interior patch with its own pattern class, clear of the ring
        let patch_class = 1 + rng::next_below(&mut rng, 2);
        let patch_phase = rng::next_below(&mut rng, 2);
        let buffer = self.margin + 2;
        let max_ph = self.h - 2 * buffer;
        let max_pw = self.w - 2 * buffer;
        let ph = 4.min(max_ph) + rng::next_below(&mut rng, max_ph.saturating_sub(4).max(1));
        let pw = 4.min(max_pw) + rng::next_below(&mut rng, max_pw.saturating_sub(4).max(1));
        let ph = ph.min(max_ph);
        let pw = pw.min(max_pw);
        let y0 = buffer + rng::next_below(&mut rng, max_ph - ph + 1);
        let x0 = buffer + rng::next_below(&mut rng, max_pw - pw + 1);
        for y in y0..y0 + ph {
            for x in x0..x0 + pw {
                let jitter = 0.06 * (rng::next_unit_f64(&mut rng) - 0.5);
                img[y * self.w + x] =
                    Self::pattern(patch_class, y, x, patch_phase, bright, dark) + jitter;
                labels[y * self.w + x] = patch_class as u8;
            }
        }

        let map = Tensor::from_u8(&[self.h, self.w], labels).expect("label map dims");
        (img, Target::Map(map))
    }
}

impl Dataset for DatasetHandle {
    fn len(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_size,
            Split::Val => self.val_size,
        }
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn input_dims(&self) -> [usize; 3] {
        [1, self.h, self.w]
    }

    fn item(&self, split: Split, idx: usize) -> (Vec<f64>, Target) {
        match self.kind {
            DatasetKind::BorderClassify => self.classify_item(split, idx),
            DatasetKind::BorderSegment => self.segment_item(split, idx),
        }
    }
}
