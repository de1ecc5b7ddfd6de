//! Per-output-position re-weighting ratios and their cache.
//!
//! The ratio at output position (i, j) is the window size divided by the
//! number of window taps that land on valid data: numerator = sum of the
//! one-padded mask under the window (k_h*k_w when the mask is all ones),
//! denominator = sum of the zero-padded mask. Positions whose window sees no
//! valid cell at all are flagged invalid.
//!
//! Numerator and denominator are kept separate (both are small exact
//! integers in f64) so the convolution can apply `acc * num / den` instead
//! of a pre-divided factor. That keeps r == 1 positions bit-identical to
//! plain zero padding and constant inputs exactly preserved.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::geometry::{ConvGeometry, PadMode};
use crate::mask::Mask;
use crate::padding::pad;

/// Re-weighting factors for one (geometry, input extent, mask) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMap {
    h_out: usize,
    w_out: usize,
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RatioMap {
    /// A map with constant ratio `r` everywhere (den 1). `uniform(h, w, 1.0)`
    /// makes the partial path reproduce plain zero padding bit-for-bit.
    pub fn uniform(h_out: usize, w_out: usize, r: f64) -> Self {
        RatioMap {
            h_out,
            w_out,
            num: vec![r; h_out * w_out],
            den: vec![1.0; h_out * w_out],
        }
    }

    pub fn h_out(&self) -> usize {
        self.h_out
    }

    pub fn w_out(&self) -> usize {
        self.w_out
    }

    /// Numerator/denominator pair at a flat output index.
    #[inline]
    pub fn num_den(&self, idx: usize) -> (f64, f64) {
        (self.num[idx], self.den[idx])
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.den[i * self.w_out + j] != 0.0
    }

    /// The ratio r at (i, j), or None where the window saw no valid cell.
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.w_out + j;
        if self.den[idx] == 0.0 {
            None
        } else {
            Some(self.num[idx] / self.den[idx])
        }
    }

    pub fn all_valid(&self) -> bool {
        self.den.iter().all(|&d| d != 0.0)
    }

    pub fn bit_eq(&self, other: &RatioMap) -> bool {
        self.h_out == other.h_out
            && self.w_out == other.w_out
            && self
                .num
                .iter()
                .zip(&other.num)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self
                .den
                .iter()
                .zip(&other.den)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Window sum of an already padded single-channel plane: the "convolution
/// with all weights 1 and bias 0" from which both ratio terms are built.
fn ones_conv(padded: &[f64], pw_ext: usize, geom: &ConvGeometry, h_out: usize, w_out: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; h_out * w_out];
    for i in 0..h_out {
        for j in 0..w_out {
            let mut acc = 0.0f64;
            for u in 0..geom.k_h {
                let py = i * geom.s_h + u * geom.d_h;
                for v in 0..geom.k_w {
                    let px = j * geom.s_w + v * geom.d_w;
                    acc += padded[py * pw_ext + px];
                }
            }
            out[i * w_out + j] = acc;
        }
    }
    out
}

/// Compute the ratio map for a geometry over an H x W input.
///
/// `mask = None` means the trivially all-ones mask (the plain padding case),
/// where the numerator shortcut k_h*k_w applies. With an explicit mask the
/// numerator is the window sum of the one-padded mask.
pub fn compute_ratio_map(
    geom: &ConvGeometry,
    h: usize,
    w: usize,
    mask: Option<&Mask>,
) -> Result<RatioMap> {
    let (h_out, w_out) = geom.out_dims(h, w)?;
    if let Some(m) = mask {
        if m.h() != h || m.w() != w {
            return Err(crate::error::Error::ShapeMismatch(alloc::format!(
                "mask {}x{} does not match input {h}x{w}",
                m.h(),
                m.w()
            )));
        }
    }
    let trivially_ones = match mask {
        None => true,
        Some(m) => m.is_all_ones(),
    };
    let base = match mask {
        Some(m) => m.as_tensor().clone(),
        None => Mask::all_ones(h, w)?.as_tensor().clone(),
    };
    let pw_ext = w + 2 * geom.p_w;
    let zero_padded = pad(&base, geom, PadMode::Zero, 0.0)?;
    let den = ones_conv(zero_padded.f64s()?, pw_ext, geom, h_out, w_out);
    let num = if trivially_ones {
        vec![geom.window_size() as f64; h_out * w_out]
    } else {
        let one_padded = pad(&base, geom, PadMode::Zero, 1.0)?;
        ones_conv(one_padded.f64s()?, pw_ext, geom, h_out, w_out)
    };
    // invalid positions carry no defined ratio; zero the numerator so the
    // pair stays canonical for caching
    let num = num
        .into_iter()
        .zip(&den)
        .map(|(n, &d)| if d == 0.0 { 0.0 } else { n })
        .collect();
    Ok(RatioMap { h_out, w_out, num, den })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum MaskFingerprint {
    /// Reserved fingerprint for the trivially all-ones mask.
    AllOnes,
    /// SHA-256 of the mask payload bytes.
    Digest([u8; 32]),
}

pub fn mask_fingerprint(mask: Option<&Mask>) -> MaskFingerprint {
    match mask {
        None => MaskFingerprint::AllOnes,
        Some(m) if m.is_all_ones() => MaskFingerprint::AllOnes,
        Some(m) => {
            let mut hasher = Sha256::new();
            for v in m.values() {
                hasher.update(v.to_le_bytes());
            }
            MaskFingerprint::Digest(hasher.finalize().into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey {
    pub h: usize,
    pub w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub s_h: usize,
    pub s_w: usize,
    pub d_h: usize,
    pub d_w: usize,
    pub p_h: usize,
    pub p_w: usize,
    pub fingerprint: MaskFingerprint,
}

impl CacheKey {
    pub fn new(geom: &ConvGeometry, h: usize, w: usize, mask: Option<&Mask>) -> Self {
        CacheKey {
            h,
            w,
            k_h: geom.k_h,
            k_w: geom.k_w,
            s_h: geom.s_h,
            s_w: geom.s_w,
            d_h: geom.d_h,
            d_w: geom.d_w,
            p_h: geom.p_h,
            p_w: geom.p_w,
            fingerprint: mask_fingerprint(mask),
        }
    }
}

/// Memo table for ratio maps: computed on first use, returned verbatim
/// afterwards as long as geometry, extents and mask fingerprint match.
#[derive(Debug, Default)]
pub struct RatioCache {
    entries: BTreeMap<CacheKey, RatioMap>,
    hits: u64,
    misses: u64,
}

impl RatioCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        geom: &ConvGeometry,
        h: usize,
        w: usize,
        mask: Option<&Mask>,
    ) -> Result<&RatioMap> {
        let key = CacheKey::new(geom, h, w, mask);
        if self.entries.contains_key(&key) {
            self.hits += 1;
        } else {
            let map = compute_ratio_map(geom, h, w, mask)?;
            self.entries.insert(key.clone(), map);
            self.misses += 1;
        }
        Ok(self.entries.get(&key).expect("inserted above"))
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
