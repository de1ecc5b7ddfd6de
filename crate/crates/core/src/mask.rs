//! Single-channel binary validity masks and the mask-update chain used when
//! padding is wider than the kernel reach.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::ConvGeometry;
use crate::tensor::{DType, Tensor};

/// Binary validity map, stored as a 1x1xHxW float64 tensor with values in
/// {0, 1}. A 1 marks original (valid) data, a 0 marks hole/padded cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    tensor: Tensor,
}

impl Mask {
    pub fn all_ones(h: usize, w: usize) -> Result<Self> {
        Ok(Mask { tensor: Tensor::ones(&[1, 1, h, w], DType::F64)? })
    }

    pub fn all_zeros(h: usize, w: usize) -> Result<Self> {
        Ok(Mask { tensor: Tensor::zeros(&[1, 1, h, w], DType::F64)? })
    }

    /// Validate an existing tensor as a mask: 1x1xHxW, f64, binary values.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let (n, c, _, _) = tensor.dim4()?;
        if n != 1 || c != 1 {
            return Err(Error::ShapeMismatch(format!(
                "mask must be 1x1xHxW, got {:?}",
                tensor.dims()
            )));
        }
        let vals = tensor.f64s().map_err(|_| {
            Error::DtypeMismatch(String::from("mask must be float64"))
        })?;
        if let Some(v) = vals.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!("mask value {v} is not binary")));
        }
        Ok(Mask { tensor })
    }

    pub fn from_bits(h: usize, w: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != h * w {
            return Err(Error::LengthMismatch { expected: h * w, got: bits.len() });
        }
        let data: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Ok(Mask { tensor: Tensor::from_f64(&[1, 1, h, w], data)? })
    }

    pub fn h(&self) -> usize {
        self.tensor.dims()[2]
    }

    pub fn w(&self) -> usize {
        self.tensor.dims()[3]
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values()[y * self.w() + x] != 0.0
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.f64s().expect("mask storage is f64 by construction")
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn count_ones(&self) -> usize {
        self.values().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn is_all_ones(&self) -> bool {
        self.values().iter().all(|&v| v == 1.0)
    }

    pub fn is_all_zeros(&self) -> bool {
        self.values().iter().all(|&v| v == 0.0)
    }
}

/// One partial-convolution mask update: the output cell is valid wherever
/// the (dilated, strided) window over the zero-padded mask touches at least
/// one valid cell.
pub fn update_mask(mask: &Mask, geom: &ConvGeometry) -> Result<Mask> {
    let (h, w) = (mask.h(), mask.w());
    let (h_out, w_out) = geom.out_dims(h, w)?;
    let vals = mask.values();
    let mut out = vec![0.0f64; h_out * w_out];
    for i in 0..h_out {
        for j in 0..w_out {
            'window: for u in 0..geom.k_h {
                let py = i * geom.s_h + u * geom.d_h;
                let sy = py as isize - geom.p_h as isize;
                if sy < 0 || sy as usize >= h {
                    continue;
                }
                for v in 0..geom.k_w {
                    let px = j * geom.s_w + v * geom.d_w;
                    let sx = px as isize - geom.p_w as isize;
                    if sx < 0 || sx as usize >= w {
                        continue;
                    }
                    if vals[sy as usize * w + sx as usize] != 0.0 {
                        out[i * w_out + j] = 1.0;
                        break 'window;
                    }
                }
            }
        }
    }
    Ok(Mask { tensor: Tensor::from_f64(&[1, 1, h_out, w_out], out)? })
}

/// Input masks and saturation point of a layer chain.
#[derive(Debug, Clone)]
pub struct MaskChain {
    /// Input mask of each layer, in order.
    pub layer_inputs: Vec<Mask>,
    /// Output mask of the final layer.
    pub final_output: Mask,
    /// 1-based index of the first layer whose output mask is all ones, if
    /// the chain saturates at all.
    pub saturation_layer: Option<usize>,
}

/// Propagate a validity mask through successive layers: each layer's input
/// mask is the previous layer's updated output, and the update itself
/// applies the layer's padding. Starts from all-ones (a fresh image) unless
/// an initial mask is supplied.
pub fn chain_masks(
    layers: &[ConvGeometry],
    h: usize,
    w: usize,
    initial: Option<&Mask>,
) -> Result<MaskChain> {
    if layers.is_empty() {
        return Err(Error::NonComposableChain(String::from("empty layer list")));
    }
    let mut current = match initial {
        Some(m) => {
            if m.h() != h || m.w() != w {
                return Err(Error::ShapeMismatch(format!(
                    "initial mask {}x{} does not match input {h}x{w}",
                    m.h(),
                    m.w()
                )));
            }
            m.clone()
        }
        None => Mask::all_ones(h, w)?,
    };
    let mut layer_inputs = Vec::with_capacity(layers.len());
    let mut saturation_layer = None;
    for (idx, geom) in layers.iter().enumerate() {
        layer_inputs.push(current.clone());
        let updated = update_mask(&current, geom).map_err(|e| {
            Error::NonComposableChain(format!("layer {}: {e}", idx + 1))
        })?;
        if saturation_layer.is_none() && updated.is_all_ones() {
            saturation_layer = Some(idx + 1);
        }
        current = updated;
    }
    Ok(MaskChain { layer_inputs, final_output: current, saturation_layer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_mask_big_padding_ring() {
        // 2x2 valid region, p=3, k=3: 6x6 output with a zero outer ring.
        let mask = Mask::all_ones(2, 2).unwrap();
        let geom = ConvGeometry::square(3, 1, 3, 1);
        let out = update_mask(&mask, &geom).unwrap();
        assert_eq!((out.h(), out.w()), (6, 6));
        for i in 0..6 {
            for j in 0..6 {
                let on_ring = i == 0 || i == 5 || j == 0 || j == 5;
                assert_eq!(out.get(i, j), !on_ring, "({i},{j})");
            }
        }
    }

    #[test]
    fn small_padding_keeps_all_ones() {
        let mask = Mask::all_ones(5, 5).unwrap();
        for p in 0..=1 {
            let geom = ConvGeometry::square(3, 1, p, 1);
            assert!(update_mask(&mask, &geom).unwrap().is_all_ones());
        }
    }

    #[test]
    fn all_zero_mask_stays_zero() {
        let mask = Mask::all_zeros(4, 4).unwrap();
        let geom = ConvGeometry::square(3, 1, 2, 1);
        assert!(update_mask(&mask, &geom).unwrap().is_all_zeros());
    }

    #[test]
    fn chain_saturates_immediately_for_small_padding() {
        let layers = [ConvGeometry::square(3, 1, 1, 1)];
        let chain = chain_masks(&layers, 4, 4, None).unwrap();
        assert_eq!(chain.saturation_layer, Some(1));
        assert!(chain.final_output.is_all_ones());
    }

    #[test]
    fn all_zero_start_never_saturates() {
        let zeros = Mask::all_zeros(2, 2).unwrap();
        let layers = [ConvGeometry::square(3, 1, 3, 1), ConvGeometry::square(3, 1, 3, 1)];
        let chain = chain_masks(&layers, 2, 2, Some(&zeros)).unwrap();
        assert_eq!(chain.saturation_layer, None);
        assert!(chain.final_output.is_all_zeros());
    }

    #[test]
    fn binary_validation() {
        let t = Tensor::from_f64(&[1, 1, 1, 2], alloc::vec![0.5, 1.0]).unwrap();
        assert!(matches!(Mask::from_tensor(t), Err(Error::InvalidArgument(_))));
    }
}
