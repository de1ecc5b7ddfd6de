//! Sequential toy models: layer specs, seeded parameter initialization, and
//! forward/backward execution with activation traces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float as _;

use crate::conv::{conv2d_forward_cached, ConvWeights};
use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, PadMode};
use crate::layers;
use crate::ratio::RatioCache;
use crate::rng;
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum LayerSpec {
    Conv {
        c_in: usize,
        c_out: usize,
        geom: ConvGeometry,
        pad_mode: PadMode,
        bias: bool,
    },
    Relu,
    AvgPool {
        k: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    /// Identical layer up to the training pad mode. Used to compare
    /// architectures across checkpoints.
    pub fn same_architecture(&self, other: &LayerSpec) -> bool {
        match (self, other) {
            (
                LayerSpec::Conv { c_in: a1, c_out: a2, geom: a3, bias: a4, .. },
                LayerSpec::Conv { c_in: b1, c_out: b2, geom: b3, bias: b4, .. },
            ) => a1 == b1 && a2 == b2 && a3 == b3 && a4 == b4,
            (a, b) => a == b,
        }
    }
}

/// Ordered layer list plus the seed and pad mode the model was built with.
/// The pad mode tag is metadata: weights are loadable and runnable under any
/// inference pad mode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
    pub pad_mode: PadMode,
}

impl ModelSpec {
    /// 4-conv classifier for small square images: two conv/relu pairs around
    /// 2x2 average pools, then a dense head.
    pub fn border_classify_cnn(h: usize, w: usize, classes: usize, pad_mode: PadMode, seed: u64) -> Self {
        let conv = |c_in, c_out| LayerSpec::Conv {
            c_in,
            c_out,
            geom: ConvGeometry::square(3, 1, 1, 1),
            pad_mode,
            bias: true,
        };
        let layers = alloc::vec![
            conv(1, 8),
            LayerSpec::Relu,
            conv(8, 8),
            LayerSpec::Relu,
            LayerSpec::AvgPool { k: 2, stride: 2 },
            conv(8, 16),
            LayerSpec::Relu,
            conv(16, 16),
            LayerSpec::Relu,
            LayerSpec::AvgPool { k: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { in_dim: 16 * (h / 4) * (w / 4), out_dim: classes },
        ];
        ModelSpec { layers, seed, pad_mode }
    }

    /// Fully convolutional, shape-preserving segmenter producing per-pixel
    /// class logits.
    pub fn border_segment_fcn(classes: usize, pad_mode: PadMode, seed: u64) -> Self {
        let conv = |c_in, c_out| LayerSpec::Conv {
            c_in,
            c_out,
            geom: ConvGeometry::square(3, 1, 1, 1),
            pad_mode,
            bias: true,
        };
        let layers = alloc::vec![
            conv(1, 8),
            LayerSpec::Relu,
            conv(8, 8),
            LayerSpec::Relu,
            conv(8, 16),
            LayerSpec::Relu,
            conv(16, classes),
        ];
        ModelSpec { layers, seed, pad_mode }
    }

    /// Copy with every conv layer's pad mode (and the tag) replaced.
    pub fn with_pad_mode(&self, mode: PadMode) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { c_in, c_out, geom, bias, .. } => LayerSpec::Conv {
                    c_in: *c_in,
                    c_out: *c_out,
                    geom: *geom,
                    pad_mode: mode,
                    bias: *bias,
                },
                other => other.clone(),
            })
            .collect();
        ModelSpec { layers, seed: self.seed, pad_mode: mode }
    }

    pub fn same_architecture(&self, other: &ModelSpec) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_architecture(b))
    }

    /// Shape-check the chain for a given input, returning every
    /// intermediate dim vector (input of layer i at index i, output last).
    pub fn trace_dims(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut dims = input.to_vec();
        let mut all = alloc::vec![dims.clone()];
        for (idx, layer) in self.layers.iter().enumerate() {
            dims = match layer {
                LayerSpec::Conv { c_in, c_out, geom, pad_mode, .. } => {
                    if dims.len() != 4 || dims[1] != *c_in {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {idx}: conv expects 4-D with {c_in} channels, got {dims:?}"
                        )));
                    }
                    geom.validate(dims[2], dims[3], *pad_mode)?;
                    let (h, w) = geom.out_dims(dims[2], dims[3])?;
                    alloc::vec![dims[0], *c_out, h, w]
                }
                LayerSpec::Relu => dims,
                LayerSpec::AvgPool { k, stride } => {
                    if dims.len() != 4 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {idx}: avgpool expects 4-D, got {dims:?}"
                        )));
                    }
                    let (h, w) = ConvGeometry::square(*k, *stride, 0, 1).out_dims(dims[2], dims[3])?;
                    alloc::vec![dims[0], dims[1], h, w]
                }
                LayerSpec::Flatten => {
                    if dims.len() != 4 {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {idx}: flatten expects 4-D, got {dims:?}"
                        )));
                    }
                    alloc::vec![dims[0], dims[1] * dims[2] * dims[3]]
                }
                LayerSpec::Dense { in_dim, out_dim } => {
                    if dims.len() != 2 || dims[1] != *in_dim {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {idx}: dense expects [N, {in_dim}], got {dims:?}"
                        )));
                    }
                    alloc::vec![dims[0], *out_dim]
                }
            };
            all.push(dims.clone());
        }
        Ok(all)
    }

    /// Receptive-field span of the stacked convolutions, when the chain is
    /// fully convolutional with stride 1 (None otherwise). A span of 2R+1
    /// means an output pixel depends on inputs within Chebyshev radius R.
    pub fn receptive_field_span(&self) -> Option<usize> {
        let mut span = 1usize;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv { geom, .. } => {
                    if geom.s_h != 1 || geom.s_w != 1 {
                        return None;
                    }
                    let (e_h, e_w) = geom.effective_kernel();
                    span += e_h.max(e_w) - 1;
                }
                LayerSpec::Relu => {}
                _ => return None,
            }
        }
        Some(span)
    }
}

/// Per-layer parameter tensors, parallel to the spec's layer list.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<Option<LayerParams>>,
}

/// Kaiming-uniform fan-in bound: sqrt(6 / fan_in).
fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl Model {
    /// Seeded initialization: Kaiming-uniform fan-in weights drawn in layer
    /// order from one ChaCha8 stream, zero biases.
    pub fn init(spec: &ModelSpec, dtype: DType) -> Result<Model> {
        if dtype == DType::U8 {
            return Err(Error::UnsupportedDtype(String::from("u8 model parameters")));
        }
        let mut rng = rng::seeded(spec.seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            params.push(match layer {
                LayerSpec::Conv { c_in, c_out, geom, bias, .. } => {
                    let fan_in = c_in * geom.k_h * geom.k_w;
                    let bound = kaiming_bound(fan_in);
                    let dims = [*c_out, *c_in, geom.k_h, geom.k_w];
                    let n: usize = dims.iter().product();
                    let vals = rng::uniform_vec(&mut rng, n, -bound, bound);
                    let weight = Tensor::from_f64(&dims, vals)?.cast(dtype)?;
                    let bias_t = if *bias {
                        Some(Tensor::zeros(&[*c_out], dtype)?)
                    } else {
                        None
                    };
                    Some(LayerParams { weight, bias: bias_t })
                }
                LayerSpec::Dense { in_dim, out_dim } => {
                    let bound = kaiming_bound(*in_dim);
                    let vals = rng::uniform_vec(&mut rng, in_dim * out_dim, -bound, bound);
                    let weight = Tensor::from_f64(&[*out_dim, *in_dim], vals)?.cast(dtype)?;
                    Some(LayerParams { weight, bias: Some(Tensor::zeros(&[*out_dim], dtype)?) })
                }
                _ => None,
            });
        }
        Ok(Model { spec: spec.clone(), params })
    }

    pub fn from_parts(spec: ModelSpec, params: Vec<Option<LayerParams>>) -> Result<Model> {
        if spec.layers.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers vs {} param slots",
                spec.layers.len(),
                params.len()
            )));
        }
        for (layer, p) in spec.layers.iter().zip(&params) {
            if layer.has_params() != p.is_some() {
                return Err(Error::InvalidArgument(String::from(
                    "param slots do not line up with parameterized layers",
                )));
            }
        }
        Ok(Model { spec, params })
    }

    fn conv_weights(&self, idx: usize) -> Result<ConvWeights> {
        let p = self.params[idx]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("layer {idx} has no params")))?;
        ConvWeights::new(p.weight.clone(), p.bias.clone())
    }

    /// Forward pass returning the input of every layer plus the final
    /// output (length = layers + 1).
    pub fn forward_trace(
        &self,
        x: &Tensor,
        mode_override: Option<PadMode>,
        cache: &mut RatioCache,
    ) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(x.clone());
        let mut cur = x.clone();
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            cur = match layer {
                LayerSpec::Conv { geom, pad_mode, .. } => {
                    let w = self.conv_weights(idx)?;
                    let mode = mode_override.unwrap_or(*pad_mode);
                    let (out, _) = conv2d_forward_cached(&cur, &w, geom, mode, None, cache)?;
                    out
                }
                LayerSpec::Relu => layers::relu_forward(&cur)?,
                LayerSpec::AvgPool { k, stride } => layers::avgpool_forward(&cur, *k, *stride)?,
                LayerSpec::Flatten => layers::flatten_forward(&cur)?,
                LayerSpec::Dense { .. } => {
                    let p = self.params[idx].as_ref().expect("dense has params");
                    layers::dense_forward(&cur, &p.weight, p.bias.as_ref().expect("dense bias"))?
                }
            };
            acts.push(cur.clone());
        }
        Ok(acts)
    }

    pub fn forward(
        &self,
        x: &Tensor,
        mode_override: Option<PadMode>,
        cache: &mut RatioCache,
    ) -> Result<Tensor> {
        Ok(self
            .forward_trace(x, mode_override, cache)?
            .pop()
            .expect("trace contains at least the input"))
    }

    /// Backward pass from a gradient on the final output. Returns per-layer
    /// parameter gradients (parallel to the layer list).
    pub fn backward_trace(
        &self,
        acts: &[Tensor],
        grad_out: Tensor,
        mode_override: Option<PadMode>,
        cache: &mut RatioCache,
    ) -> Result<Vec<Option<LayerParams>>> {
        let mut grads: Vec<Option<LayerParams>> = alloc::vec![None; self.spec.layers.len()];
        let mut g = grad_out;
        for (idx, layer) in self.spec.layers.iter().enumerate().rev() {
            let input = &acts[idx];
            g = match layer {
                LayerSpec::Conv { geom, pad_mode, .. } => {
                    let w = self.conv_weights(idx)?;
                    let mode = mode_override.unwrap_or(*pad_mode);
                    let cg = layers::conv2d_backward_cached(input, &w, geom, mode, None, &g, cache)?;
                    grads[idx] = Some(LayerParams { weight: cg.grad_w, bias: cg.grad_b });
                    cg.grad_x
                }
                LayerSpec::Relu => layers::relu_backward(input, &g)?,
                LayerSpec::AvgPool { k, stride } => {
                    layers::avgpool_backward(input.dims(), *k, *stride, &g)?
                }
                LayerSpec::Flatten => layers::flatten_backward(input.dims(), &g)?,
                LayerSpec::Dense { .. } => {
                    let p = self.params[idx].as_ref().expect("dense has params");
                    let (gx, gw, gb) = layers::dense_backward(input, &p.weight, &g)?;
                    grads[idx] = Some(LayerParams { weight: gw, bias: Some(gb) });
                    gx
                }
            };
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::border_classify_cnn(16, 16, 4, PadMode::Partial, 3);
        let a = Model::init(&spec, DType::F32).unwrap();
        let b = Model::init(&spec, DType::F32).unwrap();
        for (pa, pb) in a.params.iter().zip(&b.params) {
            match (pa, pb) {
                (Some(pa), Some(pb)) => assert!(pa.weight.bit_eq(&pb.weight)),
                (None, None) => {}
                _ => panic!("param layout mismatch"),
            }
        }
    }

    #[test]
    fn classify_shapes_compose() {
        let spec = ModelSpec::border_classify_cnn(16, 16, 4, PadMode::Zero, 1);
        let dims = spec.trace_dims(&[2, 1, 16, 16]).unwrap();
        assert_eq!(dims.last().unwrap(), &[2, 4]);
    }

    #[test]
    fn segment_is_shape_preserving() {
        let spec = ModelSpec::border_segment_fcn(3, PadMode::Partial, 1);
        let dims = spec.trace_dims(&[1, 1, 24, 24]).unwrap();
        assert_eq!(dims.last().unwrap(), &[1, 3, 24, 24]);
        assert_eq!(spec.receptive_field_span(), Some(9));
    }

    #[test]
    fn pad_mode_swap_keeps_architecture() {
        let spec = ModelSpec::border_segment_fcn(3, PadMode::Zero, 1);
        let swapped = spec.with_pad_mode(PadMode::Partial);
        assert!(spec.same_architecture(&swapped));
        assert_ne!(spec, swapped);
    }

    #[test]
    fn forward_runs() {
        let spec = ModelSpec::border_classify_cnn(16, 16, 4, PadMode::Partial, 5);
        let model = Model::init(&spec, DType::F32).unwrap();
        let x = Tensor::zeros(&[2, 1, 16, 16], DType::F32).unwrap();
        let mut cache = RatioCache::new();
        let out = model.forward(&x, None, &mut cache).unwrap();
        assert_eq!(out.dims(), &[2, 4]);
    }
}
