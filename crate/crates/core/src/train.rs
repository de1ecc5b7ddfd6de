//! Deterministic SGD training with momentum and step decay, plus evaluation
//! and pad-mode cross testing.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::geometry::PadMode;
use crate::layers::{softmax_xent_classify, softmax_xent_segment};
use crate::model::{LayerParams, Model, ModelSpec};
use crate::ratio::RatioCache;
use crate::rng;
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs after which the rate is multiplied by `decay_factor`
    /// (1-based, strictly increasing).
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(String::from(
                "epochs and batch_size must be positive",
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay factor {} outside (0, 1]",
                self.decay_factor
            )));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(String::from(
                "decay epochs must be strictly increasing",
            )));
        }
        Ok(())
    }

    /// Learning rate used during a 1-based epoch: decays apply after the
    /// listed epoch completes.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&d| epoch > d).count();
        let mut lr = self.lr;
        for _ in 0..decays {
            lr *= self.decay_factor;
        }
        lr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Class predictions from [N, K] logits.
pub fn argmax_classify(logits: &Tensor) -> Result<Vec<usize>> {
    let dims = logits.dims();
    if dims.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected [N, K] logits, got {dims:?}")));
    }
    let (n, k) = (dims[0], dims[1]);
    let mut out = Vec::with_capacity(n);
    for nb in 0..n {
        let row: Vec<f64> = (0..k).map(|c| logits.value_f64(nb * k + c)).collect();
        out.push(argmax_row(&row));
    }
    Ok(out)
}

/// Per-pixel label map (u8, [N, H, W]) from [N, K, H, W] logits. Ties pick
/// the lowest class index.
pub fn argmax_segment(logits: &Tensor) -> Result<Tensor> {
    let (n, k, h, w) = logits.dim4()?;
    let plane = h * w;
    let mut out = Vec::with_capacity(n * plane);
    for nb in 0..n {
        for px in 0..plane {
            let mut best = 0usize;
            let mut best_v = logits.value_f64((nb * k) * plane + px);
            for c in 1..k {
                let v = logits.value_f64((nb * k + c) * plane + px);
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    Tensor::from_u8(&[n, h, w], out)
}

fn batch_accuracy(logits: &Tensor, targets: &Targets) -> Result<(usize, usize)> {
    match targets {
        Targets::Classes(labels) => {
            let preds = argmax_classify(logits)?;
            let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
            Ok((correct, labels.len()))
        }
        Targets::Maps(maps) => {
            let preds = argmax_segment(logits)?;
            let p = preds.u8s()?;
            let g = maps.u8s()?;
            let correct = p.iter().zip(g).filter(|(a, b)| a == b).count();
            Ok((correct, g.len()))
        }
    }
}

fn batch_loss_grad(logits: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    match targets {
        Targets::Classes(labels) => softmax_xent_classify(logits, labels),
        Targets::Maps(maps) => softmax_xent_segment(logits, maps),
    }
}

/// One SGD-with-momentum update, in the parameter dtype.
fn sgd_step(param: &mut Tensor, velocity: &mut Tensor, grad: &Tensor, lr: f64, momentum: f64) -> Result<()> {
    match param.dtype() {
        DType::F32 => {
            let p = param.f32s()?.to_vec();
            let mut v = velocity.f32s()?.to_vec();
            let g = grad.f32s()?;
            let lr = lr as f32;
            let mu = momentum as f32;
            let mut out = Vec::with_capacity(p.len());
            for i in 0..p.len() {
                v[i] = mu * v[i] + g[i];
                out.push(p[i] - lr * v[i]);
            }
            *velocity = Tensor::from_f32(velocity.dims(), v)?;
            *param = Tensor::from_f32(param.dims(), out)?;
        }
        DType::F64 => {
            let p = param.f64s()?.to_vec();
            let mut v = velocity.f64s()?.to_vec();
            let g = grad.f64s()?;
            let mut out = Vec::with_capacity(p.len());
            for i in 0..p.len() {
                v[i] = momentum * v[i] + g[i];
                out.push(p[i] - lr * v[i]);
            }
            *velocity = Tensor::from_f64(velocity.dims(), v)?;
            *param = Tensor::from_f64(param.dims(), out)?;
        }
        DType::U8 => return Err(Error::UnsupportedDtype(String::from("u8 parameters"))),
    }
    Ok(())
}

/// Train a model on a dataset. Deterministic: the parameter stream comes
/// from the spec seed, the shuffle stream from the config seed.
pub fn train<D: Dataset>(spec: &ModelSpec, data: &D, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let dtype = DType::F32;
    let mut model = Model::init(spec, dtype)?;
    let [c, h, w] = data.input_dims();
    spec.trace_dims(&[cfg.batch_size.min(data.len(Split::Train)), c, h, w])?;

    let mut velocity: Vec<Option<LayerParams>> = model
        .params
        .iter()
        .map(|p| {
            p.as_ref().map(|p| LayerParams {
                weight: Tensor::zeros(p.weight.dims(), dtype).expect("velocity dims"),
                bias: p
                    .bias
                    .as_ref()
                    .map(|b| Tensor::zeros(b.dims(), dtype).expect("velocity dims")),
            })
        })
        .collect();

    let mut cache = RatioCache::new();
    let mut order: Vec<usize> = (0..data.len(Split::Train)).collect();
    let mut shuffle_rng = rng::seeded(cfg.seed);
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut counted = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // any non-finite value mid-training is divergence
            let diverged = |e: Error| match e {
                Error::NonFinite(_) => Error::Diverged { epoch, batch: batch_idx },
                other => other,
            };
            let (x, targets) = data.batch(Split::Train, chunk, dtype)?;
            let acts = model.forward_trace(&x, None, &mut cache).map_err(diverged)?;
            let logits = acts.last().expect("trace non-empty");
            let (c_ok, c_tot) = batch_accuracy(logits, &targets)?;
            correct += c_ok;
            counted += c_tot;
            let (loss, grad) = batch_loss_grad(logits, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = model
                .backward_trace(&acts, grad, None, &mut cache)
                .map_err(diverged)?;
            for (slot, (param, vel)) in grads
                .into_iter()
                .zip(model.params.iter_mut().zip(velocity.iter_mut()))
            {
                if let (Some(g), Some(p), Some(v)) = (slot, param.as_mut(), vel.as_mut()) {
                    sgd_step(&mut p.weight, &mut v.weight, &g.weight, lr, cfg.momentum)
                        .map_err(diverged)?;
                    if let (Some(pb), Some(vb), Some(gb)) =
                        (p.bias.as_mut(), v.bias.as_mut(), g.bias.as_ref())
                    {
                        sgd_step(pb, vb, gb, lr, cfg.momentum).map_err(diverged)?;
                    }
                }
            }
        }
        let val_acc = evaluate(&model, data, Split::Val, None)?;
        metrics.push(EpochMetrics {
            epoch,
            train_acc: correct as f64 / counted as f64,
            val_acc,
            mean_loss: loss_sum / order.len() as f64,
        });
    }

    Ok(TrainResult { model, metrics })
}

/// Accuracy of a model over a split: top-1 for classification, per-pixel
/// for segmentation. Read-only on the model.
pub fn evaluate<D: Dataset>(
    model: &Model,
    data: &D,
    split: Split,
    mode_override: Option<PadMode>,
) -> Result<f64> {
    let n = data.len(split);
    if n == 0 {
        return Err(Error::InvalidArgument(String::from("empty split")));
    }
    let mut cache = RatioCache::new();
    let dtype = model
        .params
        .iter()
        .flatten()
        .next()
        .map(|p| p.weight.dtype())
        .unwrap_or(DType::F32);
    let mut correct = 0usize;
    let mut counted = 0usize;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(32) {
        let (x, targets) = data.batch(split, chunk, dtype)?;
        let logits = model.forward(&x, mode_override, &mut cache)?;
        let (c_ok, c_tot) = batch_accuracy(&logits, &targets)?;
        correct += c_ok;
        counted += c_tot;
    }
    Ok(correct as f64 / counted as f64)
}

/// Evaluate a trained model with a different padding scheme substituted in
/// every conv layer. Parameters are untouched.
pub fn cross_test<D: Dataset>(model: &Model, eval_mode: PadMode, data: &D) -> Result<f64> {
    evaluate(model, data, Split::Val, Some(eval_mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_steps_after_named_epochs() {
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 4,
            lr: 0.1,
            decay_epochs: alloc::vec![3, 6],
            decay_factor: 0.1,
            momentum: 0.9,
            seed: 1,
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.lr_at(3), 0.1);
        assert!((cfg.lr_at(4) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(7) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn decay_epochs_must_increase() {
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 4,
            lr: 0.1,
            decay_epochs: alloc::vec![6, 3],
            decay_factor: 0.1,
            momentum: 0.9,
            seed: 1,
        };
        assert!(cfg.validate().is_err());
    }
}
