//! Central finite-difference checking of the analytic gradients.
//!
//! Every check builds a scalar objective L = sum(G ⊙ f(inputs)) with a fixed
//! random weighting G, computes analytic gradients via the backward passes,
//! and compares against (L(p+h) - L(p-h)) / 2h per parameter in f64.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::conv::{conv2d_forward, ConvWeights};
use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, PadMode};
use crate::layers;
use crate::mask::Mask;
use crate::rng::{self, ChaCha8Rng};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;

/// Relative error with a unit floor: |a - n| / max(1, |a|, |n|).
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = 1.0f64.max(analytic.abs()).max(numeric.abs());
    (analytic - numeric).abs() / denom
}

/// Max relative error between an analytic gradient and central differences
/// of `f` over the parameter vector.
pub fn max_rel_error<F>(params: &[f64], analytic: &[f64], mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::LengthMismatch { expected: params.len(), got: analytic.len() });
    }
    let mut buf = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        buf[i] = params[i] + h;
        let up = f(&buf)?;
        buf[i] = params[i] - h;
        let down = f(&buf)?;
        buf[i] = params[i];
        let numeric = (up - down) / (2.0 * h);
        let err = rel_err(analytic[i], numeric);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub layer: String,
    pub trials: usize,
    pub max_rel_error: f64,
}

fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::from_f64(dims, rng::uniform_vec(rng, n, lo, hi)).expect("finite random data")
}

/// Weighted sum of all elements: the scalar objective.
fn weighted_sum(out: &Tensor, weights: &[f64]) -> f64 {
    out.f64s()
        .expect("objective tensors are f64")
        .iter()
        .zip(weights)
        .map(|(o, g)| o * g)
        .sum()
}

/// Random geometry that is valid for a random small input.
fn random_conv_case(rng: &mut ChaCha8Rng, mode: PadMode) -> (usize, usize, usize, usize, usize, ConvGeometry) {
    loop {
        let n = 1 + rng::next_below(rng, 2);
        let c_in = 1 + rng::next_below(rng, 3);
        let c_out = 1 + rng::next_below(rng, 3);
        let h = 3 + rng::next_below(rng, 5);
        let w = 3 + rng::next_below(rng, 5);
        let k = [1, 3][rng::next_below(rng, 2)];
        let s = 1 + rng::next_below(rng, 2);
        let d = 1 + rng::next_below(rng, 2);
        let max_p = if mode == PadMode::Reflect { h.min(w) - 1 } else { 3 };
        let p = rng::next_below(rng, max_p.min(k / 2 + 2) + 1);
        let geom = ConvGeometry::square(k, s, p, d);
        if geom.validate(h, w, mode).is_ok() {
            return (n, c_in, c_out, h, w, geom);
        }
    }
}

/// Finite-difference check of the convolution backward for one pad mode.
pub fn check_conv(mode: PadMode, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let (n, c_in, c_out, h, w, geom) = random_conv_case(&mut rng, mode);
        let x = rand_tensor(&mut rng, &[n, c_in, h, w], -1.0, 1.0);
        let wt = rand_tensor(&mut rng, &[c_out, c_in, geom.k_h, geom.k_w], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[c_out], -0.5, 0.5);
        let weights = ConvWeights::new(wt.clone(), Some(b.clone()))?;

        // partial mode alternates between the trivial mask and a random one
        let mask = if mode == PadMode::Partial && trial % 2 == 1 {
            let bits: Vec<bool> = (0..h * w).map(|_| rng::next_unit_f64(&mut rng) > 0.3).collect();
            if bits.iter().any(|&b| b) {
                Some(Mask::from_bits(h, w, &bits)?)
            } else {
                None
            }
        } else {
            None
        };

        let (out, _) = conv2d_forward(&x, &weights, &geom, mode, mask.as_ref())?;
        let g = rng::uniform_vec(&mut rng, out.len(), -1.0, 1.0);
        let grad_out = Tensor::from_f64(out.dims(), g.clone())?;
        let grads = layers::conv2d_backward(&x, &weights, &geom, mode, mask.as_ref(), &grad_out)?;

        // d/dx
        let xe = check_params(
            x.f64s()?,
            grads.grad_x.f64s()?,
            |vals| {
                let xt = Tensor::from_f64(x.dims(), vals.to_vec())?;
                let (out, _) = conv2d_forward(&xt, &weights, &geom, mode, mask.as_ref())?;
                Ok(weighted_sum(&out, &g))
            },
        )?;
        // d/dw
        let we = check_params(
            wt.f64s()?,
            grads.grad_w.f64s()?,
            |vals| {
                let w2 = ConvWeights::new(Tensor::from_f64(wt.dims(), vals.to_vec())?, Some(b.clone()))?;
                let (out, _) = conv2d_forward(&x, &w2, &geom, mode, mask.as_ref())?;
                Ok(weighted_sum(&out, &g))
            },
        )?;
        // d/db
        let be = check_params(
            b.f64s()?,
            grads.grad_b.as_ref().expect("bias requested").f64s()?,
            |vals| {
                let w2 = ConvWeights::new(wt.clone(), Some(Tensor::from_f64(b.dims(), vals.to_vec())?))?;
                let (out, _) = conv2d_forward(&x, &w2, &geom, mode, mask.as_ref())?;
                Ok(weighted_sum(&out, &g))
            },
        )?;
        worst = worst.max(xe).max(we).max(be);
    }
    Ok(GradCheckReport { layer: format!("conv-{mode}"), trials, max_rel_error: worst })
}

fn check_params<F>(params: &[f64], analytic: &[f64], f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    max_rel_error(params, analytic, f, DEFAULT_STEP)
}

pub fn check_dense(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = 1 + rng::next_below(&mut rng, 4);
        let i_dim = 1 + rng::next_below(&mut rng, 7);
        let o_dim = 1 + rng::next_below(&mut rng, 5);
        let x = rand_tensor(&mut rng, &[n, i_dim], -1.0, 1.0);
        let w = rand_tensor(&mut rng, &[o_dim, i_dim], -1.0, 1.0);
        let b = rand_tensor(&mut rng, &[o_dim], -0.5, 0.5);
        let out = layers::dense_forward(&x, &w, &b)?;
        let g = rng::uniform_vec(&mut rng, out.len(), -1.0, 1.0);
        let grad_out = Tensor::from_f64(out.dims(), g.clone())?;
        let (gx, gw, gb) = layers::dense_backward(&x, &w, &grad_out)?;

        let xe = check_params(x.f64s()?, gx.f64s()?, |vals| {
            let xt = Tensor::from_f64(x.dims(), vals.to_vec())?;
            Ok(weighted_sum(&layers::dense_forward(&xt, &w, &b)?, &g))
        })?;
        let we = check_params(w.f64s()?, gw.f64s()?, |vals| {
            let wt = Tensor::from_f64(w.dims(), vals.to_vec())?;
            Ok(weighted_sum(&layers::dense_forward(&x, &wt, &b)?, &g))
        })?;
        let be = check_params(b.f64s()?, gb.f64s()?, |vals| {
            let bt = Tensor::from_f64(b.dims(), vals.to_vec())?;
            Ok(weighted_sum(&layers::dense_forward(&x, &w, &bt)?, &g))
        })?;
        worst = worst.max(xe).max(we).max(be);
    }
    Ok(GradCheckReport { layer: String::from("dense"), trials, max_rel_error: worst })
}

pub fn check_avgpool(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = 1 + rng::next_below(&mut rng, 2);
        let c = 1 + rng::next_below(&mut rng, 3);
        let k = 2 + rng::next_below(&mut rng, 2);
        let s = 1 + rng::next_below(&mut rng, 2);
        let h = k + rng::next_below(&mut rng, 5);
        let w = k + rng::next_below(&mut rng, 5);
        let x = rand_tensor(&mut rng, &[n, c, h, w], -1.0, 1.0);
        let out = layers::avgpool_forward(&x, k, s)?;
        let g = rng::uniform_vec(&mut rng, out.len(), -1.0, 1.0);
        let grad_out = Tensor::from_f64(out.dims(), g.clone())?;
        let gx = layers::avgpool_backward(x.dims(), k, s, &grad_out)?;
        let xe = check_params(x.f64s()?, gx.f64s()?, |vals| {
            let xt = Tensor::from_f64(x.dims(), vals.to_vec())?;
            Ok(weighted_sum(&layers::avgpool_forward(&xt, k, s)?, &g))
        })?;
        worst = worst.max(xe);
    }
    Ok(GradCheckReport { layer: String::from("avgpool"), trials, max_rel_error: worst })
}

/// Relu check; inputs are nudged away from the kink at zero where the
/// subgradient makes finite differences meaningless.
pub fn check_relu(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n: usize = 4 + rng::next_below(&mut rng, 60);
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let v = rng::next_range_f64(&mut rng, -1.0, 1.0);
                let sign = if v < 0.0 { -1.0 } else { 1.0 };
                sign * (0.05 + v.abs())
            })
            .collect();
        let x = Tensor::from_f64(&[n], vals)?;
        let out = layers::relu_forward(&x)?;
        let g = rng::uniform_vec(&mut rng, out.len(), -1.0, 1.0);
        let grad_out = Tensor::from_f64(out.dims(), g.clone())?;
        let gx = layers::relu_backward(&x, &grad_out)?;
        let xe = check_params(x.f64s()?, gx.f64s()?, |vals| {
            let xt = Tensor::from_f64(x.dims(), vals.to_vec())?;
            Ok(weighted_sum(&layers::relu_forward(&xt)?, &g))
        })?;
        worst = worst.max(xe);
    }
    Ok(GradCheckReport { layer: String::from("relu"), trials, max_rel_error: worst })
}

pub fn check_softmax_xent(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = 1 + rng::next_below(&mut rng, 4);
        let k = 2 + rng::next_below(&mut rng, 4);
        let logits = rand_tensor(&mut rng, &[n, k], -2.0, 2.0);
        let labels: Vec<usize> = (0..n).map(|_| rng::next_below(&mut rng, k)).collect();
        let (_, grad) = layers::softmax_xent_classify(&logits, &labels)?;
        let xe = check_params(logits.f64s()?, grad.f64s()?, |vals| {
            let lt = Tensor::from_f64(logits.dims(), vals.to_vec())?;
            Ok(layers::softmax_xent_classify(&lt, &labels)?.0)
        })?;
        worst = worst.max(xe);
    }
    Ok(GradCheckReport { layer: String::from("softmax-xent"), trials, max_rel_error: worst })
}

/// Run the checks named by `layer` ("all" runs everything).
pub fn run(layer: &str, trials: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::new();
    let conv_modes = [PadMode::Zero, PadMode::Reflect, PadMode::Replicate, PadMode::Partial];
    match layer {
        "all" => {
            for mode in conv_modes {
                reports.push(check_conv(mode, trials, seed)?);
            }
            reports.push(check_dense(trials, seed)?);
            reports.push(check_avgpool(trials, seed)?);
            reports.push(check_relu(trials, seed)?);
            reports.push(check_softmax_xent(trials, seed)?);
        }
        "conv-zero" => reports.push(check_conv(PadMode::Zero, trials, seed)?),
        "conv-reflect" => reports.push(check_conv(PadMode::Reflect, trials, seed)?),
        "conv-replicate" => reports.push(check_conv(PadMode::Replicate, trials, seed)?),
        "conv-partial" => reports.push(check_conv(PadMode::Partial, trials, seed)?),
        "dense" => reports.push(check_dense(trials, seed)?),
        "avgpool" => reports.push(check_avgpool(trials, seed)?),
        "relu" => reports.push(check_relu(trials, seed)?),
        "softmax-xent" => reports.push(check_softmax_xent(trials, seed)?),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown layer `{other}` (expected all|conv-zero|conv-reflect|conv-replicate|conv-partial|dense|avgpool|relu|softmax-xent)"
            )))
        }
    }
    Ok(reports)
}
