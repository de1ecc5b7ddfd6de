//! Finite-difference gradient checks per layer kind. The acceptance suite
//! runs the full 20-trial sweep; these are faster smoke versions plus the
//! layer-specific edge cases.

use pconv_core::gradcheck;
use pconv_core::{ConvGeometry, ConvWeights, DType, PadMode, Tensor};

#[test]
fn conv_all_modes_within_tolerance() {
    for (mode, seed) in [
        (PadMode::Zero, 101),
        (PadMode::Reflect, 102),
        (PadMode::Replicate, 103),
        (PadMode::Partial, 104),
    ] {
        let report = gradcheck::check_conv(mode, 6, seed).unwrap();
        assert!(
            report.max_rel_error <= 1e-6,
            "{}: {}",
            report.layer,
            report.max_rel_error
        );
    }
}

#[test]
fn dense_within_tight_tolerance() {
    let report = gradcheck::check_dense(8, 201).unwrap();
    assert!(report.max_rel_error <= 1e-8, "{}", report.max_rel_error);
}

#[test]
fn avgpool_within_tolerance() {
    let report = gradcheck::check_avgpool(8, 301).unwrap();
    assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);
}

#[test]
fn relu_with_nudged_inputs() {
    let report = gradcheck::check_relu(8, 401).unwrap();
    assert!(report.max_rel_error <= 1e-8, "{}", report.max_rel_error);
}

#[test]
fn softmax_xent_within_tolerance() {
    let report = gradcheck::check_softmax_xent(8, 501).unwrap();
    assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);
}

#[test]
fn partial_grad_equals_zero_grad_for_interior_grad_out() {
    // grad_out nonzero only at positions whose window is fully interior:
    // ratio is 1 there, so partial and zero gradients coincide.
    let mut r = pconv_core::rng::seeded(77);
    let x = Tensor::from_f64(&[1, 2, 8, 8], pconv_core::rng::uniform_vec(&mut r, 128, -1.0, 1.0)).unwrap();
    let w = ConvWeights::new(
        Tensor::from_f64(&[2, 2, 3, 3], pconv_core::rng::uniform_vec(&mut r, 36, -1.0, 1.0)).unwrap(),
        Some(Tensor::from_f64(&[2], vec![0.1, -0.2]).unwrap()),
    )
    .unwrap();
    let geom = ConvGeometry::square(3, 1, 1, 1);
    let mut g = vec![0.0f64; 2 * 64];
    for plane in 0..2 {
        for i in 1..7 {
            for j in 1..7 {
                g[plane * 64 + i * 8 + j] = pconv_core::rng::next_range_f64(&mut r, -1.0, 1.0);
            }
        }
    }
    let grad_out = Tensor::from_f64(&[1, 2, 8, 8], g).unwrap();
    let gz = pconv_core::layers::conv2d_backward(&x, &w, &geom, PadMode::Zero, None, &grad_out).unwrap();
    let gp =
        pconv_core::layers::conv2d_backward(&x, &w, &geom, PadMode::Partial, None, &grad_out).unwrap();
    for (a, b) in gz.grad_x.f64s().unwrap().iter().zip(gp.grad_x.f64s().unwrap()) {
        assert_eq!(a, b);
    }
    for (a, b) in gz.grad_w.f64s().unwrap().iter().zip(gp.grad_w.f64s().unwrap()) {
        assert_eq!(a, b);
    }
    // bias grads differ only if any invalid position existed; here none do
    for (a, b) in gz
        .grad_b
        .unwrap()
        .f64s()
        .unwrap()
        .iter()
        .zip(gp.grad_b.unwrap().f64s().unwrap())
    {
        assert_eq!(a, b);
    }
}

#[test]
fn gradcheck_runner_covers_layer_names() {
    let reports = gradcheck::run("all", 1, 7).unwrap();
    assert_eq!(reports.len(), 8);
    assert!(gradcheck::run("bogus", 1, 7).is_err());
}

#[test]
fn bias_free_conv_backward() {
    let x = Tensor::ones(&[1, 1, 4, 4], DType::F64).unwrap();
    let w = ConvWeights::new(Tensor::ones(&[1, 1, 3, 3], DType::F64).unwrap(), None).unwrap();
    let geom = ConvGeometry::square(3, 1, 1, 1);
    let g = Tensor::ones(&[1, 1, 4, 4], DType::F64).unwrap();
    let grads = pconv_core::layers::conv2d_backward(&x, &w, &geom, PadMode::Zero, None, &g).unwrap();
    assert!(grads.grad_b.is_none());
    assert_eq!(grads.grad_x.dims(), &[1, 1, 4, 4]);
}
