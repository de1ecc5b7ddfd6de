//! Convolution, ratio and mask-chain behavior against brute-force
//! references.

use pconv_core::oracle;
use pconv_core::rng;
use pconv_core::{
    compute_ratio_map, conv2d_forward, conv2d_partial_with_ratio, ConvGeometry, ConvWeights,
    DType, Mask, PadMode, RatioMap, Tensor,
};

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

fn rand_tensor(rng: &mut rng::ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n: usize = dims.iter().product();
    Tensor::from_f64(dims, rng::uniform_vec(rng, n, -1.0, 1.0)).unwrap()
}

fn random_case(rng: &mut rng::ChaCha8Rng, mode: PadMode) -> (Tensor, ConvWeights, ConvGeometry) {
    loop {
        let n = 1 + rng::next_below(rng, 2);
        let c_in = 1 + rng::next_below(rng, 3);
        let c_out = 1 + rng::next_below(rng, 3);
        let h = 3 + rng::next_below(rng, 6);
        let w = 3 + rng::next_below(rng, 6);
        let k = [1, 3, 5][rng::next_below(rng, 3)];
        let s = 1 + rng::next_below(rng, 2);
        let d = 1 + rng::next_below(rng, 2);
        let p = rng::next_below(rng, 4);
        let geom = ConvGeometry::square(k, s, p, d);
        if geom.validate(h, w, mode).is_err() {
            continue;
        }
        let x = rand_tensor(rng, &[n, c_in, h, w]);
        let wt = rand_tensor(rng, &[c_out, c_in, k, k]);
        let b = rand_tensor(rng, &[c_out]);
        return (x, ConvWeights::new(wt, Some(b)).unwrap(), geom);
    }
}

#[test]
fn forward_matches_naive_reference_all_modes() {
    let mut r = rng::seeded(0xC0FFEE);
    for mode in [PadMode::Zero, PadMode::Reflect, PadMode::Replicate, PadMode::Partial] {
        for trial in 0..25 {
            let (x, w, geom) = random_case(&mut r, mode);
            let (_, _, h, wd) = x.dim4().unwrap();
            let mask = if mode == PadMode::Partial && trial % 2 == 1 {
                let bits: Vec<bool> =
                    (0..h * wd).map(|_| rng::next_unit_f64(&mut r) > 0.25).collect();
                Some(Mask::from_bits(h, wd, &bits).unwrap())
            } else {
                None
            };
            let (out, _) = conv2d_forward(&x, &w, &geom, mode, mask.as_ref()).unwrap();
            let expect =
                oracle::naive_conv2d(&x, &w.weight, w.bias.as_ref(), &geom, mode, mask.as_ref());
            assert_eq!(out.dims(), expect.dims());
            for (a, b) in out.f64s().unwrap().iter().zip(expect.f64s().unwrap()) {
                assert!(rel_diff(*a, *b) <= 1e-12, "mode {mode} trial {trial}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn ratio_map_matches_tap_counting() {
    let mut r = rng::seeded(0xBEEF);
    // geometry samples including the dilated corner case
    let mut cases = vec![
        (ConvGeometry::square(3, 1, 1, 1), 5, 5),
        (ConvGeometry::square(3, 1, 2, 2), 6, 6),
        (ConvGeometry::square(5, 2, 2, 1), 9, 11),
        (ConvGeometry::square(1, 1, 0, 1), 4, 4),
        (ConvGeometry::square(3, 1, 3, 1), 2, 2),
    ];
    for _ in 0..40 {
        let k = [1, 3, 5, 7][rng::next_below(&mut r, 4)];
        let p = rng::next_below(&mut r, k / 2 + 1);
        let d = 1 + rng::next_below(&mut r, 2);
        let h = 1 + rng::next_below(&mut r, 16);
        let w = 1 + rng::next_below(&mut r, 16);
        let geom = ConvGeometry::square(k, 1, p, d);
        if geom.out_dims(h, w).is_ok() {
            cases.push((geom, h, w));
        }
    }
    for (geom, h, w) in cases {
        for with_mask in [false, true] {
            let mask = if with_mask {
                let bits: Vec<bool> =
                    (0..h * w).map(|_| rng::next_unit_f64(&mut r) > 0.3).collect();
                Some(Mask::from_bits(h, w, &bits).unwrap())
            } else {
                None
            };
            let map = compute_ratio_map(&geom, h, w, mask.as_ref()).unwrap();
            let expect = oracle::ratio_by_tap_count(&geom, h, w, mask.as_ref());
            for (i, row) in expect.iter().enumerate() {
                for (j, want) in row.iter().enumerate() {
                    assert_eq!(map.value(i, j), *want, "geom {geom:?} at ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn forcing_unit_ratio_reproduces_zero_padding_bitwise() {
    let mut r = rng::seeded(0xF00D);
    for trial in 0..30 {
        let (x, w, geom) = random_case(&mut r, PadMode::Zero);
        let (x, w) = if trial % 2 == 0 {
            (
                x.cast(DType::F32).unwrap(),
                ConvWeights::new(
                    w.weight.cast(DType::F32).unwrap(),
                    w.bias.as_ref().map(|b| b.cast(DType::F32).unwrap()),
                )
                .unwrap(),
            )
        } else {
            (x, w)
        };
        let (_, _, h, wd) = x.dim4().unwrap();
        let (h_out, w_out) = geom.out_dims(h, wd).unwrap();
        let (zero_out, _) = conv2d_forward(&x, &w, &geom, PadMode::Zero, None).unwrap();
        let unit = RatioMap::uniform(h_out, w_out, 1.0);
        let (forced, _) = conv2d_partial_with_ratio(&x, &w, &geom, &unit, None).unwrap();
        assert!(forced.bit_eq(&zero_out), "trial {trial}");
    }
}

/// All window taps land inside the unpadded input.
fn is_interior(geom: &ConvGeometry, h: usize, w: usize, i: usize, j: usize) -> bool {
    let y0 = i * geom.s_h;
    let x0 = j * geom.s_w;
    let y1 = y0 + (geom.k_h - 1) * geom.d_h;
    let x1 = x0 + (geom.k_w - 1) * geom.d_w;
    y0 >= geom.p_h && x0 >= geom.p_w && y1 < h + geom.p_h && x1 < w + geom.p_w
}

#[test]
fn partial_equals_zero_at_interior_positions() {
    let mut r = rng::seeded(0xAB);
    for trial in 0..30 {
        let (x, w, geom) = random_case(&mut r, PadMode::Zero);
        let (_, _, h, wd) = x.dim4().unwrap();
        let (h_out, w_out) = geom.out_dims(h, wd).unwrap();
        let (zero_out, _) = conv2d_forward(&x, &w, &geom, PadMode::Zero, None).unwrap();
        let (part_out, _) = conv2d_forward(&x, &w, &geom, PadMode::Partial, None).unwrap();
        let (n, c_out, _, _) = zero_out.dim4().unwrap();
        let zs = zero_out.f64s().unwrap();
        let ps = part_out.f64s().unwrap();
        for i in 0..h_out {
            for j in 0..w_out {
                if !is_interior(&geom, h, wd, i, j) {
                    continue;
                }
                for plane in 0..n * c_out {
                    let idx = plane * h_out * w_out + i * w_out + j;
                    assert_eq!(
                        zs[idx].to_bits(),
                        ps[idx].to_bits(),
                        "trial {trial} at ({i},{j})"
                    );
                }
            }
        }
    }
}

#[test]
fn random_7x7_interior_example() {
    // random 2x3x7x7, k=3, p=1: partial equals zero at every interior output
    let mut r = rng::seeded(21);
    let x = rand_tensor(&mut r, &[2, 3, 7, 7]);
    let w = ConvWeights::new(rand_tensor(&mut r, &[2, 3, 3, 3]), None).unwrap();
    let geom = ConvGeometry::square(3, 1, 1, 1);
    let (zero_out, _) = conv2d_forward(&x, &w, &geom, PadMode::Zero, None).unwrap();
    let (part_out, _) = conv2d_forward(&x, &w, &geom, PadMode::Partial, None).unwrap();
    let zs = zero_out.f64s().unwrap();
    let ps = part_out.f64s().unwrap();
    for i in 1..6 {
        for j in 1..6 {
            for plane in 0..4 {
                let idx = plane * 49 + i * 7 + j;
                assert_eq!(zs[idx].to_bits(), ps[idx].to_bits());
            }
        }
    }
}

#[test]
fn constant_inputs_are_preserved_exactly() {
    for c in [1.0f64, 0.5, 0.75, 2.0, 1.25] {
        for k in [1usize, 3, 5, 7] {
            for p in 0..=k / 2 {
                for d in [1usize, 2] {
                    let geom = ConvGeometry::square(k, 1, p, d);
                    for (h, w) in [(9, 9), (12, 7)] {
                        if geom.out_dims(h, w).is_err() {
                            continue;
                        }
                        let x = Tensor::full(&[1, 1, h, w], DType::F64, c).unwrap();
                        let wt = Tensor::ones(&[1, 1, k, k], DType::F64).unwrap();
                        let weights = ConvWeights::new(wt, None).unwrap();
                        let (out, _) =
                            conv2d_forward(&x, &weights, &geom, PadMode::Partial, None).unwrap();
                        let map = compute_ratio_map(&geom, h, w, None).unwrap();
                        let expect = c * (k * k) as f64;
                        for (idx, &v) in out.f64s().unwrap().iter().enumerate() {
                            let (i, j) = (idx / out.dims()[3], idx % out.dims()[3]);
                            if map.is_valid(i, j) {
                                assert_eq!(v, expect, "c={c} k={k} p={p} d={d} at ({i},{j})");
                            }
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn mask_update_and_chains_match_simulator() {
    let mut r = rng::seeded(0x5EED);
    for _ in 0..60 {
        let h = 1 + rng::next_below(&mut r, 8);
        let w = 1 + rng::next_below(&mut r, 8);
        let k = 1 + rng::next_below(&mut r, 5);
        let p = rng::next_below(&mut r, 5);
        let geom = ConvGeometry::square(k, 1, p, 1);
        if geom.out_dims(h, w).is_err() {
            continue;
        }
        let bits: Vec<bool> = (0..h * w).map(|_| rng::next_unit_f64(&mut r) > 0.4).collect();
        let mask = Mask::from_bits(h, w, &bits).unwrap();
        let rows: Vec<Vec<bool>> =
            (0..h).map(|y| (0..w).map(|x| bits[y * w + x]).collect()).collect();
        let updated = pconv_core::update_mask(&mask, &geom).unwrap();
        let expect = oracle::mask_update_sim(&rows, &geom);
        for (i, row) in expect.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                assert_eq!(updated.get(i, j), want, "h={h} w={w} k={k} p={p} ({i},{j})");
            }
        }
    }

    // chains of up to 3 layers against the layer-by-layer simulation
    for _ in 0..40 {
        let h = 2 + rng::next_below(&mut r, 7);
        let w = 2 + rng::next_below(&mut r, 7);
        let n_layers = 1 + rng::next_below(&mut r, 3);
        let mut geoms = Vec::new();
        let (mut ch, mut cw) = (h, w);
        let mut ok = true;
        for _ in 0..n_layers {
            let k = 1 + rng::next_below(&mut r, 5);
            let p = rng::next_below(&mut r, 5);
            let geom = ConvGeometry::square(k, 1, p, 1);
            match geom.out_dims(ch, cw) {
                Ok((nh, nw)) => {
                    geoms.push(geom);
                    ch = nh;
                    cw = nw;
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let bits: Vec<bool> = (0..h * w).map(|_| rng::next_unit_f64(&mut r) > 0.5).collect();
        let initial = Mask::from_bits(h, w, &bits).unwrap();
        let rows: Vec<Vec<bool>> =
            (0..h).map(|y| (0..w).map(|x| bits[y * w + x]).collect()).collect();
        let chain = pconv_core::chain_masks(&geoms, h, w, Some(&initial)).unwrap();
        let (inputs, final_out, saturation) = oracle::chain_sim(&geoms, rows);
        assert_eq!(chain.saturation_layer, saturation);
        assert_eq!(chain.layer_inputs.len(), inputs.len());
        for (mask, sim) in chain.layer_inputs.iter().zip(&inputs) {
            for (i, row) in sim.iter().enumerate() {
                for (j, &want) in row.iter().enumerate() {
                    assert_eq!(mask.get(i, j), want);
                }
            }
        }
        for (i, row) in final_out.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                assert_eq!(chain.final_output.get(i, j), want);
            }
        }
    }
}

#[test]
fn two_layer_big_padding_chain_example() {
    // 2x2 input, two k=3 p=3 layers: layer-1 output mask has a zero ring
    let geoms = [ConvGeometry::square(3, 1, 3, 1), ConvGeometry::square(3, 1, 3, 1)];
    let chain = pconv_core::chain_masks(&geoms, 2, 2, None).unwrap();
    let first_out = &chain.layer_inputs[1];
    assert_eq!((first_out.h(), first_out.w()), (6, 6));
    assert!(!first_out.get(0, 0));
    assert!(first_out.get(1, 1));
    // simulator confirms where the chain saturates
    let rows = vec![vec![true; 2]; 2];
    let (_, _, sim_sat) = oracle::chain_sim(&geoms, rows);
    assert_eq!(chain.saturation_layer, sim_sat);
}
