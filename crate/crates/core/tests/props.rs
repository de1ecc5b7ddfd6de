//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use pconv_core::oracle;
use pconv_core::{
    compute_ratio_map, pad, update_mask, BinOp, ConvGeometry, DType, Mask, PadMode, Tensor,
};

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 1..=4)
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    dims_strategy().prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        let d1 = dims.clone();
        let d2 = dims.clone();
        let d3 = dims;
        prop_oneof![
            prop::collection::vec(-1.0e3f32..1.0e3, n)
                .prop_map(move |v| Tensor::from_f32(&d1, v).unwrap()),
            prop::collection::vec(-1.0e6f64..1.0e6, n)
                .prop_map(move |v| Tensor::from_f64(&d2, v).unwrap()),
            prop::collection::vec(any::<u8>(), n)
                .prop_map(move |v| Tensor::from_u8(&d3, v).unwrap()),
        ]
    })
}

proptest! {
    #[test]
    fn pten_roundtrip_is_bitwise(t in tensor_strategy()) {
        let back = Tensor::decode(&t.encode()).unwrap();
        prop_assert!(back.bit_eq(&t));
    }

    #[test]
    fn elementwise_matches_scalar_loop(
        dims in dims_strategy(),
        op in prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)],
        seed in any::<u64>(),
    ) {
        let n: usize = dims.iter().product();
        let mut r = pconv_core::rng::seeded(seed);
        let av = pconv_core::rng::uniform_vec(&mut r, n, -100.0, 100.0);
        let bv = pconv_core::rng::uniform_vec(&mut r, n, -100.0, 100.0);
        let a = Tensor::from_f64(&dims, av.clone()).unwrap();
        let b = Tensor::from_f64(&dims, bv.clone()).unwrap();
        let out = a.elementwise(&b, op).unwrap();
        prop_assert_eq!(out.dims(), &dims[..]);
        for i in 0..n {
            let want = match op {
                BinOp::Add => av[i] + bv[i],
                BinOp::Sub => av[i] - bv[i],
                BinOp::Mul => av[i] * bv[i],
                BinOp::Div => unreachable!(),
            };
            // 0 ULP: identical f64 bits
            prop_assert_eq!(out.f64s().unwrap()[i].to_bits(), want.to_bits());
        }
    }

    #[test]
    fn zero_pad_preserves_sum_and_p0_is_identity(
        n in 1usize..3, c in 1usize..3, h in 1usize..7, w in 1usize..7,
        p_h in 0usize..4, p_w in 0usize..4,
        seed in any::<u64>(),
    ) {
        let mut r = pconv_core::rng::seeded(seed);
        let vals = pconv_core::rng::uniform_vec(&mut r, n * c * h * w, -10.0, 10.0);
        let x = Tensor::from_f64(&[n, c, h, w], vals.clone()).unwrap();
        let geom = ConvGeometry::new((1, 1), (1, 1), (1, 1), (p_h, p_w));
        let padded = pad(&x, &geom, PadMode::Zero, 0.0).unwrap();
        let sum_in: f64 = vals.iter().sum();
        let sum_out: f64 = padded.f64s().unwrap().iter().sum();
        prop_assert_eq!(sum_in, sum_out);

        let zero_geom = ConvGeometry::new((1, 1), (1, 1), (1, 1), (0, 0));
        for mode in [PadMode::Zero, PadMode::Reflect, PadMode::Replicate] {
            prop_assert!(pad(&x, &zero_geom, mode, 0.0).unwrap().bit_eq(&x));
        }
    }

    #[test]
    fn replicate_and_reflect_only_reuse_input_values(
        h in 1usize..7, w in 1usize..7,
        p in 0usize..4,
        seed in any::<u64>(),
    ) {
        let mut r = pconv_core::rng::seeded(seed);
        let vals = pconv_core::rng::uniform_vec(&mut r, h * w, -10.0, 10.0);
        let x = Tensor::from_f64(&[1, 1, h, w], vals.clone()).unwrap();
        let inputs: std::collections::BTreeSet<u64> =
            vals.iter().map(|v| v.to_bits()).collect();
        let geom = ConvGeometry::new((1, 1), (1, 1), (1, 1), (p, p));
        for mode in [PadMode::Replicate, PadMode::Reflect] {
            if mode == PadMode::Reflect && (p > h - 1 || p > w - 1) {
                continue;
            }
            let padded = pad(&x, &geom, mode, 0.0).unwrap();
            for v in padded.f64s().unwrap() {
                prop_assert!(inputs.contains(&v.to_bits()));
            }
        }
    }

    #[test]
    fn ratio_values_sit_between_one_and_window_size(
        h in 1usize..10, w in 1usize..10,
        k in 1usize..6, p in 0usize..4, d in 1usize..3,
        mask_bits in prop::collection::vec(any::<bool>(), 100),
        use_mask in any::<bool>(),
    ) {
        let geom = ConvGeometry::square(k, 1, p, d);
        prop_assume!(geom.out_dims(h, w).is_ok());
        let mask = if use_mask {
            Some(Mask::from_bits(h, w, &mask_bits[..h * w]).unwrap())
        } else {
            None
        };
        let map = compute_ratio_map(&geom, h, w, mask.as_ref()).unwrap();
        let window = (k * k) as f64;
        for i in 0..map.h_out() {
            for j in 0..map.w_out() {
                if let Some(rv) = map.value(i, j) {
                    prop_assert!((1.0..=window).contains(&rv), "r = {} at ({}, {})", rv, i, j);
                }
            }
        }
    }

    #[test]
    fn mask_update_is_monotone(
        h in 1usize..8, w in 1usize..8,
        k in 1usize..5, p in 0usize..4,
        bits_small in prop::collection::vec(any::<bool>(), 64),
        grow in prop::collection::vec(any::<bool>(), 64),
    ) {
        let geom = ConvGeometry::square(k, 1, p, 1);
        prop_assume!(geom.out_dims(h, w).is_ok());
        let small: Vec<bool> = bits_small[..h * w].to_vec();
        let big: Vec<bool> = small
            .iter()
            .zip(&grow[..h * w])
            .map(|(&a, &b)| a || b)
            .collect();
        let m_small = Mask::from_bits(h, w, &small).unwrap();
        let m_big = Mask::from_bits(h, w, &big).unwrap();
        let u_small = update_mask(&m_small, &geom).unwrap();
        let u_big = update_mask(&m_big, &geom).unwrap();
        for i in 0..u_small.h() {
            for j in 0..u_small.w() {
                // never lose a valid position when the input mask only grows
                prop_assert!(!u_small.get(i, j) || u_big.get(i, j));
            }
        }
    }

    #[test]
    fn chained_shape_preserving_masks_grow_to_saturation(
        h in 3usize..9, w in 3usize..9,
        bits in prop::collection::vec(any::<bool>(), 81),
    ) {
        prop_assume!(bits[..h * w].iter().any(|&b| b));
        let geom = ConvGeometry::square(3, 1, 1, 1);
        let mut current = Mask::from_bits(h, w, &bits[..h * w]).unwrap();
        let mut prev_count = current.count_ones();
        for _ in 0..h.max(w) {
            let next = update_mask(&current, &geom).unwrap();
            // pointwise non-decreasing
            for i in 0..h {
                for j in 0..w {
                    prop_assert!(!current.get(i, j) || next.get(i, j));
                }
            }
            prop_assert!(next.count_ones() >= prev_count);
            prev_count = next.count_ones();
            current = next;
        }
        prop_assert!(current.is_all_ones());
    }

    #[test]
    fn miou_matches_scalar_oracle(
        h in 1usize..9, w in 1usize..9,
        k in 2usize..5,
        seed in any::<u64>(),
        with_ignore in any::<bool>(),
    ) {
        let mut r = pconv_core::rng::seeded(seed);
        let n = h * w;
        let pred: Vec<u8> = (0..n).map(|_| pconv_core::rng::next_below(&mut r, k) as u8).collect();
        let gt: Vec<u8> = (0..n).map(|_| pconv_core::rng::next_below(&mut r, k) as u8).collect();
        let pred_t = Tensor::from_u8(&[h, w], pred.clone()).unwrap();
        let gt_t = Tensor::from_u8(&[h, w], gt.clone()).unwrap();
        let ignore = if with_ignore {
            Some(pconv_core::metrics::center_leaveout_mask(h, w, 0.5, 0.5).unwrap())
        } else {
            None
        };
        let ignore_bits: Vec<bool> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| ignore.as_ref().map(|m| m.is_ignored(y, x)).unwrap_or(false))
            .collect();
        let got = pconv_core::metrics::miou(&pred_t, &gt_t, ignore.as_ref(), k);
        let want = oracle::scalar_miou(&pred, &gt, Some(&ignore_bits), k);
        match (got, want) {
            (Ok(res), Some(want)) => prop_assert_eq!(res.mean, want),
            (Err(pconv_core::Error::NoEvaluatedPixels), None) => {}
            (g, w) => prop_assert!(false, "mismatch: {:?} vs {:?}", g, w),
        }
    }

    #[test]
    fn leaveout_rounding_matches_enumeration(
        h in 1usize..17, w in 1usize..17,
        num in 0usize..8, den in 1usize..9,
    ) {
        prop_assume!(num < den);
        let frac = num as f64 / den as f64;
        let m = pconv_core::metrics::center_leaveout_mask(h, w, frac, frac).unwrap();
        // enumeration oracle: the unique r with r - 0.5 <= h*frac < r + 0.5
        let expect_h = (0..=h)
            .find(|&rh| rh as f64 - 0.5 <= h as f64 * frac && h as f64 * frac < rh as f64 + 0.5)
            .unwrap();
        let expect_w = (0..=w)
            .find(|&rw| rw as f64 - 0.5 <= w as f64 * frac && w as f64 * frac < rw as f64 + 0.5)
            .unwrap();
        prop_assert_eq!(m.ignored_count(), expect_h * expect_w);
    }

    #[test]
    fn tile_plans_cover_everything(
        h in 1usize..40, w in 1usize..40,
        t in 1usize..17,
        f in prop_oneof![Just(0.0), Just(0.25), Just(1.0 / 3.0), Just(0.5), Just(0.75)],
    ) {
        prop_assume!(t <= h.min(w));
        let plan = pconv_core::tile::make_tile_plan(h, w, t, f).unwrap();
        let cov = plan.coverage(h, w);
        prop_assert!(cov.iter().all(|&c| c >= 1));
    }
}
