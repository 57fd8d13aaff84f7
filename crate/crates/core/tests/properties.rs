use nst_core::analysis::stats::sample_std;
use nst_core::analysis::{interpolate_embedding, paired_t_test, percentile};
use nst_core::io::{decode_ppm, encode_ppm, AnyTensor, Checkpoint, RunConfig};
use nst_core::networks::{concat_norm_params, embedding_dim, slice_embedding, StyleEmbedding, TransferNetConfig};
use nst_core::normalization::{conditional_instance_norm, NormParams, NORM_EPS};
use nst_core::ops::{
    conv2d, gram_matrix, reflect_pad, reflect_pad_backward, upsample_nearest, upsample_nearest_backward, Pad4, Padding,
};
use nst_core::training::{augment_style, AugmentConfig};
use nst_core::{DType, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn finite() -> impl Strategy<Value = f64> {
    -1e3f64..1e3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_parse_inverts_serialize(
        seed in any::<u64>(),
        f32p in any::<bool>(),
        ch in prop::array::uniform3(1usize..64),
        blocks in 0usize..6,
        lambda in 1e-6f64..1e6,
        lr in 1e-6f64..1.0,
        budget in 1usize..100_000,
        augment in any::<bool>(),
        hue in 0.0f64..0.5,
        note in "[a-z0-9_]{0,12}",
    ) {
        let cfg = RunConfig {
            seed,
            precision: if f32p { DType::F32 } else { DType::F64 },
            transfer_channels: ch,
            residual_blocks: blocks,
            lambda_s: lambda,
            learning_rate: lr,
            budget,
            augment,
            aug_hue: hue,
            content_corpus: Some("data/photos".into()),
            meta: [("note".to_string(), note)].into_iter().collect(),
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&cfg.serialize()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), cfg.serialize());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(
        shapes in prop::collection::vec(prop::collection::vec(0usize..4, 0..4), 0..5),
        seed in any::<u64>(),
        text in "[ -~]{0,40}",
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors: Vec<(String, AnyTensor)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let t = Tensor::<f64>::randn(s, 0.0, 1e3, &mut rng);
                let any = if i % 2 == 0 { AnyTensor::F64(t) } else { AnyTensor::F32(t.cast()) };
                (format!("t{}", i), any)
            })
            .collect();
        let ck = Checkpoint { config: text, tensors };
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn embedding_slice_concat_round_trip(ch in prop::array::uniform3(1usize..20), blocks in 0usize..4, seed in any::<u64>()) {
        let cfg = TransferNetConfig::standard(ch, blocks);
        let d = embedding_dim(&cfg);
        let e = StyleEmbedding::new(randn(&[d], seed).into_data());
        let parts = slice_embedding(&e, &cfg).unwrap();
        prop_assert_eq!(parts.len(), cfg.normalized_layers().len());
        prop_assert_eq!(concat_norm_params(&parts), e.clone());
        let short = StyleEmbedding::new(e.values[1..].to_vec());
        prop_assert!(slice_embedding(&short, &cfg).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint(seed in any::<u64>(), d in 1usize..50, alpha in 0.0f64..=1.0) {
        let a = StyleEmbedding::new(randn(&[d], seed).into_data());
        let b = StyleEmbedding::new(randn(&[d], seed ^ 1).into_data());
        prop_assert_eq!(interpolate_embedding(&a, &b, 0.0).unwrap(), a.clone());
        prop_assert_eq!(interpolate_embedding(&a, &b, 1.0).unwrap(), b.clone());
        let m = interpolate_embedding(&a, &b, alpha).unwrap();
        for ((x, y), z) in a.values.iter().zip(&b.values).zip(&m.values) {
            prop_assert!((z - (x + alpha * (y - x))).abs() <= 1e-12 * (1.0 + x.abs() + y.abs()));
        }
        prop_assert!(interpolate_embedding(&a, &b, 1.5).is_err());
    }

    #[test]
    fn instance_norm_ignores_input_affine(seed in any::<u64>(), scale in 0.1f64..10.0, shift in finite()) {
        let x = randn(&[1, 3, 4, 4], seed);
        let p = NormParams::new(randn(&[3], seed ^ 2), randn(&[3], seed ^ 3), "p").unwrap();
        let y = conditional_instance_norm(&x, &p, NORM_EPS).unwrap();
        let x2 = x.map(|v| v * scale + shift);
        let y2 = conditional_instance_norm(&x2, &p, NORM_EPS * scale * scale).unwrap();
        for (a, b) in y.data().iter().zip(y2.data()) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + shift.abs() / scale));
        }
    }

    #[test]
    fn gram_is_symmetric_psd_and_quadratic(seed in any::<u64>(), c in 1usize..6, s in -3.0f64..3.0) {
        let f = randn(&[1, c, 3, 5], seed);
        let g = gram_matrix(&f).unwrap();
        let g2 = gram_matrix(&f.map(|v| v * s)).unwrap();
        for i in 0..c {
            prop_assert!(g.data()[i * c + i] >= 0.0);
            for j in 0..c {
                prop_assert_eq!(g.data()[i * c + j], g.data()[j * c + i]);
                let v = g.data()[i * c + j];
                prop_assert!((g2.data()[i * c + j] - s * s * v).abs() <= 1e-12 * (1.0 + s * s * v.abs()));
            }
        }
    }

    #[test]
    fn pad_and_upsample_backward_are_adjoint(seed in any::<u64>(), h in 2usize..7, w in 2usize..7, f in 1usize..4) {
        let x = randn(&[2, 2, h, w], seed);
        let pad = Pad4 { top: h - 1, bottom: (h - 1) / 2, left: w / 2, right: w - 1 };
        let y = reflect_pad(&x, pad).unwrap();
        let g = randn(y.shape(), seed ^ 5);
        let back = reflect_pad_backward(&g, x.shape(), pad).unwrap();
        prop_assert!((dot(&y, &g) - dot(&x, &back)).abs() <= 1e-10 * (1.0 + dot(&y, &g).abs()));

        let u = upsample_nearest(&x, f).unwrap();
        let gu = randn(u.shape(), seed ^ 6);
        let bu = upsample_nearest_backward(&gu, f).unwrap();
        prop_assert!((dot(&u, &gu) - dot(&x, &bu)).abs() <= 1e-10 * (1.0 + dot(&u, &gu).abs()));
    }

    #[test]
    fn conv_is_linear_in_input(seed in any::<u64>(), a in -5.0f64..5.0, stride in 1usize..3) {
        let x = randn(&[1, 2, 6, 5], seed);
        let y = randn(&[1, 2, 6, 5], seed ^ 7);
        let k = randn(&[3, 2, 3, 3], seed ^ 8);
        let zero = Tensor::zeros(&[3]);
        let lhs = conv2d(&x.zip_map(&y, |p, q| a * p + q).unwrap(), &k, &zero, stride, Padding::SameReflect).unwrap();
        let cx = conv2d(&x, &k, &zero, stride, Padding::SameReflect).unwrap();
        let cy = conv2d(&y, &k, &zero, stride, Padding::SameReflect).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            prop_assert!((l - (a * p + q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn percentiles_are_monotone_and_bounded(xs in prop::collection::vec(finite(), 1..40), p in 0.0f64..=100.0, q in 0.0f64..=100.0) {
        let (lo, hi) = (p.min(q), p.max(q));
        let a = percentile(&xs, lo).unwrap();
        let b = percentile(&xs, hi).unwrap();
        prop_assert!(a <= b);
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= a && b <= max);
        prop_assert_eq!(percentile(&xs, 0.0).unwrap(), min);
        prop_assert_eq!(percentile(&xs, 100.0).unwrap(), max);
    }

    #[test]
    fn sample_std_is_shift_invariant(xs in prop::collection::vec(-100.0f64..100.0, 2..30), shift in finite()) {
        let shifted: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        prop_assert!((sample_std(&xs) - sample_std(&shifted)).abs() <= 1e-9 * (1.0 + shift.abs()));
    }

    #[test]
    fn t_test_is_antisymmetric(a in prop::collection::vec(-10.0f64..10.0, 3..20), seed in any::<u64>()) {
        let b: Vec<f64> = randn(&[a.len()], seed).into_data();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }

    #[test]
    fn ppm_round_trip_is_exact_on_the_8bit_grid(bytes in prop::collection::vec(any::<u8>(), 12), w in 1usize..3) {
        let h = 4 / w;
        let vals: Vec<f64> = bytes[..3 * h * w].iter().map(|&b| b as f64 / 255.0).collect();
        let t = Tensor::new(&[1, 3, h, w], vals).unwrap();
        prop_assert_eq!(decode_ppm::<f64>(&encode_ppm(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn augmentation_keeps_shape_and_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor::<f64>::uniform(&[1, 3, 12, 12], 0.0, 1.0, &mut rng);
        let out = augment_style(&img, &AugmentConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(out.shape(), img.shape());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
