//! Property-based invariants.

mod common;

use agos::data::{decode_agt, decode_pnm_samples, encode_agt, encode_pnm_samples, split_indices, AnyTensor, PnmHeader};
use agos::functional::{conv2d, softmax_vec, ConvKernel};
use agos::mil::{classic_bag_label, fuse, FusionKind, FusionStrategy, WeakInstanceLabels};
use agos::train::{fmt_sig, lr_schedule, TrainConfig};
use agos::{Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn scores(grains: usize, classes: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, classes), grains)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_affine_in_the_input(seed in any::<u64>(), d in 1usize..4, h in 1usize..7, w in 1usize..7, k in -3.0f64..3.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_tensor(&mut r, Shape::new(1, h, w, 2));
        let kernel = ConvKernel::new(
            common::random_tensor(&mut r, Shape::new(3, 3, 2, 2)),
            Tensor::zeros(Shape::vector(1, 2)),
            d,
        ).unwrap();
        let scaled = Tensor::new(x.shape(), x.data().iter().map(|v| v * k).collect()).unwrap();
        let a = conv2d(&x, &kernel).unwrap();
        let b = conv2d(&scaled, &kernel).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p * k - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let p = softmax_vec(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.5).collect();
        for (a, b) in p.iter().zip(softmax_vec(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn bag_label_is_any(labels in prop::collection::vec(0u8..2, 1..40)) {
        let expect = u8::from(labels.contains(&1));
        prop_assert_eq!(classic_bag_label(&WeakInstanceLabels::new(labels, 0).unwrap()).unwrap(), expect);
    }

    #[test]
    fn mean_and_max_fusion_ignore_grain_order(s in scores(4, 3), rot in 0usize..4) {
        let mut rotated = s.clone();
        rotated.rotate_left(rot);
        for kind in [FusionKind::Mean, FusionKind::Max, FusionKind::MajorityVote] {
            let a = fuse(&s, &FusionStrategy::new(kind)).unwrap();
            let b = fuse(&rotated, &FusionStrategy::new(kind)).unwrap();
            for (p, q) in a.probs.iter().zip(&b.probs) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
        let vote = fuse(&s, &FusionStrategy::new(FusionKind::MajorityVote)).unwrap();
        prop_assert_eq!(vote.probs.iter().filter(|&&p| p == 1.0).count(), 1);
    }

    #[test]
    fn split_is_a_stratified_partition(
        counts in prop::collection::vec(1usize..30, 1..5),
        ratio in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let (train, test) = split_indices(&labels, counts.len(), ratio, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let got = train.iter().filter(|&&i| labels[i] == c).count();
            prop_assert_eq!(got, ((ratio * n as f64) - 1e-9).ceil() as usize);
        }
        let again = split_indices(&labels, counts.len(), ratio, seed).unwrap();
        prop_assert_eq!(again.0, train);
    }

    #[test]
    fn fmt_sig_keeps_nine_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-9);
    }

    #[test]
    fn agt_round_trips(n in 1usize..3, h in 1usize..5, w in 1usize..5, c in 1usize..4, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let t = common::random_tensor(&mut r, Shape::new(n, h, w, c));
        let (back, used) = decode_agt(&encode_agt(&t), Path::new("p")).unwrap();
        prop_assert_eq!(used, encode_agt(&t).len());
        prop_assert_eq!(back, AnyTensor::F64(t.clone()));
        let t32: Tensor<f32> = t.cast();
        let (back, _) = decode_agt(&encode_agt(&t32), Path::new("p")).unwrap();
        prop_assert_eq!(back, AnyTensor::F32(t32));
    }

    #[test]
    fn pnm_round_trips(
        gray in any::<bool>(),
        width in 1usize..9,
        height in 1usize..9,
        maxval in 1u16..=65535,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let channels = if gray { 1 } else { 3 };
        let header = PnmHeader { channels, width, height, maxval };
        let samples: Vec<u16> = (0..width * height * channels).map(|_| r.random_range(0..=maxval)).collect();
        let (h, s) = decode_pnm_samples(&encode_pnm_samples(header, &samples).unwrap(), Path::new("p")).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(s, samples);
    }

    #[test]
    fn lr_never_increases(lr0 in 1e-6f64..1.0, every in 1usize..50, epoch in 0usize..500) {
        let cfg = TrainConfig { lr0, lr_decay_every: every, ..TrainConfig::default() };
        prop_assert!(lr_schedule(epoch + 1, &cfg) <= lr_schedule(epoch, &cfg));
        prop_assert!(lr_schedule(epoch, &cfg) > 0.0);
    }

    #[test]
    fn config_snapshot_round_trips(alpha in 1e-6f64..1.0, grains in 0usize..6, seed in any::<u32>(), ratio in 0.1f64..0.9) {
        let mut cfg = TrainConfig::default();
        cfg.loss.alpha = alpha;
        cfg.model.mgp.grains = grains;
        cfg.seed = seed as u64;
        cfg.train_ratios = vec![ratio, 0.5];
        prop_assert_eq!(TrainConfig::from_text(&cfg.snapshot()).unwrap(), cfg);
    }
}
