use cdbn_dfl::autoencoder::init_from_pretraining;
use cdbn_dfl::crbm::{block_posterior, sample_from_posterior, CrbmShape};
use cdbn_dfl::dataset::{add_awgn, normalize_fit, DflDataset, DflSample, NormStats};
use cdbn_dfl::gbrbm::VisibleKind;
use cdbn_dfl::numerics::{conv2d_full, conv2d_valid, log_sum_exp, softmax, Matrix2, RngStream};
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> Matrix2<f64> {
    Matrix2::from_fn(rows, cols, |_, _| scale * rng.standard_normal())
}

proptest! {
    #[test]
    fn full_convolution_is_adjoint_of_valid(seed in any::<u64>(), n in 1usize..9, k in 1usize..5) {
        prop_assume!(k <= n);
        let mut rng = RngStream::new(seed);
        let x = random_matrix(n, n, 1.0, &mut rng);
        let w = random_matrix(k, k, 1.0, &mut rng);
        let y = random_matrix(n + 1 - k, n + 1 - k, 1.0, &mut rng);
        let lhs = conv2d_valid(&x, &w, false).unwrap().dot(&y);
        let rhs = x.dot(&conv2d_full(&y, &w));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn flipped_valid_equals_rotated_kernel(seed in any::<u64>(), n in 2usize..8, k in 1usize..4) {
        prop_assume!(k <= n);
        let mut rng = RngStream::new(seed);
        let x = random_matrix(n, n, 1.0, &mut rng);
        let w = random_matrix(k, k, 1.0, &mut rng);
        prop_assert_eq!(conv2d_valid(&x, &w, true).unwrap(), conv2d_valid(&x, &w.rotated_180(), false).unwrap());
    }

    #[test]
    fn block_posteriors_are_distributions(seed in any::<u64>(), blocks in 1usize..4, pool in 1usize..4, scale in 0.0f64..1e3) {
        let mut rng = RngStream::new(seed);
        let side = blocks * pool;
        let signals = vec![random_matrix(side, side, scale, &mut rng), random_matrix(side, side, scale, &mut rng)];
        let q = block_posterior(&signals, pool);
        for (det, off) in q.detection.iter().zip(&q.pool_off) {
            prop_assert!(det.as_slice().iter().chain(off.as_slice()).all(|&p| (0.0..=1.0).contains(&p)));
            for a in 0..blocks {
                for b in 0..blocks {
                    let mut s = off[(a, b)];
                    for i in a * pool..(a + 1) * pool {
                        for j in b * pool..(b + 1) * pool {
                            s += det[(i, j)];
                        }
                    }
                    prop_assert!((s - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampled_blocks_are_one_hot_or_off(seed in any::<u64>(), blocks in 1usize..4, pool in 1usize..4) {
        let mut rng = RngStream::new(seed);
        let side = blocks * pool;
        let q = block_posterior(&[random_matrix(side, side, 2.0, &mut rng)], pool);
        let s = sample_from_posterior(&q, &mut rng);
        for a in 0..blocks {
            for b in 0..blocks {
                let mut on = 0.0;
                for i in a * pool..(a + 1) * pool {
                    for j in b * pool..(b + 1) * pool {
                        on += s.detection[0][(i, j)];
                    }
                }
                prop_assert!(on == 0.0 || on == 1.0);
                prop_assert_eq!(s.pooling[0][(a, b)], on);
            }
        }
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(z in prop::collection::vec(-500.0f64..500.0, 1..12), shift in -1e3f64..1e3) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        for (x, &pi) in z.iter().zip(&p) {
            if pi > 1e-300 {
                prop_assert!((pi.ln() - (x - log_sum_exp(&z))).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn detection_side_tiles_into_blocks(input in 1usize..30, kernel in 1usize..6, pool in 1usize..4) {
        prop_assume!(kernel <= input);
        let shape = CrbmShape { input_side: input, channels: 1, groups: 1, kernel_size: kernel, pool, visible: VisibleKind::Binary };
        prop_assert_eq!(shape.hidden_side() % pool, 0);
        prop_assert!(shape.hidden_side() >= input + 1 - kernel);
        prop_assert!(shape.hidden_side() < input + 1 - kernel + pool);
        prop_assert_eq!(shape.visible_side(), shape.hidden_side() + kernel - 1);
    }

    #[test]
    fn standardizing_is_idempotent(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = RngStream::new(seed);
        let samples = (0..n)
            .map(|i| DflSample {
                features: vec![3.0 + 2.0 * rng.standard_normal(), -1.5, 100.0 * rng.standard_normal(), 0.0],
                label: i % 2,
            })
            .collect();
        let ds = DflDataset::new(2, 2, samples).unwrap();
        let (once, _) = normalize_fit(&ds);
        let (twice, stats) = normalize_fit(&once);
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            for (x, y) in a.features.iter().zip(&b.features) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
        let identity = NormStats::identity(4);
        prop_assert_eq!(identity.apply_to(&once.samples[0].features), once.samples[0].features.clone());
        prop_assert!(stats.std.iter().all(|&s| s == 0.0 || (s - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn noise_is_seeded_and_keeps_labels(seed in any::<u64>(), snr in -10.0f64..40.0) {
        let mut rng = RngStream::new(seed);
        let samples = (0..6)
            .map(|i| DflSample { features: (0..9).map(|_| rng.standard_normal()).collect(), label: i % 3 })
            .collect();
        let ds = DflDataset::new(3, 3, samples).unwrap();
        let (a, _) = add_awgn(&ds, snr, seed);
        let (b, _) = add_awgn(&ds, snr, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.labels(), ds.labels());
    }

    #[test]
    fn autoencoder_parameters_round_trip(seed in any::<u64>(), a in 1usize..6, b in 1usize..5) {
        let mut rng = RngStream::new(seed);
        let mut net = init_from_pretraining::<f64>(a + 1, &[a, b], None, &[], &mut rng).unwrap();
        let params: Vec<f64> = net.parameters().iter().map(|_| rng.standard_normal()).collect();
        net.set_parameters(&params).unwrap();
        prop_assert_eq!(net.parameters(), params.clone());
        prop_assert!(net.set_parameters(&params[1..]).is_err());
    }
}
