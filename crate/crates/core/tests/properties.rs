use proptest::collection::vec;
use proptest::prelude::*;

use sdanet::autoencoder::corrupt;
use sdanet::data::{
    load_idx_images, load_idx_labels, normalize, write_idx_images, write_idx_labels, Dataset, IdxImages, SplitTag,
};
use sdanet::linalg::{Matrix, Rng, Vector};
use sdanet::nn::{activate, cross_entropy_recon, sgd_step, ActivationKind, DenseLayer, LayerGrad, PROB_EPS};
use sdanet::sda::CorruptionMode;
use sdanet::search::{select_best, CellId, TrialResult, TrialStatus};

fn matrix_and_vectors() -> impl Strategy<Value = (Matrix, Vec<f64>, Vec<f64>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        (
            vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap()),
            vec(-10.0f64..10.0, c),
            vec(-10.0f64..10.0, r),
        )
    })
}

proptest! {
    #[test]
    fn matvec_is_linear((m, u, _) in matrix_and_vectors(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let v: Vec<f64> = (0..u.len()).map(|_| rng.uniform(-10.0, 10.0).unwrap()).collect();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = m.matvec(&combo).unwrap();
        let mu = m.matvec(&u).unwrap();
        let mv = m.matvec(&v).unwrap();
        // Scale the tolerance by the magnitudes being cancelled.
        let scale: Vec<f64> = (0..m.rows())
            .map(|i| m.row(i).iter().zip(&combo).map(|(w, x)| (w * x).abs()).sum::<f64>()
                + (0..m.cols()).map(|j| (a * m.get(i, j) * u[j]).abs() + (b * m.get(i, j) * v[j]).abs()).sum::<f64>())
            .collect();
        for i in 0..m.rows() {
            let rhs = a * mu[i] + b * mv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * scale[i].max(1e-300));
        }
    }

    #[test]
    fn transpose_is_the_adjoint((m, u, v) in matrix_and_vectors()) {
        let mu = m.matvec(&u).unwrap();
        let mtv = m.matvec_transposed(&v).unwrap();
        let lhs: f64 = mu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(mtv.iter()).map(|(a, b)| a * b).sum();
        let scale: f64 = (0..m.rows())
            .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
            .map(|(i, j)| (m.get(i, j) * u[j] * v[i]).abs())
            .sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        prop_assert_eq!(m.transpose().transpose(), m.clone());
        let explicit = m.transpose().matvec(&v).unwrap();
        prop_assert_eq!(explicit, mtv);
    }

    #[test]
    fn softmax_normalizes_and_ignores_shifts(logits in vec(-50.0f64..50.0, 1..300), shift in -200.0f64..200.0) {
        let p = activate(ActivationKind::Softmax, &logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // A dominant logit can round its probability to exactly 1.
        prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 1.0));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let q = activate(ActivationKind::Softmax, &shifted);
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn bounded_activations_stay_in_range(pre in vec(-800.0f64..800.0, 1..50)) {
        for v in activate(ActivationKind::Sigmoid, &pre).iter() {
            prop_assert!((0.0..=1.0).contains(v));
        }
        for v in activate(ActivationKind::Tanh, &pre).iter() {
            prop_assert!((-1.0..=1.0).contains(v));
        }
        prop_assert!(activate(ActivationKind::Relu, &pre).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn cross_entropy_is_minimal_at_the_target(bits in vec(any::<bool>(), 1..20), z in vec(0.0f64..=1.0, 20)) {
        let x: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let clamped: Vec<f64> = x.iter().map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS)).collect();
        let best = cross_entropy_recon(&x, &clamped).unwrap();
        let other = cross_entropy_recon(&x, &z[..x.len()]).unwrap();
        prop_assert!(other >= best);
        prop_assert!((0.0..1e-10).contains(&best));
    }

    #[test]
    fn zero_learning_rate_is_identity(seed in any::<u64>(), fan_in in 1usize..6, fan_out in 1usize..6) {
        let mut rng = Rng::new(seed);
        let mut layers = vec![DenseLayer::init(fan_in, fan_out, ActivationKind::Tanh, &mut rng)];
        let before = layers.clone();
        let mut g = LayerGrad::zeros_like(&layers[0]);
        g.weights = Matrix::new(fan_out, fan_in, (0..fan_in * fan_out).map(|_| rng.next_f64()).collect()).unwrap();
        sgd_step(&mut layers, &[g], 0.0).unwrap();
        prop_assert_eq!(layers, before);
    }

    #[test]
    fn corruption_only_removes(x in vec(0.0f64..=1.0, 0..200), level in 0.0f64..=1.0, seed in any::<u64>()) {
        let out = corrupt(&x, level, &mut Rng::new(seed));
        prop_assert_eq!(out.len(), x.len());
        for (a, b) in x.iter().zip(out.iter()) {
            prop_assert!(*b == *a || *b == 0.0);
        }
        prop_assert_eq!(corrupt(&x, 0.0, &mut Rng::new(seed)).into_vec(), x.clone());
    }

    #[test]
    fn idx_round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..6, pixels in vec(any::<u8>(), 0..200)) {
        let d = rows * cols;
        let count = pixels.len() / d;
        let images = IdxImages { count, rows, cols, pixels: pixels[..count * d].to_vec() };
        let labels: Vec<u8> = images.pixels.iter().step_by(d.max(1)).map(|p| p % 10).collect();
        let back = load_idx_images(&write_idx_images(&images).unwrap()).unwrap();
        prop_assert_eq!(&back, &images);
        prop_assert_eq!(load_idx_labels(&write_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn normalization_is_monotone(a in any::<u8>(), b in any::<u8>()) {
        let v = normalize(&[a, b], 1);
        prop_assert_eq!(a.cmp(&b), v[0][0].partial_cmp(&v[1][0]).unwrap());
        let ends = normalize(&[0, 255], 2);
        prop_assert_eq!(ends[0].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn splits_are_disjoint_and_sized(n in 3usize..400, t in 1u32..20, v in 1u32..20, s in 1u32..20, seed in any::<u64>()) {
        let total = (t + v + s) as f64;
        let fr = (t as f64 / total, v as f64 / total, 1.0 - t as f64 / total - v as f64 / total);
        let samples = (0..n).map(|i| Vector::new(vec![(i % 7) as f64 / 7.0]).unwrap()).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        let ds = Dataset::new(samples, labels, 2).unwrap().split(fr, seed).unwrap();
        let counts: Vec<usize> = SplitTag::ALL.iter().map(|&tag| ds.count(tag)).collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, f) in counts.iter().zip([fr.0, fr.1, fr.2]) {
            prop_assert!((*c as f64 - f * n as f64).abs() < 1.0);
        }
        let again = Dataset::new(ds.samples().to_vec(), ds.labels().to_vec(), 2).unwrap().split(fr, seed).unwrap();
        prop_assert_eq!(again.split_tags(), ds.split_tags());
    }

    #[test]
    fn minibatches_partition_the_split(n in 1usize..200, batch in 1usize..40, seed in any::<u64>(), epoch in 0usize..5) {
        let samples = (0..n).map(|_| Vector::new(vec![0.5]).unwrap()).collect();
        let ds = Dataset::new(samples, vec![0; n], 2).unwrap();
        let batches = ds.minibatches(SplitTag::Train, batch, seed, epoch).unwrap();
        prop_assert!(batches.last().unwrap().len() <= batch);
        prop_assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == batch));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn select_best_ignores_ledger_order(errors in vec(prop_oneof![Just(None), (0u8..5).prop_map(|e| Some(e as f64))], 1..12), seed in any::<u64>()) {
        let ledger: Vec<TrialResult> = errors
            .iter()
            .enumerate()
            .map(|(i, e)| TrialResult {
                cell: CellId {
                    activation: ActivationKind::Sigmoid,
                    n_layers: 1 + i % 3,
                    n_neurons: 10 * (1 + i % 2),
                    corruption_level: 0.3,
                    corruption_mode: CorruptionMode::EveryLayer,
                    seed: i as u64,
                },
                status: if e.is_some() { TrialStatus::Ok } else { TrialStatus::Failed },
                message: String::new(),
                validation_error_pct: *e,
                test_error_pct: None,
                epochs_ran: 1,
                wall_time_s: 0.0,
            })
            .collect();
        let mut shuffled = ledger.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        match (select_best(&ledger), select_best(&shuffled)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => prop_assert!(errors.iter().all(Option::is_none)),
            _ => prop_assert!(false, "order changed success"),
        }
    }
}
