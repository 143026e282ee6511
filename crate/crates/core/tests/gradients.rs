use cdbn_dfl::autoencoder::{init_from_pretraining, AutoencoderNet, SoftmaxHead};
use cdbn_dfl::numerics::RngStream;

const EPS: f64 = 1e-5;

/// Central differences of `f` around `params`.
fn numeric_gradient(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + EPS;
            let up = f(&p);
            p[i] = orig - EPS;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

/// Largest componentwise `|a - n|`, relative to the largest gradient
/// magnitude of either vector.
fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, g| m.max(g.abs()))
        .max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

fn random_net(sizes: &[usize], rng: &mut RngStream) -> AutoencoderNet<f64> {
    let mut net = init_from_pretraining::<f64>(sizes[0], &sizes[1..], None, &[], rng).unwrap();
    let params: Vec<f64> = net.parameters().iter().map(|_| 0.5 * rng.standard_normal()).collect();
    net.set_parameters(&params).unwrap();
    net
}

fn random_rows(n: usize, dim: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.standard_normal()).collect()).collect()
}

#[test]
fn mse_backprop_matches_finite_differences() {
    for seed in 0..40 {
        let mut rng = RngStream::new(seed);
        let mut net = random_net(&[6, 4, 2], &mut rng);
        net.input_std = (0..6).map(|i| 0.6 + 0.2 * i as f64).collect();
        let data: Vec<Vec<f64>> = random_rows(5, 6, &mut rng)
            .into_iter()
            .map(|r| r.into_iter().map(|x| 0.5 * x).collect())
            .collect();
        let (loss, analytic) = net.mse_gradient(&data).unwrap();
        assert!((loss - net.mse(&data).unwrap()).abs() < 1e-12);
        let mut probe = net.clone();
        let numeric = numeric_gradient(&net.parameters(), |p| {
            probe.set_parameters(p).unwrap();
            probe.mse(&data).unwrap()
        });
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "seed {seed}: relative error {err}");
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = RngStream::new(100 + seed);
        let mut head = SoftmaxHead::<f64>::zeros(4, 5);
        let params: Vec<f64> = head.parameters().iter().map(|_| rng.standard_normal()).collect();
        head.set_parameters(&params).unwrap();
        let features = random_rows(7, 4, &mut rng);
        let labels = vec![0, 1, 2, 3, 4, 2, 0];
        let (_, analytic) = head.gradient(&features, &labels).unwrap();
        let mut probe = head.clone();
        let numeric = numeric_gradient(&params, |p| {
            probe.set_parameters(p).unwrap();
            probe.loss(&features, &labels).unwrap()
        });
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "seed {seed}: relative error {err}");
    }
}

#[test]
fn finetune_reduces_mse() {
    let mut rng = RngStream::new(7);
    let data = random_rows(20, 6, &mut rng);
    let mut net = init_from_pretraining::<f64>(6, &[4, 2], None, &data, &mut rng).unwrap();
    let history = net.finetune(&data, 100, 0.01, 5, &mut rng).unwrap();
    assert_eq!(history.len(), 101);
    assert!(history[100] < history[0], "{} !< {}", history[100], history[0]);

    let mut small = init_from_pretraining::<f64>(6, &[4, 2], None, &data, &mut rng).unwrap();
    let h = small.finetune(&data, 1, 1e-3, 20, &mut rng).unwrap();
    assert!(h[1] < h[0]);
}

#[test]
fn finetune_improves_a_training_point() {
    let mut rng = RngStream::new(8);
    let data = random_rows(10, 5, &mut rng);
    let mut net = init_from_pretraining::<f64>(5, &[3], None, &data, &mut rng).unwrap();
    let err = |net: &AutoencoderNet<f64>| {
        let r = net.reconstruct(&data[0]).unwrap();
        r.iter().zip(&data[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    };
    let before = err(&net);
    net.finetune(&data, 200, 0.05, 5, &mut rng).unwrap();
    assert!(err(&net) < before);
}

#[test]
fn softmax_separates_two_classes() {
    let mut rng = RngStream::new(9);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let y = i % 2;
        let centre = if y == 0 { -1.0 } else { 1.0 };
        features.push(vec![centre + 0.3 * rng.standard_normal(), rng.standard_normal()]);
        labels.push(y);
    }
    let mut head = SoftmaxHead::<f64>::zeros(2, 2);
    let trace = head.train(&features, &labels, 500, 0.1, 10, &mut rng).unwrap();
    assert_eq!(*trace.train_accuracy.last().unwrap(), 1.0);
    assert!(trace.loss.last().unwrap() < &trace.loss[0]);
}

#[test]
fn softmax_small_step_reduces_loss() {
    let mut rng = RngStream::new(10);
    let features = random_rows(30, 3, &mut rng);
    let labels: Vec<usize> = (0..30).map(|i| i % 4).collect();
    let mut head = SoftmaxHead::<f64>::zeros(3, 4);
    let trace = head.train(&features, &labels, 1, 1e-3, 30, &mut rng).unwrap();
    assert!(trace.loss[1] < trace.loss[0]);
}
