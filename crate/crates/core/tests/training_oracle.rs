mod common;

use common::*;
use motion_bench::human::{dataset_pairs, default_patterns, generate_dataset};
use motion_bench::linear::{train_linear, train_linear_samples, RegressionSample, TrainingConfig};
use motion_bench::network::{
    network_samples, nn_gradients, nn_loss, train_network, train_network_samples, NetworkParams,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn linear_problem(
    n: usize,
    d: usize,
    outputs: usize,
    seed: u64,
) -> (DMatrix<f64>, DMatrix<f64>, Vec<RegressionSample>) {
    let mut rng = rng(seed);
    let truth = gaussian_matrix(&mut rng, d, outputs);
    let phi = gaussian_matrix(&mut rng, n, d);
    let samples = (0..n)
        .map(|k| {
            let input = phi.row(k).transpose();
            RegressionSample {
                target: truth.tr_mul(&input),
                input,
            }
        })
        .collect();
    (truth, phi, samples)
}

#[test]
fn sgd_recovers_normal_equations_solution() {
    let (truth, phi, samples) = linear_problem(400, 10, 9, 21);
    let y = DMatrix::from_fn(400, 9, |r, c| samples[r].target[c]);
    let batch = normal_equations(&phi, &y);
    assert!(relative_error(&batch, &truth) < 1e-10);
    let config = TrainingConfig {
        learning_rate: 0.01,
        ..TrainingConfig::default()
    };
    let trained = train_linear_samples(&samples, 10, 9, &config).unwrap();
    let err = relative_error(trained.params.theta(), &batch);
    assert!(err <= 1e-2, "relative error {err}");
    assert!(trained.loss_trace.last() <= trained.loss_trace.first());
}

#[test]
fn well_fitted_parameters_reproduce_the_generator() {
    let (truth, _, samples) = linear_problem(400, 10, 9, 22);
    let config = TrainingConfig {
        learning_rate: 0.02,
        epochs: 300,
        ..TrainingConfig::default()
    };
    let trained = train_linear_samples(&samples, 10, 9, &config).unwrap();
    let mut rng = rng(23);
    for _ in 0..50 {
        let phi = gaussian_vector(&mut rng, 10);
        let got = trained.params.predict_vector(&phi).unwrap();
        let want = truth.tr_mul(&phi);
        assert!((got - want).amax() <= 1e-6);
    }
}

#[test]
fn motion_models_train_reproducibly_and_reduce_loss() {
    let data = generate_dataset(&default_patterns(), 5, 3).unwrap();
    let pairs = dataset_pairs(&data).unwrap();
    let config = TrainingConfig {
        epochs: 10,
        ..TrainingConfig::default()
    };
    let a = train_linear(&pairs, &config).unwrap();
    let b = train_linear(&pairs, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.loss_trace.last() < a.loss_trace.first());
    let n = train_network(&pairs, 40, &config).unwrap();
    assert!(n.loss_trace.last() < n.loss_trace.first());
    assert_eq!(n.params.hidden_weights().shape(), (40, 11));
    assert_eq!(n.params.output_weights().shape(), (40, 9));

    // recorded final loss is the mean loss of the returned parameters
    let samples = network_samples(&pairs);
    let recomputed: f64 = samples
        .iter()
        .map(|s| nn_loss(&n.params, &s.input, &s.target).unwrap())
        .sum::<f64>()
        / samples.len() as f64;
    let recorded = *n.loss_trace.last().unwrap();
    assert!((recomputed - recorded).abs() <= 1e-12 * recorded.max(1.0));
}

fn central_differences(
    params: &NetworkParams,
    s: &DVector<f64>,
    t: &DVector<f64>,
    eps: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let loss = |p: &NetworkParams| nn_loss(p, s, t).unwrap();
    let u = params.hidden_weights().clone();
    let w = params.output_weights().clone();
    let mut du = DMatrix::zeros(u.nrows(), u.ncols());
    for i in 0..u.len() {
        let (mut plus, mut minus) = (u.clone(), u.clone());
        plus[i] += eps;
        minus[i] -= eps;
        let lp = loss(&NetworkParams::new(plus, w.clone()).unwrap());
        let lm = loss(&NetworkParams::new(minus, w.clone()).unwrap());
        du[i] = (lp - lm) / (2.0 * eps);
    }
    let mut dw = DMatrix::zeros(w.nrows(), w.ncols());
    for i in 0..w.len() {
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus[i] += eps;
        minus[i] -= eps;
        dw[i] = (loss(&params.with_output_weights(plus).unwrap()) - loss(&params.with_output_weights(minus).unwrap()))
            / (2.0 * eps);
    }
    (du, dw)
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = rng(24);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let params = NetworkParams::init(11, 40, 9, &mut rng);
        let mut s = gaussian_vector(&mut rng, 11);
        s[10] = 1.0;
        let t = gaussian_vector(&mut rng, 9);
        let g = nn_gradients(&params, &s, &t).unwrap();
        let (du, dw) = central_differences(&params, &s, &t, 1e-5);
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(1e-12);
        worst = worst.max(rel(&g.hidden, &du)).max(rel(&g.output, &dw));
    }
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn student_learns_a_teacher_network() {
    let mut rng = rng(25);
    let teacher = NetworkParams::init(11, 40, 9, &mut rng);
    let samples: Vec<RegressionSample> = (0..2000)
        .map(|_| {
            let mut s = DVector::from_fn(11, |_, _| rng.random_range(-1.0..1.0));
            s[10] = 1.0;
            RegressionSample {
                target: teacher.forward_vector(&s).unwrap(),
                input: s,
            }
        })
        .collect();
    let config = TrainingConfig {
        learning_rate: 0.01,
        ..TrainingConfig::default()
    };
    let trained = train_network_samples(&samples, 40, &config).unwrap();
    let n = samples.len() as f64;
    let mut variance = 0.0;
    for j in 0..9 {
        let mean = samples.iter().map(|s| s.target[j]).sum::<f64>() / n;
        variance += samples.iter().map(|s| (s.target[j] - mean).powi(2)).sum::<f64>() / n;
    }
    let mse = *trained.loss_trace.last().unwrap();
    assert!(mse <= 0.1 * variance, "mse {mse} vs target variance {variance}");
}

#[test]
fn output_layer_training_is_least_squares_on_features() {
    let mut rng = rng(26);
    let net = NetworkParams::init(11, 40, 9, &mut rng);
    let truth = gaussian_matrix(&mut rng, 40, 9);
    let samples: Vec<RegressionSample> = (0..1000)
        .map(|_| {
            let mut s = gaussian_vector(&mut rng, 11);
            s[10] = 1.0;
            let h = net.hidden_vector(&s).unwrap();
            RegressionSample {
                target: truth.tr_mul(&h),
                input: h,
            }
        })
        .collect();
    let phi = DMatrix::from_fn(samples.len(), 40, |r, c| samples[r].input[c]);
    let y = DMatrix::from_fn(samples.len(), 9, |r, c| samples[r].target[c]);
    let batch = normal_equations(&phi, &y);
    let config = TrainingConfig {
        learning_rate: 0.01,
        epochs: 600,
        ..TrainingConfig::default()
    };
    let trained = train_linear_samples(&samples, 40, 9, &config).unwrap();
    // ReLU features are poorly conditioned, so compare fitted values rather than weights
    let fitted = &phi * trained.params.theta();
    let err = relative_error(&fitted, &(&phi * &batch));
    assert!(err <= 1e-2, "relative error {err}");
}
