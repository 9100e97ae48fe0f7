mod common;

use common::*;
use motion_bench::linear::LinearParams;
use motion_bench::predictor::{AdaptationSettings, FeatureModel, OnlinePredictor, PredictorKind};
use motion_bench::rls::{gain_update, AdaptiveState, BlockRegressor, LambdaSchedule};
use motion_bench::{ActionLabel, MotionWindow, Position};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn information_form_accumulates_outer_products() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let a = gaussian_matrix(&mut rng, 5, 5);
        let mut f = &a * a.transpose() + DMatrix::identity(5, 5);
        let mut info = f.clone().try_inverse().unwrap();
        for _ in 0..10 {
            let phi = gaussian_vector(&mut rng, 5);
            f = gain_update(&f, &phi, LambdaSchedule::LEAST_SQUARES).unwrap();
            info += &phi * phi.transpose();
            let inv = f.clone().try_inverse().unwrap();
            assert!((&inv - &info).amax() / info.amax() < 1e-8);
        }
    }
}

#[test]
fn streaming_least_squares_matches_batch_solution() {
    let (n, d, outputs) = (500, 10, 9);
    let mut rng = rng(12);
    let truth = gaussian_matrix(&mut rng, d, outputs);
    let phi = gaussian_matrix(&mut rng, n, d);
    let y = &phi * &truth;
    let mut state = AdaptiveState::new(DMatrix::zeros(d, outputs), 1e6, LambdaSchedule::LEAST_SQUARES).unwrap();
    for k in 0..n {
        let row = phi.row(k).transpose();
        let obs = y.row(k).transpose();
        state.update(&BlockRegressor::new(row, outputs), &obs).unwrap();
    }
    let batch = normal_equations(&phi, &y);
    assert!(relative_error(state.theta(), &batch) <= 1e-6);
}

/// The full block-diagonal recursion on the stacked parameter vector.
fn full_update(
    big_gain: &DMatrix<f64>,
    theta: &DVector<f64>,
    reg: &BlockRegressor,
    observed: &DVector<f64>,
    l1: f64,
    l2: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let phi_t = reg.to_dense();
    let outputs = reg.outputs();
    let inner = DMatrix::identity(outputs, outputs) * l1 + &phi_t * big_gain * phi_t.transpose() * l2;
    let correction = big_gain * phi_t.transpose() * inner.try_inverse().unwrap() * &phi_t * big_gain;
    let next = (big_gain - correction * l2) / l1;
    let residual = observed - &phi_t * theta;
    let next_theta = theta + &next * phi_t.transpose() * residual;
    (next, next_theta)
}

#[test]
fn shared_gain_equals_block_diagonal_recursion() {
    let mut rng = rng(13);
    for case in 0..50 {
        let d = rng.random_range(1..5);
        let outputs = rng.random_range(1..5);
        let l1 = rng.random_range(0.9..=1.0);
        let l2 = if case % 3 == 0 {
            0.0
        } else {
            rng.random_range(0.2..=1.5)
        };
        let schedule = LambdaSchedule::new(l1, l2).unwrap();
        let a = gaussian_matrix(&mut rng, d, d);
        let gain = &a * a.transpose() + DMatrix::identity(d, d);
        let theta = gaussian_matrix(&mut rng, d, outputs);
        let mut state = AdaptiveState::with_gain(theta.clone(), gain.clone(), 1.0, schedule).unwrap();

        let mut big_gain = DMatrix::zeros(d * outputs, d * outputs);
        for j in 0..outputs {
            big_gain.view_mut((j * d, j * d), (d, d)).copy_from(&gain);
        }
        let mut big_theta = DVector::from_column_slice(theta.as_slice());
        for _ in 0..5 {
            let reg = BlockRegressor::new(gaussian_vector(&mut rng, d), outputs);
            let obs = gaussian_vector(&mut rng, outputs);
            state.update(&reg, &obs).unwrap();
            (big_gain, big_theta) = full_update(&big_gain, &big_theta, &reg, &obs, l1, l2);
            let scale = big_gain.amax().max(1.0);
            for j in 0..outputs {
                let block = big_gain.view((j * d, j * d), (d, d));
                assert!((block - state.gain()).amax() / scale < 1e-10);
            }
            let theta_scale = big_theta.amax().max(1.0);
            assert!((state.theta_vector() - &big_theta).amax() / theta_scale < 1e-10);
        }
    }
}

#[test]
fn gain_stays_symmetric_positive_definite() {
    let mut rng = rng(14);
    let d = 6;
    let mut gain = DMatrix::identity(d, d) * 1000.0;
    for k in 0..10_000 {
        let l1 = rng.random_range(0.95..=1.0);
        let l2 = if k % 2 == 0 { 0.0 } else { 1.0 };
        let phi = gaussian_vector(&mut rng, d);
        gain = match gain_update(&gain, &phi, LambdaSchedule::new(l1, l2).unwrap()) {
            Ok(g) => g,
            Err(e) => panic!("update {k} failed: {e}"),
        };
        assert!((&gain - gain.transpose()).amax() <= 1e-9);
        assert!(gain.clone().cholesky().is_some());
    }
}

#[test]
fn adaptation_tracks_a_switched_model() {
    let (n, d, outputs) = (1200, 10, 9);
    let mut rng = rng(15);
    let before = gaussian_matrix(&mut rng, d, outputs);
    let after = &before + gaussian_matrix(&mut rng, d, outputs) * 0.5;
    let mut adaptive = AdaptiveState::new(before.clone(), 1000.0, LambdaSchedule::FORGETTING).unwrap();
    let (mut adaptive_err, mut frozen_err) = (0.0, 0.0);
    for k in 0..n {
        let truth = if k < n / 2 { &before } else { &after };
        let phi = gaussian_vector(&mut rng, d);
        let obs = truth.tr_mul(&phi) + gaussian_vector(&mut rng, outputs) * 0.01;
        let reg = BlockRegressor::new(phi.clone(), outputs);
        if k >= n - 200 {
            adaptive_err += (adaptive.predict(&reg).unwrap() - &obs).norm();
            frozen_err += (before.tr_mul(&phi) - &obs).norm();
        }
        adaptive.update(&reg, &obs).unwrap();
    }
    assert!(
        adaptive_err < frozen_err,
        "adaptive {adaptive_err} vs frozen {frozen_err}"
    );
}

#[test]
fn constant_position_stream_is_learned() {
    let c = Position::new(0.7, -0.2, 0.35);
    let window = MotionWindow::from_positions(&[c, c, c], ActionLabel::new(2).unwrap()).unwrap();
    let mut predictor = OnlinePredictor::from_parts(
        PredictorKind::AdaptiveLinear,
        FeatureModel::Linear,
        LinearParams::zeros().into_theta(),
        &AdaptationSettings::default(),
        true,
    )
    .unwrap();
    let errors: Vec<f64> = (0..400)
        .map(|_| {
            let p = predictor.step(&window).unwrap();
            p.positions().map(|q| (q - c).norm()).fold(0.0, f64::max)
        })
        .collect();
    // after the first residual matures the error never grows and keeps shrinking
    for w in errors[4..].windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9));
    }
    assert!(errors[399] < 1e-6, "residual {}", errors[399]);
}
