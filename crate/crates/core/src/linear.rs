//! Fixed linear transition model: `x(k+1) = Φ_kᵀ θ`, trained offline with
//! minibatch SGD on the squared residual.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::{
    build_linear_regressor, ensure_finite, MotionWindow, PredictedTrajectory, RegressorVector, FUTURE_DIM,
    LINEAR_REGRESSOR_DIM,
};

/// Parameter matrix mapping a regressor (rows) to the stacked future (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    theta: DMatrix<f64>,
}

impl LinearParams {
    pub fn new(theta: DMatrix<f64>) -> Result<Self> {
        ensure_finite(theta.as_slice(), "linear parameters")?;
        Ok(Self { theta })
    }

    /// Zero parameters of the default 10×9 shape.
    pub fn zeros() -> Self {
        Self::zeros_with_shape(LINEAR_REGRESSOR_DIM, FUTURE_DIM)
    }

    pub fn zeros_with_shape(inputs: usize, outputs: usize) -> Self {
        Self {
            theta: DMatrix::zeros(inputs, outputs),
        }
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn into_theta(self) -> DMatrix<f64> {
        self.theta
    }

    pub fn inputs(&self) -> usize {
        self.theta.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.theta.ncols()
    }

    /// Raw `θᵀ φ` for any shape.
    pub fn predict_vector(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("linear regressor", self.inputs(), phi.len())?;
        Ok(self.theta.tr_mul(phi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            minibatch_size: 16,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if self.minibatch_size == 0 {
            return Err(Error::Argument("minibatch size must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn check_dataset(&self, len: usize) -> Result<()> {
        self.validate()?;
        if len == 0 || len < self.minibatch_size {
            return Err(Error::Argument(format!(
                "dataset of {len} samples is shorter than one minibatch of {}",
                self.minibatch_size
            )));
        }
        Ok(())
    }
}

/// Supervised pair: a motion window and the positions that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub window: MotionWindow,
    pub target: PredictedTrajectory,
}

/// A regressor row and its stacked target, for any dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub input: DVector<f64>,
    pub target: DVector<f64>,
}

/// Parameters plus the mean per-sample loss before training and after each epoch.
#[derive(Debug, Clone)]
pub struct Trained<P> {
    pub params: P,
    pub loss_trace: Vec<f64>,
}

pub fn lrm_predict(params: &LinearParams, phi: &RegressorVector) -> Result<PredictedTrajectory> {
    check_dim("linear model outputs", FUTURE_DIM, params.outputs())?;
    PredictedTrajectory::new(nalgebra::SVector::from_column_slice(
        params.predict_vector(phi.as_vector())?.as_slice(),
    ))
}

/// `‖target − θᵀφ‖²`.
pub fn sample_error(params: &LinearParams, phi: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    let prediction = params.predict_vector(phi)?;
    check_dim("linear target", params.outputs(), target.len())?;
    Ok((target - prediction).norm_squared())
}

/// Gradient of [`sample_error`] with respect to θ: `−2 φ rᵀ`.
pub fn sample_gradient(params: &LinearParams, phi: &DVector<f64>, target: &DVector<f64>) -> Result<DMatrix<f64>> {
    let residual = target - params.predict_vector(phi)?;
    Ok(phi * residual.transpose() * -2.0)
}

/// One descent step against the minibatch-averaged gradient.
pub fn sgd_step(params: &LinearParams, batch: &[RegressionSample], learning_rate: f64) -> Result<LinearParams> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, batch.iter(), learning_rate)?;
    Ok(next)
}

fn sgd_step_in_place<'a>(
    params: &mut LinearParams,
    batch: impl ExactSizeIterator<Item = &'a RegressionSample>,
    learning_rate: f64,
) -> Result<()> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::Argument("empty minibatch".into()));
    }
    let mut grad = DMatrix::zeros(params.inputs(), params.outputs());
    for sample in batch {
        check_dim("linear target", params.outputs(), sample.target.len())?;
        let residual = &sample.target - params.predict_vector(&sample.input)?;
        grad.ger(-2.0, &sample.input, &residual, 1.0);
    }
    params.theta += &grad * (-learning_rate / m as f64);
    Ok(())
}

pub(crate) fn mean_loss<F>(samples: &[RegressionSample], mut loss: F) -> Result<f64>
where
    F: FnMut(&RegressionSample) -> Result<f64>,
{
    let mut total = 0.0;
    for s in samples {
        total += loss(s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Zero-initialized SGD over arbitrary regression samples.
pub fn train_linear_samples(
    samples: &[RegressionSample],
    inputs: usize,
    outputs: usize,
    config: &TrainingConfig,
) -> Result<Trained<LinearParams>> {
    config.check_dataset(samples.len())?;
    let mut params = LinearParams::zeros_with_shape(inputs, outputs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    loss_trace.push(mean_loss(samples, |s| sample_error(&params, &s.input, &s.target))?);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.minibatch_size) {
            sgd_step_in_place(&mut params, chunk.iter().map(|&i| &samples[i]), config.learning_rate)?;
        }
        loss_trace.push(mean_loss(samples, |s| sample_error(&params, &s.input, &s.target))?);
    }
    ensure_finite(params.theta.as_slice(), "trained linear parameters")?;
    Ok(Trained { params, loss_trace })
}

pub fn linear_samples(pairs: &[TrainingPair]) -> Vec<RegressionSample> {
    pairs
        .iter()
        .map(|p| RegressionSample {
            input: build_linear_regressor(&p.window).into_inner(),
            target: DVector::from_column_slice(p.target.as_slice()),
        })
        .collect()
}

/// Train the 10×9 transition matrix on motion pairs.
pub fn train_linear(pairs: &[TrainingPair], config: &TrainingConfig) -> Result<Trained<LinearParams>> {
    train_linear_samples(&linear_samples(pairs), LINEAR_REGRESSOR_DIM, FUTURE_DIM, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_params_predict_zero() {
        let phi = RegressorVector::from_slice(&[0.3; 10]);
        let out = lrm_predict(&LinearParams::zeros(), &phi).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_regressor_selects_a_row() {
        let mut theta = DMatrix::zeros(10, 9);
        let row: Vec<f64> = (0..9).map(|j| j as f64 - 4.0).collect();
        for (j, v) in row.iter().enumerate() {
            theta[(0, j)] = *v;
        }
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        let out = lrm_predict(&LinearParams::new(theta).unwrap(), &RegressorVector::from_slice(&e1)).unwrap();
        assert_eq!(out.as_slice(), row.as_slice());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let phi = RegressorVector::from_slice(&[1.0; 11]);
        assert!(matches!(
            lrm_predict(&LinearParams::zeros(), &phi),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn sample_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = random_matrix(&mut rng, 10, 9);
        let params = LinearParams::new(theta).unwrap();
        let phi = random_vector(&mut rng, 10);
        let perfect = params.predict_vector(&phi).unwrap();
        assert_eq!(sample_error(&params, &phi, &perfect).unwrap(), 0.0);

        let t = random_vector(&mut rng, 9);
        let zero = LinearParams::zeros();
        assert_relative_eq!(
            sample_error(&zero, &phi, &t).unwrap(),
            t.norm_squared(),
            max_relative = 1e-15
        );

        let toy = LinearParams::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(sample_error(&toy, &scalar(1.0), &scalar(5.0)).unwrap(), 9.0);
    }

    #[test]
    fn sgd_scalar_substitution() {
        let batch = [RegressionSample {
            input: scalar(1.0),
            target: scalar(1.0),
        }];
        let next = sgd_step(&LinearParams::zeros_with_shape(1, 1), &batch, 0.5).unwrap();
        assert_eq!(next.theta()[(0, 0)], 1.0);
    }

    #[test]
    fn sgd_is_stationary_at_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = LinearParams::new(random_matrix(&mut rng, 10, 9)).unwrap();
        let batch: Vec<_> = (0..8)
            .map(|_| {
                let input = random_vector(&mut rng, 10);
                let target = params.predict_vector(&input).unwrap();
                RegressionSample { input, target }
            })
            .collect();
        assert_eq!(sgd_step(&params, &batch, 0.1).unwrap(), params);
    }

    #[test]
    fn empty_minibatch_rejected() {
        assert!(matches!(
            sgd_step(&LinearParams::zeros(), &[], 0.1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn small_step_does_not_increase_batch_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = LinearParams::new(random_matrix(&mut rng, 10, 9)).unwrap();
        let batch: Vec<_> = (0..16)
            .map(|_| RegressionSample {
                input: random_vector(&mut rng, 10),
                target: random_vector(&mut rng, 9),
            })
            .collect();
        let loss = |p: &LinearParams| mean_loss(&batch, |s| sample_error(p, &s.input, &s.target)).unwrap();
        let next = sgd_step(&params, &batch, 1e-4).unwrap();
        assert!(loss(&next) <= loss(&params));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let params = LinearParams::new(random_matrix(&mut rng, 10, 9)).unwrap();
            let phi = random_vector(&mut rng, 10);
            let target = random_vector(&mut rng, 9);
            let grad = sample_gradient(&params, &phi, &target).unwrap();
            let eps = 1e-6;
            for i in 0..10 {
                for j in 0..9 {
                    let mut plus = params.theta().clone();
                    plus[(i, j)] += eps;
                    let mut minus = params.theta().clone();
                    minus[(i, j)] -= eps;
                    let fd = (sample_error(&LinearParams::new(plus).unwrap(), &phi, &target).unwrap()
                        - sample_error(&LinearParams::new(minus).unwrap(), &phi, &target).unwrap())
                        / (2.0 * eps);
                    let scale = grad[(i, j)].abs().max(1.0);
                    assert!((fd - grad[(i, j)]).abs() / scale <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples: Vec<_> = (0..64)
            .map(|_| RegressionSample {
                input: random_vector(&mut rng, 4),
                target: random_vector(&mut rng, 2),
            })
            .collect();
        let config = TrainingConfig {
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let a = train_linear_samples(&samples, 4, 2, &config).unwrap();
        let b = train_linear_samples(&samples, 4, 2, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn dataset_shorter_than_minibatch_rejected() {
        let samples = vec![
            RegressionSample {
                input: scalar(1.0),
                target: scalar(1.0),
            };
            3
        ];
        assert!(matches!(
            train_linear_samples(&samples, 1, 1, &TrainingConfig::default()),
            Err(Error::Argument(_))
        ));
        assert!(train_linear(&[], &TrainingConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn prediction_is_linear(
            a in prop::collection::vec(-3.0f64..3.0, 10),
            b in prop::collection::vec(-3.0f64..3.0, 10),
            c in -4.0f64..4.0,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = LinearParams::new(random_matrix(&mut rng, 10, 9)).unwrap();
            let a = DVector::from_vec(a);
            let b = DVector::from_vec(b);
            let sum = params.predict_vector(&(&a + &b)).unwrap();
            let parts = params.predict_vector(&a).unwrap() + params.predict_vector(&b).unwrap();
            prop_assert!((sum - parts).amax() <= 1e-10);
            let scaled = params.predict_vector(&(&a * c)).unwrap();
            prop_assert!((scaled - params.predict_vector(&a).unwrap() * c).amax() <= 1e-10);
        }
    }
}
