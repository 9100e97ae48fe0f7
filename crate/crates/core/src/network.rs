//! Feed-forward ReLU network `f(s) = Wᵀ max(0, U s)` with one hidden layer.
//!
//! The hidden bias rides on the constant `1` entry of the input vector, so `U`
//! is the only hidden-layer parameter. Training is plain minibatch SGD on the
//! L2 loss `‖target − f(s)‖²`; the hidden activations double as the feature
//! row for last-layer adaptation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linear::{mean_loss, RegressionSample, Trained, TrainingConfig, TrainingPair};
use crate::types::{
    build_network_input, ensure_finite, PredictedTrajectory, RegressorVector, FUTURE_DIM, NETWORK_INPUT_DIM,
};

pub const DEFAULT_HIDDEN: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// `n_h × input`
    hidden: DMatrix<f64>,
    /// `n_h × output`
    output: DMatrix<f64>,
}

impl NetworkParams {
    pub fn new(hidden: DMatrix<f64>, output: DMatrix<f64>) -> Result<Self> {
        check_dim("network hidden units", hidden.nrows(), output.nrows())?;
        ensure_finite(hidden.as_slice(), "hidden weights")?;
        ensure_finite(output.as_slice(), "output weights")?;
        Ok(Self { hidden, output })
    }

    /// Glorot-uniform initialization.
    pub fn init(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
        };
        let u = uniform(hidden, inputs, inputs, hidden);
        let w = uniform(hidden, outputs, hidden, outputs);
        Self { hidden: u, output: w }
    }

    pub fn hidden_weights(&self) -> &DMatrix<f64> {
        &self.hidden
    }

    pub fn output_weights(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn inputs(&self) -> usize {
        self.hidden.ncols()
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.output.ncols()
    }

    pub fn with_output_weights(&self, output: DMatrix<f64>) -> Result<Self> {
        Self::new(self.hidden.clone(), output)
    }

    pub fn hidden_vector(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("network input", self.inputs(), s.len())?;
        let mut z = &self.hidden * s;
        z.apply(|v| *v = v.max(0.0));
        Ok(z)
    }

    pub fn forward_vector(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.output.tr_mul(&self.hidden_vector(s)?))
    }
}

/// Post-ReLU hidden activations; every entry is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

pub fn nn_hidden(params: &NetworkParams, s: &RegressorVector) -> Result<FeatureVector> {
    params.hidden_vector(s.as_vector()).map(FeatureVector)
}

pub fn nn_forward(params: &NetworkParams, s: &RegressorVector) -> Result<PredictedTrajectory> {
    check_dim("network outputs", FUTURE_DIM, params.outputs())?;
    let out = params.forward_vector(s.as_vector())?;
    PredictedTrajectory::from_slice(out.as_slice())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub hidden: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

impl NetworkGradients {
    fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            hidden: DMatrix::zeros(params.hidden.nrows(), params.hidden.ncols()),
            output: DMatrix::zeros(params.output.nrows(), params.output.ncols()),
        }
    }
}

/// `‖target − f(s)‖²`.
pub fn nn_loss(params: &NetworkParams, s: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    check_dim("network target", params.outputs(), target.len())?;
    Ok((target - params.forward_vector(s)?).norm_squared())
}

/// Backpropagated gradients of [`nn_loss`]; the ReLU derivative at 0 is 0.
pub fn nn_gradients(params: &NetworkParams, s: &DVector<f64>, target: &DVector<f64>) -> Result<NetworkGradients> {
    let mut grads = NetworkGradients::zeros_like(params);
    accumulate_gradients(params, s, target, &mut grads)?;
    Ok(grads)
}

fn accumulate_gradients(
    params: &NetworkParams,
    s: &DVector<f64>,
    target: &DVector<f64>,
    grads: &mut NetworkGradients,
) -> Result<()> {
    check_dim("network input", params.inputs(), s.len())?;
    check_dim("network target", params.outputs(), target.len())?;
    let pre = &params.hidden * s;
    let h = pre.map(|v| v.max(0.0));
    let residual = target - params.output.tr_mul(&h);
    // dL/dW = -2 h rᵀ
    grads.output.ger(-2.0, &h, &residual, 1.0);
    // dL/dz = -2 (W r) ⊙ 1[z > 0]
    let mut delta = &params.output * &residual;
    delta.zip_apply(&pre, |d, z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    grads.hidden.ger(-2.0, &delta, s, 1.0);
    Ok(())
}

pub fn network_samples(pairs: &[TrainingPair]) -> Vec<RegressionSample> {
    pairs
        .iter()
        .map(|p| RegressionSample {
            input: build_network_input(&p.window).into_inner(),
            target: DVector::from_column_slice(p.target.as_slice()),
        })
        .collect()
}

/// SGD over arbitrary samples from a seeded Glorot initialization.
pub fn train_network_samples(
    samples: &[RegressionSample],
    hidden_units: usize,
    config: &TrainingConfig,
) -> Result<Trained<NetworkParams>> {
    config.check_dataset(samples.len())?;
    let inputs = samples[0].input.len();
    let outputs = samples[0].target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = NetworkParams::init(inputs, hidden_units, outputs, &mut rng);
    train_network_from(params, samples, config, &mut rng)
}

pub(crate) fn train_network_from(
    mut params: NetworkParams,
    samples: &[RegressionSample],
    config: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trained<NetworkParams>> {
    config.check_dataset(samples.len())?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grads = NetworkGradients::zeros_like(&params);
    let mut loss_trace = Vec::with_capacity(config.epochs + 1);
    loss_trace.push(mean_loss(samples, |s| nn_loss(&params, &s.input, &s.target))?);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch_size) {
            grads.hidden.fill(0.0);
            grads.output.fill(0.0);
            for &i in chunk {
                accumulate_gradients(&params, &samples[i].input, &samples[i].target, &mut grads)?;
            }
            let step = -config.learning_rate / chunk.len() as f64;
            params.hidden += &grads.hidden * step;
            params.output += &grads.output * step;
        }
        let loss = mean_loss(samples, |s| nn_loss(&params, &s.input, &s.target))?;
        if !loss.is_finite() {
            return Err(Error::Validation("network training diverged".into()));
        }
        loss_trace.push(loss);
    }
    Ok(Trained { params, loss_trace })
}

/// Train the 11 → n_h → 9 motion network.
pub fn train_network(
    pairs: &[TrainingPair],
    hidden_units: usize,
    config: &TrainingConfig,
) -> Result<Trained<NetworkParams>> {
    let samples = network_samples(pairs);
    if let Some(first) = samples.first() {
        check_dim("network input", NETWORK_INPUT_DIM, first.input.len())?;
    }
    train_network_samples(&samples, hidden_units, config)
}
