//! Recursive least-squares parameter adaptation (RLS-PAA).
//!
//! A linear-in-parameters predictor `x̂ = Φ θ̂` is corrected online as
//! measurements arrive:
//!
//! ```text
//! F ← (1/λ₁) [F − λ₂ F φ φᵀ F / (λ₁ + λ₂ φᵀ F φ)]
//! θ̂ ← θ̂ + F φ x̃ᵀ        (x̃ = observed − a-priori prediction)
//! ```
//!
//! The stacked regressor `Φ` is block diagonal with one identical feature row
//! per output. With a block-diagonal initial gain the full gain stays block
//! diagonal with identical blocks, so a single `d × d` gain shared by every
//! output is exact. `θ̂` is kept as a `d × outputs` matrix whose column `j` is
//! the parameter block of output `j`; stacking the columns gives the full
//! parameter vector.
//!
//! The gain is updated before the parameters, so the parameter step uses the
//! a-posteriori gain; with `λ₁ = λ₂ = 1` this is exactly recursive least
//! squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::types::{ensure_finite, PredictedTrajectory, FUTURE_DIM};

/// Initial gain scale used by the semi-adaptable network.
pub const DEFAULT_GAIN_SCALE: f64 = 1000.0;

const SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    lambda1: f64,
    lambda2: f64,
}

impl LambdaSchedule {
    /// Forgetting-factor least squares as used by the semi-adaptable network.
    pub const FORGETTING: LambdaSchedule = LambdaSchedule {
        lambda1: 0.998,
        lambda2: 1.0,
    };
    pub const LEAST_SQUARES: LambdaSchedule = LambdaSchedule {
        lambda1: 1.0,
        lambda2: 1.0,
    };
    pub const CONSTANT_GAIN: LambdaSchedule = LambdaSchedule {
        lambda1: 1.0,
        lambda2: 0.0,
    };

    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda1 <= 1.0) {
            return Err(Error::Validation(format!("lambda1 must lie in (0, 1], got {lambda1}")));
        }
        if !(0.0..=2.0).contains(&lambda2) {
            return Err(Error::Validation(format!("lambda2 must lie in [0, 2], got {lambda2}")));
        }
        Ok(Self { lambda1, lambda2 })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self::FORGETTING
    }
}

/// Block-diagonal regressor: `outputs` copies of one feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRegressor {
    feature: DVector<f64>,
    outputs: usize,
}

impl BlockRegressor {
    pub fn new(feature: DVector<f64>, outputs: usize) -> Self {
        Self { feature, outputs }
    }

    pub fn feature(&self) -> &DVector<f64> {
        &self.feature
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Materialize the `outputs × (outputs·d)` block-diagonal matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.feature.len();
        let mut m = DMatrix::zeros(self.outputs, self.outputs * d);
        for j in 0..self.outputs {
            m.view_mut((j, j * d), (1, d)).copy_from(&self.feature.transpose());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    theta: DMatrix<f64>,
    gain: DMatrix<f64>,
    schedule: LambdaSchedule,
    gain_scale: f64,
}

impl AdaptiveState {
    /// Start from pretrained parameters (`d × outputs`) with `F = scale · I`.
    pub fn new(theta: DMatrix<f64>, gain_scale: f64, schedule: LambdaSchedule) -> Result<Self> {
        ensure_finite(theta.as_slice(), "adaptive parameters")?;
        if !(gain_scale > 0.0 && gain_scale.is_finite()) {
            return Err(Error::Validation(format!(
                "initial gain scale must be positive, got {gain_scale}"
            )));
        }
        let d = theta.nrows();
        Ok(Self {
            theta,
            gain: DMatrix::identity(d, d) * gain_scale,
            schedule,
            gain_scale,
        })
    }

    pub fn with_gain(
        theta: DMatrix<f64>,
        gain: DMatrix<f64>,
        gain_scale: f64,
        schedule: LambdaSchedule,
    ) -> Result<Self> {
        let mut state = Self::new(theta, gain_scale, schedule)?;
        check_dim("adaptive gain rows", state.feature_dim(), gain.nrows())?;
        check_dim("adaptive gain cols", state.feature_dim(), gain.ncols())?;
        check_gain_health(&gain)?;
        state.gain = gain;
        Ok(state)
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// Column-stacked parameter vector.
    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.theta.as_slice())
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn schedule(&self) -> LambdaSchedule {
        self.schedule
    }

    pub fn gain_scale(&self) -> f64 {
        self.gain_scale
    }

    pub fn feature_dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.theta.ncols()
    }

    pub fn reset_gain(&mut self) {
        let d = self.feature_dim();
        self.gain = DMatrix::identity(d, d) * self.gain_scale;
    }

    /// `θ̂ᵀ φ`, one entry per output.
    pub fn predict(&self, reg: &BlockRegressor) -> Result<DVector<f64>> {
        self.check(reg)?;
        Ok(self.theta.tr_mul(&reg.feature))
    }

    /// Apply one measurement. Returns the a-priori residual.
    ///
    /// On [`Error::NumericalDegradation`] the state is unchanged.
    pub fn update(&mut self, reg: &BlockRegressor, observed: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(reg)?;
        check_dim("adaptive observation", self.outputs(), observed.len())?;
        let residual = observed - self.theta.tr_mul(&reg.feature);
        let gain = gain_update(&self.gain, &reg.feature, self.schedule)?;
        let step = &gain * &reg.feature;
        self.theta.ger(1.0, &step, &residual, 1.0);
        self.gain = gain;
        Ok(residual)
    }

    fn check(&self, reg: &BlockRegressor) -> Result<()> {
        check_dim("block regressor feature", self.feature_dim(), reg.feature.len())?;
        check_dim("block regressor outputs", self.outputs(), reg.outputs)
    }
}

fn check_gain_health(gain: &DMatrix<f64>) -> Result<()> {
    let asymmetry = (gain - gain.transpose()).amax();
    if !asymmetry.is_finite() || asymmetry > SYMMETRY_TOLERANCE * gain.amax().max(1.0) {
        return Err(Error::Validation(format!(
            "gain matrix is not symmetric (max asymmetry {asymmetry:e})"
        )));
    }
    if gain.clone().cholesky().is_none() {
        return Err(Error::NumericalDegradation {
            min_eigenvalue: gain.clone().symmetric_eigenvalues().min(),
        });
    }
    Ok(())
}

/// Gain recursion `F' = (1/λ₁)[F − λ₂ F φ φᵀ F / (λ₁ + λ₂ φᵀ F φ)]`.
///
/// The result is symmetrized and checked for positive definiteness.
pub fn gain_update(gain: &DMatrix<f64>, feature: &DVector<f64>, schedule: LambdaSchedule) -> Result<DMatrix<f64>> {
    check_dim("gain feature", gain.nrows(), feature.len())?;
    let (l1, l2) = (schedule.lambda1, schedule.lambda2);
    let f_phi = gain * feature;
    let denom = l1 + l2 * feature.dot(&f_phi);
    let mut next = gain.clone();
    if l2 != 0.0 {
        next.ger(-l2 / denom, &f_phi, &f_phi, 1.0);
    }
    if l1 != 1.0 {
        next /= l1;
    }
    let symmetric = (&next + next.transpose()) * 0.5;
    if symmetric.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDegradation {
            min_eigenvalue: f64::NAN,
        });
    }
    if symmetric.clone().cholesky().is_none() {
        return Err(Error::NumericalDegradation {
            min_eigenvalue: symmetric.symmetric_eigenvalues().min(),
        });
    }
    Ok(symmetric)
}

/// A-priori prediction `Φ θ̂` for the motion horizon.
pub fn apriori_predict(state: &AdaptiveState, reg: &BlockRegressor) -> Result<PredictedTrajectory> {
    check_dim("adaptive outputs", FUTURE_DIM, state.outputs())?;
    PredictedTrajectory::from_slice(state.predict(reg)?.as_slice())
}

/// Functional form of [`AdaptiveState::update`].
pub fn theta_update(
    state: &AdaptiveState,
    reg: &BlockRegressor,
    observed: &PredictedTrajectory,
) -> Result<AdaptiveState> {
    let mut next = state.clone();
    next.update(reg, &DVector::from_column_slice(observed.as_slice()))?;
    Ok(next)
}
