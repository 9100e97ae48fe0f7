//! Online predictors used inside the closed loop.
//!
//! All four models share one shape: a feature row computed from the motion
//! window, multiplied by a `d × 9` parameter matrix. The fixed models keep
//! the matrix frozen; the adaptive ones correct it with RLS.
//!
//! A prediction issued at frame `k` covers frames `k+1..=k+M`, so its full
//! target is only observed `M` frames later. Each regressor is therefore
//! queued and consumed once its horizon has been realized.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::LinearParams;
use crate::network::NetworkParams;
use crate::rls::{apriori_predict, AdaptiveState, BlockRegressor, LambdaSchedule};
use crate::types::{
    build_linear_regressor, build_network_input, MotionWindow, Position, PredictedTrajectory, FUTURE_DIM, HORIZON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    None,
    FixedLinear,
    FixedNetwork,
    AdaptiveLinear,
    AdaptiveNetwork,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::AdaptiveLinear,
        PredictorKind::AdaptiveNetwork,
        PredictorKind::FixedNetwork,
        PredictorKind::FixedLinear,
        PredictorKind::None,
    ];

    pub const MODELS: [PredictorKind; 4] = [
        PredictorKind::AdaptiveLinear,
        PredictorKind::AdaptiveNetwork,
        PredictorKind::FixedNetwork,
        PredictorKind::FixedLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::None => "none",
            PredictorKind::FixedLinear => "fixed-linear",
            PredictorKind::FixedNetwork => "fixed-network",
            PredictorKind::AdaptiveLinear => "adaptive-linear",
            PredictorKind::AdaptiveNetwork => "adaptive-network",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, PredictorKind::AdaptiveLinear | PredictorKind::AdaptiveNetwork)
    }

    pub fn uses_network(self) -> bool {
        matches!(self, PredictorKind::FixedNetwork | PredictorKind::AdaptiveNetwork)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown predictor '{s}'")))
    }
}

/// Maps a motion window to the feature row of a linear-in-parameters model.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    /// `[past, label]`
    Linear,
    /// Hidden ReLU activations of a frozen network.
    Network(NetworkParams),
}

impl FeatureModel {
    pub fn features(&self, window: &MotionWindow) -> Result<DVector<f64>> {
        match self {
            FeatureModel::Linear => Ok(build_linear_regressor(window).into_inner()),
            FeatureModel::Network(params) => params.hidden_vector(build_network_input(window).as_vector()),
        }
    }

    pub fn regressor(&self, window: &MotionWindow) -> Result<BlockRegressor> {
        Ok(BlockRegressor::new(self.features(window)?, FUTURE_DIM))
    }
}

/// Pretrained parameters shared (read-only) by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub linear: LinearParams,
    pub network: NetworkParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSettings {
    pub schedule: LambdaSchedule,
    pub gain_scale: f64,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            schedule: LambdaSchedule::FORGETTING,
            gain_scale: crate::rls::DEFAULT_GAIN_SCALE,
        }
    }
}

/// One adaptation iteration.
///
/// `matured` is an earlier regressor together with the positions that have
/// now been observed over its whole horizon. The gain and parameters are
/// updated with it first, then the prediction for the current window is
/// issued from the updated parameters. Returns the current regressor (to be
/// matured later) and the prediction.
pub fn adaptive_step(
    state: &mut AdaptiveState,
    features: &FeatureModel,
    window: &MotionWindow,
    matured: Option<(&BlockRegressor, &PredictedTrajectory)>,
) -> Result<(BlockRegressor, PredictedTrajectory)> {
    let regressor = features.regressor(window)?;
    if let Some((old, observed)) = matured {
        let observed = DVector::from_column_slice(observed.as_slice());
        match state.update(old, &observed) {
            Ok(_) => {}
            Err(Error::NumericalDegradation { min_eigenvalue }) => {
                warn!("adaptation gain degraded (min eigenvalue {min_eigenvalue:e}); resetting");
                state.reset_gain();
            }
            Err(e) => return Err(e),
        }
    }
    let prediction = apriori_predict(state, &regressor)?;
    Ok((regressor, prediction))
}

/// Streaming predictor fed one warm window per frame.
#[derive(Debug, Clone)]
pub struct OnlinePredictor {
    kind: PredictorKind,
    features: FeatureModel,
    state: AdaptiveState,
    adapt: bool,
    pending: VecDeque<BlockRegressor>,
    recent: VecDeque<Position>,
}

impl OnlinePredictor {
    pub fn new(kind: PredictorKind, models: &TrainedModels, settings: &AdaptationSettings) -> Result<Option<Self>> {
        let (features, theta) = match kind {
            PredictorKind::None => return Ok(None),
            PredictorKind::FixedLinear | PredictorKind::AdaptiveLinear => {
                (FeatureModel::Linear, models.linear.theta().clone())
            }
            PredictorKind::FixedNetwork | PredictorKind::AdaptiveNetwork => (
                FeatureModel::Network(models.network.clone()),
                models.network.output_weights().clone(),
            ),
        };
        Self::from_parts(kind, features, theta, settings, kind.is_adaptive()).map(Some)
    }

    pub fn from_parts(
        kind: PredictorKind,
        features: FeatureModel,
        theta: DMatrix<f64>,
        settings: &AdaptationSettings,
        adapt: bool,
    ) -> Result<Self> {
        Ok(Self {
            kind,
            features,
            state: AdaptiveState::new(theta, settings.gain_scale, settings.schedule)?,
            adapt,
            pending: VecDeque::with_capacity(HORIZON + 1),
            recent: VecDeque::with_capacity(HORIZON + 1),
        })
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn state(&self) -> &AdaptiveState {
        &self.state
    }

    /// Disable online correction; predictions then match the frozen model.
    pub fn set_adaptation(&mut self, enabled: bool) {
        self.adapt = enabled;
    }

    /// Consume the window ending at the newest smoothed position.
    pub fn step(&mut self, window: &MotionWindow) -> Result<PredictedTrajectory> {
        if self.recent.len() == HORIZON {
            self.recent.pop_front();
        }
        self.recent.push_back(window.latest());

        let matured = if self.adapt && self.pending.len() == HORIZON {
            let old = self.pending.pop_front().expect("pending horizon");
            let positions: Vec<Position> = self.recent.iter().copied().collect();
            Some((old, PredictedTrajectory::from_positions(&positions)?))
        } else {
            None
        };
        let (regressor, prediction) = adaptive_step(
            &mut self.state,
            &self.features,
            window,
            matured.as_ref().map(|(r, t)| (r, t)),
        )?;
        if self.adapt {
            self.pending.push_back(regressor);
        }
        Ok(prediction)
    }

    /// Forget queued regressors after a stream restart.
    pub fn restart_stream(&mut self) {
        self.pending.clear();
        self.recent.clear();
    }
}
