//! Experiment configuration shared by every pipeline stage.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::human::{default_patterns, MotionPattern};
use crate::linear::TrainingConfig;
use crate::network::DEFAULT_HIDDEN;
use crate::predictor::{AdaptationSettings, PredictorKind};
use crate::rls::{LambdaSchedule, DEFAULT_GAIN_SCALE};
use crate::robot::{RobotScene, SafetyConfig, TrialConfig};
use crate::seeding::derive_seed;
use crate::types::{Position, HORIZON, WINDOW_LEN};

/// Sub-stream tags for [`derive_seed`].
const STREAM_DATA: u64 = 1;
const STREAM_TRAIN_LINEAR: u64 = 2;
const STREAM_TRAIN_NETWORK: u64 = 3;
const STREAM_TRIAL: u64 = 4;
const STREAM_DRIFT: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub patterns: Vec<MotionPattern>,
    pub trajectories_per_pattern: usize,
    pub trials_per_pattern_per_model: usize,
    /// Predictor settings to run; `none` is the no-prediction baseline.
    pub models: Vec<PredictorKind>,
    pub window_len: usize,
    pub horizon: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gain_scale: f64,
    pub d_safe: f64,
    pub replan_distance: f64,
    pub replan_period_frames: u64,
    pub trial_frames: usize,
    /// Drift magnitude per 100 frames; each trial draws a horizontal heading.
    pub drift_per_100_frames: f64,
    pub scene: RobotScene,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let safety = SafetyConfig::default();
        let training = TrainingConfig::default();
        Self {
            master_seed: 0,
            patterns: default_patterns(),
            trajectories_per_pattern: 30,
            trials_per_pattern_per_model: 20,
            models: PredictorKind::ALL.to_vec(),
            window_len: WINDOW_LEN,
            horizon: HORIZON,
            hidden_units: DEFAULT_HIDDEN,
            learning_rate: training.learning_rate,
            epochs: training.epochs,
            minibatch_size: training.minibatch_size,
            lambda1: LambdaSchedule::FORGETTING.lambda1(),
            lambda2: LambdaSchedule::FORGETTING.lambda2(),
            gain_scale: DEFAULT_GAIN_SCALE,
            d_safe: safety.d_safe,
            replan_distance: safety.replan_distance,
            replan_period_frames: safety.replan_period_frames,
            trial_frames: 300,
            drift_per_100_frames: 0.1,
            scene: RobotScene::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len != WINDOW_LEN || self.horizon != HORIZON {
            return Err(Error::Config(format!(
                "window length and horizon are fixed at {WINDOW_LEN} and {HORIZON}"
            )));
        }
        if self.patterns.is_empty() {
            return Err(Error::Config("no motion patterns".into()));
        }
        for p in &self.patterns {
            p.validate()?;
        }
        let mut names: Vec<&str> = self.patterns.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.patterns.len() {
            return Err(Error::Config("pattern names must be unique".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no predictor settings to run".into()));
        }
        if self.hidden_units == 0 {
            return Err(Error::Config("hidden layer needs at least one unit".into()));
        }
        if self.trials_per_pattern_per_model == 0 {
            return Err(Error::Config("at least one trial per cell is required".into()));
        }
        if !(self.drift_per_100_frames >= 0.0 && self.drift_per_100_frames.is_finite()) {
            return Err(Error::Config("drift must be finite and non-negative".into()));
        }
        self.training(0).validate()?;
        self.adaptation()?;
        self.safety().validate()?;
        self.scene.validate()?;
        Ok(())
    }

    /// Canonical JSON, embedded in every output file.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn data_seed(&self) -> u64 {
        derive_seed(self.master_seed, &[STREAM_DATA])
    }

    pub fn training(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            seed,
        }
    }

    pub fn linear_training(&self) -> TrainingConfig {
        self.training(derive_seed(self.master_seed, &[STREAM_TRAIN_LINEAR]))
    }

    pub fn network_training(&self) -> TrainingConfig {
        self.training(derive_seed(self.master_seed, &[STREAM_TRAIN_NETWORK]))
    }

    pub fn adaptation(&self) -> Result<AdaptationSettings> {
        if !(self.gain_scale > 0.0 && self.gain_scale.is_finite()) {
            return Err(Error::Config(format!(
                "gain scale must be positive, got {}",
                self.gain_scale
            )));
        }
        Ok(AdaptationSettings {
            schedule: LambdaSchedule::new(self.lambda1, self.lambda2)?,
            gain_scale: self.gain_scale,
        })
    }

    pub fn safety(&self) -> SafetyConfig {
        SafetyConfig {
            d_safe: self.d_safe,
            replan_distance: self.replan_distance,
            replan_period_frames: self.replan_period_frames,
        }
    }

    /// Seed of the human stream for one (pattern, trial) cell; shared by
    /// every predictor setting so comparisons are paired.
    pub fn trial_seed(&self, pattern: usize, trial: usize) -> u64 {
        derive_seed(self.master_seed, &[STREAM_TRIAL, pattern as u64, trial as u64])
    }

    pub fn trial_drift(&self, pattern: usize, trial: usize) -> Position {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.master_seed,
            &[STREAM_DRIFT, pattern as u64, trial as u64],
        ));
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        Position::new(heading.cos(), heading.sin(), 0.0) * self.drift_per_100_frames
    }

    pub fn trial_config(&self, predictor: PredictorKind, pattern: usize, trial: usize) -> Result<TrialConfig> {
        let base = self
            .patterns
            .get(pattern)
            .ok_or_else(|| Error::Config(format!("pattern index {pattern} out of range")))?;
        Ok(TrialConfig {
            predictor,
            pattern: base.clone(),
            drift: self.trial_drift(pattern, trial),
            human_offset: Position::zeros(),
            human_present: true,
            seed: self.trial_seed(pattern, trial),
            frames: self.trial_frames,
            safety: self.safety(),
            scene: self.scene.clone(),
            adaptation: self.adaptation()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"master_seed": 9, "epochs": 5}"#).unwrap();
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.epochs, 5);
        assert_eq!(c.trials_per_pattern_per_model, 20);
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epochz": 5}"#).is_err());
    }

    #[test]
    fn horizon_is_fixed() {
        let c = ExperimentConfig {
            horizon: 4,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn bad_forgetting_factor_is_rejected() {
        let c = ExperimentConfig {
            lambda1: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn trial_seeds_are_paired_across_predictors() {
        let c = ExperimentConfig::default();
        let a = c.trial_config(PredictorKind::None, 2, 7).unwrap();
        let b = c.trial_config(PredictorKind::AdaptiveNetwork, 2, 7).unwrap();
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.drift, b.drift);
        assert!((a.drift.norm() - 0.1).abs() < 1e-12);
        assert_ne!(a.seed, c.trial_config(PredictorKind::None, 2, 8).unwrap().seed);
    }
}
