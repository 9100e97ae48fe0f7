//! Synthetic wrist motion: four waypoint patterns interpolated with
//! minimum-jerk segments, plus Gaussian measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::LowPassFilter;
use crate::linear::TrainingPair;
use crate::seeding::derive_seed;
use crate::types::{
    ensure_finite, ActionLabel, JointSample, MotionWindow, Position, PredictedTrajectory, HORIZON, WINDOW_LEN,
};

/// Frames over which [`apply_drift`]'s drift vector accumulates once.
pub const DRIFT_PERIOD_FRAMES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Position,
    pub frame: u64,
}

impl Waypoint {
    pub fn new(position: [f64; 3], frame: u64) -> Self {
        Self {
            position: Position::from(position),
            frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPattern {
    pub name: String,
    pub label: ActionLabel,
    /// Scheduled positions; the first is at frame 0, frames strictly increase.
    pub waypoints: Vec<Waypoint>,
    /// Per-axis measurement noise, meters.
    pub noise_sigma: f64,
}

/// Minimum-jerk blend `10τ³ − 15τ⁴ + 6τ⁵`: zero velocity and acceleration at both ends.
fn min_jerk(tau: f64) -> f64 {
    let t3 = tau * tau * tau;
    t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

impl MotionPattern {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Validation(format!(
                "pattern '{}' needs at least two waypoints",
                self.name
            )));
        }
        if self.waypoints[0].frame != 0 {
            return Err(Error::Validation(format!(
                "pattern '{}' must start at frame 0",
                self.name
            )));
        }
        for pair in self.waypoints.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(Error::Validation(format!(
                    "pattern '{}' has a zero-duration segment at frame {}",
                    self.name, pair[1].frame
                )));
            }
        }
        for w in &self.waypoints {
            ensure_finite(w.position.as_slice(), "waypoint")?;
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if self.duration_frames() < 2 * WINDOW_LEN as u64 {
            return Err(Error::Validation(format!(
                "pattern '{}' lasts {} frames, shorter than the window warm-up",
                self.name,
                self.duration_frames()
            )));
        }
        Ok(())
    }

    pub fn duration_frames(&self) -> u64 {
        self.waypoints.last().map_or(0, |w| w.frame)
    }

    /// Noise-free position at a (possibly fractional) frame; clamped to the ends.
    pub fn position_at(&self, frame: f64) -> Position {
        let wps = &self.waypoints;
        if frame <= 0.0 {
            return wps[0].position;
        }
        let seg = wps.partition_point(|w| (w.frame as f64) <= frame);
        if seg >= wps.len() {
            return wps[wps.len() - 1].position;
        }
        let (a, b) = (&wps[seg - 1], &wps[seg]);
        let tau = (frame - a.frame as f64) / (b.frame - a.frame) as f64;
        a.position + (b.position - a.position) * min_jerk(tau)
    }

    /// Largest distance between consecutive waypoints divided by the shortest segment.
    pub fn speed_bound(&self) -> f64 {
        let gap = self
            .waypoints
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .fold(0.0, f64::max);
        let shortest = self
            .waypoints
            .windows(2)
            .map(|w| w[1].frame - w[0].frame)
            .min()
            .unwrap_or(1);
        gap / shortest as f64
    }

    /// Concatenate `cycles` copies; the pattern must end where it starts.
    pub fn repeated(&self, cycles: usize) -> Result<MotionPattern> {
        self.validate()?;
        let first = &self.waypoints[0].position;
        let last = &self.waypoints[self.waypoints.len() - 1].position;
        if (first - last).norm() > 1e-12 {
            return Err(Error::Validation(format!(
                "pattern '{}' is not cyclic and cannot be repeated",
                self.name
            )));
        }
        let period = self.duration_frames();
        let mut waypoints = self.waypoints.clone();
        for c in 1..cycles.max(1) as u64 {
            waypoints.extend(self.waypoints[1..].iter().map(|w| Waypoint {
                position: w.position,
                frame: w.frame + c * period,
            }));
        }
        Ok(MotionPattern {
            waypoints,
            ..self.clone()
        })
    }

    /// Rigidly translate every waypoint.
    pub fn translated(&self, offset: Position) -> MotionPattern {
        let mut out = self.clone();
        for w in &mut out.waypoints {
            w.position += offset;
        }
        out
    }
}

/// Progressive translation: a waypoint at frame `f` moves by `drift · f / 100`.
pub fn apply_drift(pattern: &MotionPattern, drift_per_100_frames: Position) -> Result<MotionPattern> {
    ensure_finite(drift_per_100_frames.as_slice(), "drift")?;
    let mut out = pattern.clone();
    for w in &mut out.waypoints {
        w.position += drift_per_100_frames * (w.frame as f64 / DRIFT_PERIOD_FRAMES);
    }
    Ok(out)
}

/// Raw (noisy) measurements of one pattern execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTrajectory {
    pub label: ActionLabel,
    pub seed: u64,
    pub samples: Vec<JointSample>,
}

impl HumanTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Low-pass filtered positions, one per sample.
    pub fn smoothed(&self) -> Result<Vec<Position>> {
        let mut filter = LowPassFilter::new();
        self.samples.iter().map(|s| filter.update(s.position)).collect()
    }
}

pub fn generate_trajectory(pattern: &MotionPattern, seed: u64) -> Result<HumanTrajectory> {
    pattern.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise =
        Normal::new(0.0, pattern.noise_sigma).map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
    let samples = (0..=pattern.duration_frames())
        .map(|frame| {
            let clean = pattern.position_at(frame as f64);
            let jitter = Position::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            JointSample::new(clean + jitter, frame)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HumanTrajectory {
        label: pattern.label,
        seed,
        samples,
    })
}

/// `per_pattern` seeded executions of every pattern, grouped by pattern.
pub fn generate_dataset(
    patterns: &[MotionPattern],
    per_pattern: usize,
    master_seed: u64,
) -> Result<Vec<HumanTrajectory>> {
    if patterns.is_empty() {
        return Err(Error::Argument("no motion patterns given".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..patterns.len())
        .flat_map(|p| (0..per_pattern).map(move |i| (p, i)))
        .collect();
    crate::parallel::map(&jobs, |&(p, i)| {
        generate_trajectory(&patterns[p], derive_seed(master_seed, &[p as u64, i as u64]))
    })
    .into_iter()
    .collect()
}

/// Supervised pairs from the smoothed stream: the window ending at frame `k`
/// and the [`HORIZON`] smoothed positions after it.
pub fn training_pairs(trajectory: &HumanTrajectory) -> Result<Vec<TrainingPair>> {
    pairs_from_smoothed(&trajectory.smoothed()?, trajectory.label)
}

pub fn pairs_from_smoothed(smoothed: &[Position], label: ActionLabel) -> Result<Vec<TrainingPair>> {
    if smoothed.len() < WINDOW_LEN + HORIZON {
        return Ok(Vec::new());
    }
    (WINDOW_LEN - 1..smoothed.len() - HORIZON)
        .map(|k| {
            Ok(TrainingPair {
                window: MotionWindow::from_positions(&smoothed[k + 1 - WINDOW_LEN..=k], label)?,
                target: PredictedTrajectory::from_positions(&smoothed[k + 1..=k + HORIZON])?,
            })
        })
        .collect()
}

pub fn dataset_pairs(trajectories: &[HumanTrajectory]) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for t in trajectories {
        pairs.extend(training_pairs(t)?);
    }
    Ok(pairs)
}

fn cyclic(name: &str, label: u8, keyframes: &[([f64; 3], u64)]) -> MotionPattern {
    MotionPattern {
        name: name.to_string(),
        label: ActionLabel::new(label).expect("built-in label"),
        waypoints: keyframes.iter().map(|&(p, f)| Waypoint::new(p, f)).collect(),
        noise_sigma: DEFAULT_NOISE_SIGMA,
    }
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;

/// The four built-in motions, each 100 frames (5 s) and cyclic.
///
/// Coordinates are in the robot base frame: the human stands on the +x side
/// and reaches into the robot's fetch area around x ≈ 0.55.
pub fn default_patterns() -> Vec<MotionPattern> {
    vec![
        // forward reach of 0.5 m toward the robot and back
        cyclic(
            "forward-reach",
            1,
            &[
                ([1.05, -0.15, 0.20], 0),
                ([1.05, -0.15, 0.20], 15),
                ([0.55, -0.15, 0.20], 40),
                ([0.55, -0.15, 0.20], 70),
                ([1.05, -0.15, 0.20], 100),
            ],
        ),
        // lateral sweep of 0.6 m across the fetch area
        cyclic(
            "lateral-sweep",
            2,
            &[
                ([0.80, -0.30, 0.25], 0),
                ([0.80, -0.30, 0.25], 15),
                ([0.80, 0.30, 0.25], 45),
                ([0.80, 0.30, 0.25], 65),
                ([0.80, -0.30, 0.25], 95),
                ([0.80, -0.30, 0.25], 100),
            ],
        ),
        // lift of 0.4 m and back down
        cyclic(
            "lift",
            3,
            &[
                ([0.75, 0.15, 0.00], 0),
                ([0.75, 0.15, 0.00], 15),
                ([0.75, 0.15, 0.40], 40),
                ([0.75, 0.15, 0.40], 70),
                ([0.75, 0.15, 0.00], 95),
                ([0.75, 0.15, 0.00], 100),
            ],
        ),
        // diagonal reach of 0.7 m into the robot workspace
        cyclic(
            "diagonal-reach",
            4,
            &[
                ([1.10, 0.35, 0.35], 0),
                ([1.10, 0.35, 0.35], 15),
                ([0.62, -0.10, 0.10], 45),
                ([0.62, -0.10, 0.10], 70),
                ([1.10, 0.35, 0.35], 100),
            ],
        ),
    ]
}
