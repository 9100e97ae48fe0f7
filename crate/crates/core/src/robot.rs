//! Closed-loop collaboration trial.
//!
//! Each frame: the wrist measurement is smoothed and windowed, the predictor
//! (if any) issues the next three positions, the long-term planner replans
//! on a new task or when the human comes within `replan_distance`, and the
//! short-term layer takes one speed-limited step that never closes in on a
//! human inside `d_safe`.
//!
//! The robot body is the segment from its fixed base to the end-effector;
//! human-robot distance is point-to-segment distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::LowPassFilter;
use crate::geometry::{any_orthogonal, closest_point_on_segment, point_segment_distance};
use crate::human::{apply_drift, generate_trajectory, MotionPattern};
use crate::predictor::{AdaptationSettings, OnlinePredictor, PredictorKind, TrainedModels};
use crate::types::{JointSample, Position, PredictedTrajectory};
use crate::window::WindowState;

/// End-effector counts as arrived within this distance of its target.
pub const ARRIVAL_TOLERANCE: f64 = 1e-9;
/// Detours pass this fraction outside the keep-out radius.
const DETOUR_MARGIN: f64 = 0.05;
const DETOUR_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotScene {
    pub base: Position,
    pub idle: Position,
    /// Fetch targets, visited in order and then cyclically.
    pub targets: Vec<Position>,
    /// Meters per frame.
    pub v_max: f64,
}

impl Default for RobotScene {
    fn default() -> Self {
        Self {
            base: Position::zeros(),
            idle: Position::new(0.30, 0.0, 0.40),
            targets: vec![
                // disk
                Position::new(0.55, -0.35, 0.10),
                // RAM
                Position::new(0.55, 0.35, 0.10),
            ],
            v_max: 0.02,
        }
    }
}

impl RobotScene {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("robot scene needs at least one target".into()));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return Err(Error::Config(format!("v_max must be positive, got {}", self.v_max)));
        }
        Ok(())
    }

    pub fn translated(&self, offset: Position) -> RobotScene {
        RobotScene {
            base: self.base + offset,
            idle: self.idle + offset,
            targets: self.targets.iter().map(|t| t + offset).collect(),
            v_max: self.v_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    pub d_safe: f64,
    /// Proximity that triggers a long-term replan.
    pub replan_distance: f64,
    /// While proximity persists, replan at most this often (1 Hz).
    pub replan_period_frames: u64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            d_safe: 0.3,
            replan_distance: 0.4,
            replan_period_frames: 20,
        }
    }
}

impl SafetyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_safe.is_nan() || self.d_safe <= 0.0 {
            return Err(Error::Config(format!("d_safe must be positive, got {}", self.d_safe)));
        }
        if self.replan_distance.is_nan() || self.replan_distance < self.d_safe {
            return Err(Error::Config("replan distance must be at least d_safe".into()));
        }
        if self.replan_period_frames == 0 {
            return Err(Error::Config("replan period must be at least one frame".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub ee: Position,
    pub base: Position,
    pub target: Position,
    pub v_max: f64,
}

impl RobotState {
    pub fn distance_to(&self, point: &Position) -> f64 {
        point_segment_distance(point, &self.base, &self.ee)
    }
}

/// End-effector path toward the current target.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    waypoints: Vec<Position>,
    next: usize,
    target: Position,
    blocked: bool,
}

impl Plan {
    pub fn waypoints(&self) -> &[Position] {
        &self.waypoints
    }

    pub fn remaining(&self) -> &[Position] {
        &self.waypoints[self.next..]
    }

    pub fn target(&self) -> Position {
        self.target
    }

    /// The target sat inside a keep-out sphere; the path ends at a standoff.
    pub fn is_blocked(&self) -> bool {
        self.blocked
    }
}

fn inside_any(p: &Position, obstacles: &[Position], radius: f64) -> bool {
    obstacles.iter().any(|c| (p - c).norm() < radius)
}

fn standoff(goal: Position, from: &Position, obstacles: &[Position], radius: f64) -> Position {
    let mut g = goal;
    for _ in 0..16 {
        let mut moved = false;
        for c in obstacles {
            let off = g - c;
            if off.norm() < radius {
                let dir = if off.norm() > 1e-12 {
                    off.normalize()
                } else if (from - c).norm() > 1e-12 {
                    (from - c).normalize()
                } else {
                    Position::z()
                };
                g = c + dir * radius * (1.0 + 1e-9);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    g
}

fn route(a: Position, b: Position, obstacles: &[Position], radius: f64, depth: usize, out: &mut Vec<Position>) {
    let ab = b - a;
    if depth == 0 || ab.norm() < 1e-12 {
        out.push(b);
        return;
    }
    // most intrusive sphere that does not contain either endpoint
    let worst = obstacles
        .iter()
        .filter(|c| (a - *c).norm() >= radius && (b - *c).norm() >= radius)
        .map(|c| (c, point_segment_distance(c, &a, &b)))
        .filter(|(_, d)| *d < radius)
        .min_by(|x, y| x.1.total_cmp(&y.1));
    let Some((c, _)) = worst else {
        out.push(b);
        return;
    };
    let t = ab.normalize();
    let q = closest_point_on_segment(c, &a, &b);
    let lateral = q - c;
    let n = if lateral.norm() > 1e-9 {
        lateral.normalize()
    } else {
        // pass over the top when the sphere sits exactly on the path
        let up = Position::z() - t * t.z;
        if up.norm() > 1e-9 {
            up.normalize()
        } else {
            any_orthogonal(&t)
        }
    };
    let r = radius * (1.0 + DETOUR_MARGIN);
    let before = c + n * r - t * r;
    let after = c + n * r + t * r;
    let mut corners = Vec::with_capacity(2);
    if (before - a).dot(&t) > 0.0 {
        corners.push(before);
    }
    if (b - after).dot(&t) > 0.0 {
        corners.push(after);
    }
    if corners.is_empty() {
        corners.push(c + n * r);
    }
    let mut from = a;
    for corner in corners {
        route(from, corner, obstacles, radius, depth - 1, out);
        from = corner;
    }
    route(from, b, obstacles, radius, depth - 1, out);
}

/// Straight path to the target, detouring around a keep-out sphere of radius
/// `d_safe` at each obstacle. A target inside a sphere is replaced by the
/// nearest standoff point and the plan is marked blocked.
pub fn long_term_plan(robot: &RobotState, obstacles: &[Position], d_safe: f64) -> Plan {
    let blocked = inside_any(&robot.target, obstacles, d_safe);
    let goal = if blocked {
        standoff(robot.target, &robot.ee, obstacles, d_safe)
    } else {
        robot.target
    };
    let mut waypoints = Vec::new();
    route(robot.ee, goal, obstacles, d_safe, DETOUR_DEPTH, &mut waypoints);
    Plan {
        waypoints,
        next: 0,
        target: robot.target,
        blocked,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: RobotState,
    /// The safety layer modified the nominal step.
    pub projected: bool,
}

fn step_is_safe(robot: &RobotState, velocity: &Position, obstacles: &[Position], d_safe: f64) -> bool {
    let next = robot.ee + velocity;
    obstacles.iter().all(|o| {
        let before = robot.distance_to(o);
        let after = point_segment_distance(o, &robot.base, &next);
        after >= d_safe || after >= before - 1e-12
    })
}

fn clamp_speed(v: Position, v_max: f64) -> Position {
    let n = v.norm();
    if n > v_max {
        v * (v_max / n)
    } else {
        v
    }
}

/// Advance one frame along the plan under the safety constraint.
///
/// Obstacles are the current human position plus any predicted positions.
/// A step that would bring the body closer than `d_safe` to an obstacle (and
/// closer than it already is) loses its approaching component and gains an
/// escape component; if that is still unsafe the robot escapes or holds.
pub fn short_term_step(
    robot: &RobotState,
    plan: &mut Plan,
    human_now: Option<&Position>,
    predicted: Option<&PredictedTrajectory>,
    d_safe: f64,
) -> StepOutcome {
    while plan.next < plan.waypoints.len() && (plan.waypoints[plan.next] - robot.ee).norm() <= ARRIVAL_TOLERANCE {
        plan.next += 1;
    }
    let nominal = match plan.waypoints.get(plan.next) {
        Some(wp) => clamp_speed(wp - robot.ee, robot.v_max),
        None => Position::zeros(),
    };

    let mut obstacles: Vec<Position> = human_now.into_iter().copied().collect();
    if let Some(p) = predicted {
        obstacles.extend(p.positions());
    }

    let mut velocity = nominal;
    let mut projected = false;
    if !step_is_safe(robot, &velocity, &obstacles, d_safe) {
        projected = true;
        let mut escape = Position::zeros();
        for o in &obstacles {
            let before = robot.distance_to(o);
            let next = robot.ee + nominal;
            let after = point_segment_distance(o, &robot.base, &next);
            if after >= d_safe || after >= before {
                continue;
            }
            let q = closest_point_on_segment(o, &robot.base, &robot.ee);
            let away = q - o;
            let u = if away.norm() > 1e-12 {
                away.normalize()
            } else {
                any_orthogonal(&(robot.ee - robot.base))
            };
            let approach = velocity.dot(&u);
            if approach < 0.0 {
                velocity -= u * approach;
            }
            let depth = ((d_safe - before) / d_safe).clamp(0.0, 1.0);
            escape += u * depth;
        }
        velocity = clamp_speed(velocity + escape * robot.v_max, robot.v_max);
        if !step_is_safe(robot, &velocity, &obstacles, d_safe) {
            velocity = if escape.norm() > 1e-12 {
                escape.normalize() * robot.v_max
            } else {
                Position::zeros()
            };
            if !step_is_safe(robot, &velocity, &obstacles, d_safe) {
                velocity = Position::zeros();
            }
        }
    }

    let mut state = *robot;
    state.ee += velocity;
    StepOutcome { state, projected }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanReason {
    /// A new fetch target was issued (including resuming a blocked fetch).
    NewTask,
    /// The human (or a predicted human position) came within `replan_distance`.
    Proximity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub predictor: PredictorKind,
    pub pattern: MotionPattern,
    /// Drift of the human motion per 100 frames.
    pub drift: Position,
    /// Rigid offset applied to the human motion.
    pub human_offset: Position,
    pub human_present: bool,
    pub seed: u64,
    pub frames: usize,
    pub safety: SafetyConfig,
    pub scene: RobotScene,
    pub adaptation: AdaptationSettings,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.safety.validate()?;
        self.scene.validate()?;
        self.pattern.validate()?;
        if self.frames < 2 * crate::types::WINDOW_LEN {
            return Err(Error::Config(format!(
                "trial of {} frames is shorter than the window warm-up",
                self.frames
            )));
        }
        Ok(())
    }

    /// The same trial with the human removed.
    pub fn without_human(&self) -> TrialConfig {
        TrialConfig {
            predictor: PredictorKind::None,
            human_present: false,
            ..self.clone()
        }
    }

    /// Raw wrist measurements for this trial; identical for every predictor.
    pub fn human_stream(&self) -> Result<Vec<JointSample>> {
        let period = self.pattern.duration_frames() as usize;
        let cycles = self.frames.div_ceil(period).max(1);
        let pattern = apply_drift(
            &self.pattern.repeated(cycles)?.translated(self.human_offset),
            self.drift,
        )?;
        let mut samples = generate_trajectory(&pattern, self.seed)?.samples;
        samples.truncate(self.frames);
        Ok(samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: u64,
    /// Smoothed wrist position, if a human is present.
    pub human: Option<Position>,
    /// End-effector position at this frame, before stepping.
    pub robot: Position,
    pub target: Position,
    pub prediction: Option<PredictedTrajectory>,
    pub min_dist: Option<f64>,
    pub replan: Option<ReplanReason>,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub config: TrialConfig,
    pub records: Vec<FrameRecord>,
}

impl TrialLog {
    pub fn replan_count(&self, reason: ReplanReason) -> usize {
        self.records.iter().filter(|r| r.replan == Some(reason)).count()
    }

    pub fn first_replan(&self, reason: ReplanReason) -> Option<u64> {
        self.records.iter().find(|r| r.replan == Some(reason)).map(|r| r.frame)
    }

    pub fn first_projection(&self) -> Option<u64> {
        self.records.iter().find(|r| r.projected).map(|r| r.frame)
    }
}

/// Execute one closed-loop trial.
pub fn run_trial(config: &TrialConfig, models: Option<&TrainedModels>) -> Result<TrialLog> {
    config.validate()?;
    let mut predictor = match (config.predictor, models) {
        (PredictorKind::None, _) => None,
        (kind, Some(m)) => OnlinePredictor::new(kind, m, &config.adaptation)?,
        (kind, None) => return Err(Error::Config(format!("predictor '{kind}' needs trained models"))),
    };
    let stream = if config.human_present {
        Some(config.human_stream()?)
    } else {
        None
    };

    let scene = &config.scene;
    let safety = &config.safety;
    let mut robot = RobotState {
        ee: scene.idle,
        base: scene.base,
        target: scene.targets[0],
        v_max: scene.v_max,
    };
    let mut target_index = 0usize;
    let mut plan: Option<Plan> = None;
    let mut filter = LowPassFilter::new();
    let mut window = WindowState::new(config.pattern.label);
    let mut was_close = false;
    let mut last_replan = 0u64;
    let mut records = Vec::with_capacity(config.frames);

    for frame in 0..config.frames as u64 {
        let human = match &stream {
            Some(samples) => {
                let raw = samples[frame as usize];
                let smoothed = filter.update(raw.position)?;
                Some(JointSample::new(smoothed, frame)?)
            }
            None => None,
        };
        let mut prediction = None;
        if let Some(sample) = human {
            if let Some(w) = window.push_sample(sample)? {
                if let Some(p) = predictor.as_mut() {
                    prediction = Some(p.step(&w)?);
                }
            }
        }
        let human_pos = human.map(|s| s.position);

        let mut obstacles: Vec<Position> = human_pos.into_iter().collect();
        if let Some(p) = &prediction {
            obstacles.extend(p.positions());
        }

        let mut replan = None;
        if plan.is_none() {
            replan = Some(ReplanReason::NewTask);
        } else if (robot.ee - robot.target).norm() <= ARRIVAL_TOLERANCE {
            target_index = (target_index + 1) % scene.targets.len();
            robot.target = scene.targets[target_index];
            replan = Some(ReplanReason::NewTask);
        }
        let close = obstacles.iter().any(|o| robot.distance_to(o) < safety.replan_distance);
        if replan.is_none() && close && (!was_close || frame - last_replan >= safety.replan_period_frames) {
            replan = Some(ReplanReason::Proximity);
        }
        if replan.is_none() {
            if let Some(p) = &plan {
                if p.is_blocked() && !inside_any(&robot.target, &obstacles, safety.d_safe) {
                    replan = Some(ReplanReason::NewTask);
                }
            }
        }
        was_close = close;
        if replan.is_some() {
            plan = Some(long_term_plan(&robot, &obstacles, safety.d_safe));
            last_replan = frame;
        }

        let min_dist = human_pos.map(|h| robot.distance_to(&h));
        let current_plan = plan.as_mut().expect("plan exists after first frame");
        let outcome = short_term_step(
            &robot,
            current_plan,
            human_pos.as_ref(),
            prediction.as_ref(),
            safety.d_safe,
        );
        records.push(FrameRecord {
            frame,
            human: human_pos,
            robot: robot.ee,
            target: robot.target,
            prediction,
            min_dist,
            replan,
            projected: outcome.projected,
        });
        robot = outcome.state;
    }

    Ok(TrialLog {
        config: config.clone(),
        records,
    })
}
