//! Domain types shared by every predictor and by the simulation.
//!
//! A single tracked joint (the wrist) is described by 3-D positions in a
//! fixed world frame, in meters, sampled at 20 Hz.

use std::fmt;

use nalgebra::{DVector, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Number of past positions consumed by a predictor.
pub const WINDOW_LEN: usize = 3;
/// Number of future positions emitted by a predictor.
pub const HORIZON: usize = 3;
/// Flattened length of a [`MotionWindow`].
pub const PAST_DIM: usize = 3 * WINDOW_LEN;
/// Flattened length of a [`PredictedTrajectory`].
pub const FUTURE_DIM: usize = 3 * HORIZON;
/// Past positions plus the action label.
pub const LINEAR_REGRESSOR_DIM: usize = PAST_DIM + 1;
/// Past positions, the action label and a constant bias entry.
pub const NETWORK_INPUT_DIM: usize = PAST_DIM + 2;
/// Step duration in seconds.
pub const DT: f64 = 0.05;

pub type Position = Vector3<f64>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} contains non-finite values")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub position: Position,
    pub frame: u64,
}

impl JointSample {
    pub fn new(position: Position, frame: u64) -> Result<Self> {
        ensure_finite(position.as_slice(), "joint sample")?;
        Ok(Self { position, frame })
    }
}

/// Discrete motion category, one of four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActionLabel(u8);

impl ActionLabel {
    pub const ALL: [ActionLabel; 4] = [ActionLabel(1), ActionLabel(2), ActionLabel(3), ActionLabel(4)];

    pub fn new(value: u8) -> Result<Self> {
        if (1..=4).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Validation(format!("action label must be in 1..=4, got {value}")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<u8> for ActionLabel {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ActionLabel> for u8 {
    fn from(label: ActionLabel) -> u8 {
        label.0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The last [`WINDOW_LEN`] smoothed positions, oldest first, with the label.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionWindow {
    past: SVector<f64, PAST_DIM>,
    label: ActionLabel,
}

impl MotionWindow {
    pub fn new(past: SVector<f64, PAST_DIM>, label: ActionLabel) -> Result<Self> {
        ensure_finite(past.as_slice(), "motion window")?;
        Ok(Self { past, label })
    }

    pub fn from_positions(positions: &[Position], label: ActionLabel) -> Result<Self> {
        check_dim("motion window positions", WINDOW_LEN, positions.len())?;
        let past = SVector::<f64, PAST_DIM>::from_iterator(positions.iter().flat_map(|p| p.iter().copied()));
        Self::new(past, label)
    }

    pub fn from_slice(values: &[f64], label: ActionLabel) -> Result<Self> {
        check_dim("motion window", PAST_DIM, values.len())?;
        Self::new(SVector::from_column_slice(values), label)
    }

    pub fn past(&self) -> &SVector<f64, PAST_DIM> {
        &self.past
    }

    pub fn label(&self) -> ActionLabel {
        self.label
    }

    /// Most recent position in the window.
    pub fn latest(&self) -> Position {
        self.position(WINDOW_LEN - 1)
    }

    pub fn position(&self, index: usize) -> Position {
        Position::new(self.past[3 * index], self.past[3 * index + 1], self.past[3 * index + 2])
    }
}

/// [`HORIZON`] future positions, nearest step first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    future: SVector<f64, FUTURE_DIM>,
}

impl PredictedTrajectory {
    pub fn new(future: SVector<f64, FUTURE_DIM>) -> Result<Self> {
        ensure_finite(future.as_slice(), "predicted trajectory")?;
        Ok(Self { future })
    }

    pub fn zeros() -> Self {
        Self {
            future: SVector::zeros(),
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        check_dim("predicted trajectory", FUTURE_DIM, values.len())?;
        Self::new(SVector::from_column_slice(values))
    }

    pub fn from_positions(positions: &[Position]) -> Result<Self> {
        check_dim("predicted trajectory positions", HORIZON, positions.len())?;
        Self::new(SVector::from_iterator(positions.iter().flat_map(|p| p.iter().copied())))
    }

    pub fn as_vector(&self) -> &SVector<f64, FUTURE_DIM> {
        &self.future
    }

    pub fn as_slice(&self) -> &[f64] {
        self.future.as_slice()
    }

    /// Position predicted `step` frames ahead, `step` in `1..=HORIZON`.
    pub fn step(&self, step: usize) -> Position {
        assert!((1..=HORIZON).contains(&step), "horizon step {step} out of range");
        let i = 3 * (step - 1);
        Position::new(self.future[i], self.future[i + 1], self.future[i + 2])
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (1..=HORIZON).map(move |m| self.step(m))
    }
}

/// Regressor row shared by every output of a linear-in-parameters model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorVector(DVector<f64>);

impl RegressorVector {
    pub fn new(entries: DVector<f64>) -> Self {
        Self(entries)
    }

    pub fn from_slice(entries: &[f64]) -> Self {
        Self(DVector::from_column_slice(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

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

/// `[past(9), label]`, the input of the linear model.
pub fn build_linear_regressor(window: &MotionWindow) -> RegressorVector {
    let mut v = DVector::zeros(LINEAR_REGRESSOR_DIM);
    v.rows_mut(0, PAST_DIM).copy_from(window.past());
    v[PAST_DIM] = window.label().as_f64();
    RegressorVector(v)
}

/// `[past(9), label, 1]`, the input of the network.
pub fn build_network_input(window: &MotionWindow) -> RegressorVector {
    let mut v = DVector::zeros(NETWORK_INPUT_DIM);
    v.rows_mut(0, PAST_DIM).copy_from(window.past());
    v[PAST_DIM] = window.label().as_f64();
    v[PAST_DIM + 1] = 1.0;
    RegressorVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(v: u8) -> ActionLabel {
        ActionLabel::new(v).unwrap()
    }

    fn counting_window(l: u8) -> MotionWindow {
        let past: Vec<f64> = (1..=9).map(f64::from).collect();
        MotionWindow::from_slice(&past, label(l)).unwrap()
    }

    #[test]
    fn labels_outside_range_are_rejected() {
        assert!(ActionLabel::new(0).is_err());
        assert!(ActionLabel::new(5).is_err());
        assert_eq!(ActionLabel::ALL.len(), 4);
    }

    #[test]
    fn linear_regressor_layout() {
        let zero = MotionWindow::new(SVector::zeros(), label(2)).unwrap();
        let r = build_linear_regressor(&zero);
        let mut expected = vec![0.0; 9];
        expected.push(2.0);
        assert_eq!(r.as_slice(), expected.as_slice());

        let r = build_linear_regressor(&counting_window(1));
        assert_eq!(r.as_slice(), &[1., 2., 3., 4., 5., 6., 7., 8., 9., 1.]);
        assert_eq!(r.len(), 10);
    }

    #[test]
    fn network_input_layout() {
        let zero = MotionWindow::new(SVector::zeros(), label(3)).unwrap();
        let s = build_network_input(&zero);
        let mut expected = vec![0.0; 9];
        expected.extend([3.0, 1.0]);
        assert_eq!(s.as_slice(), expected.as_slice());

        let s = build_network_input(&counting_window(4));
        assert_eq!(s.as_slice(), &[1., 2., 3., 4., 5., 6., 7., 8., 9., 4., 1.]);
        assert_eq!(s.len(), 11);
        assert_eq!(s.as_slice()[10], 1.0);
    }

    #[test]
    fn non_finite_windows_are_rejected() {
        let mut past = [0.0; 9];
        past[4] = f64::NAN;
        assert!(MotionWindow::from_slice(&past, label(1)).is_err());
        assert!(MotionWindow::from_slice(&[0.0; 8], label(1)).is_err());
        assert!(PredictedTrajectory::from_slice(&[f64::INFINITY; 9]).is_err());
    }

    #[test]
    fn trajectory_steps_are_nearest_first() {
        let t = PredictedTrajectory::from_slice(&[1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap();
        assert_eq!(t.step(1), Position::new(1., 2., 3.));
        assert_eq!(t.step(3), Position::new(7., 8., 9.));
        assert_eq!(counting_window(1).latest(), Position::new(7., 8., 9.));
    }
}
