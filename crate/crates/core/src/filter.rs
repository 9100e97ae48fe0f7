//! Measurement low-pass filter: `p_s(k) = 0.6 p(k-1) + 0.4 p(k)`.

use crate::error::Result;
use crate::types::{ensure_finite, Position};

pub const PREVIOUS_WEIGHT: f64 = 0.6;
pub const CURRENT_WEIGHT: f64 = 0.4;

/// Weighted average of the previous and current raw measurements.
pub fn smooth(previous: &Position, current: &Position) -> Result<Position> {
    ensure_finite(previous.as_slice(), "previous measurement")?;
    ensure_finite(current.as_slice(), "current measurement")?;
    Ok(previous * PREVIOUS_WEIGHT + current * CURRENT_WEIGHT)
}

/// Streaming form of [`smooth`]. The first measurement passes through unchanged.
#[derive(Debug, Clone, Default)]
pub struct LowPassFilter {
    previous: Option<Position>,
}

impl LowPassFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, raw: Position) -> Result<Position> {
        let previous = self.previous.unwrap_or(raw);
        let out = smooth(&previous, &raw)?;
        self.previous = Some(raw);
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}
