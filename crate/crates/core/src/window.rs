use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::{ActionLabel, JointSample, MotionWindow, Position, WINDOW_LEN};

/// Sliding buffer of the newest [`WINDOW_LEN`] smoothed samples.
#[derive(Debug, Clone)]
pub struct WindowState {
    label: ActionLabel,
    samples: VecDeque<Position>,
    last_frame: Option<u64>,
}

impl WindowState {
    pub fn new(label: ActionLabel) -> Self {
        Self {
            label,
            samples: VecDeque::with_capacity(WINDOW_LEN),
            last_frame: None,
        }
    }

    pub fn label(&self) -> ActionLabel {
        self.label
    }

    pub fn is_warm(&self) -> bool {
        self.samples.len() == WINDOW_LEN
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Append a smoothed sample; returns the full window once warm.
    ///
    /// Frames must be consecutive. On a gap the state is left untouched and
    /// the caller is expected to [`reset`](Self::reset) before continuing.
    pub fn push_sample(&mut self, sample: JointSample) -> Result<Option<MotionWindow>> {
        if let Some(last) = self.last_frame {
            if sample.frame != last + 1 {
                return Err(Error::StreamDiscontinuity {
                    expected: last + 1,
                    actual: sample.frame,
                });
            }
        }
        if self.samples.len() == WINDOW_LEN {
            self.samples.pop_front();
        }
        self.samples.push_back(sample.position);
        self.last_frame = Some(sample.frame);
        self.current()
    }

    pub fn current(&self) -> Result<Option<MotionWindow>> {
        if !self.is_warm() {
            return Ok(None);
        }
        let positions: Vec<Position> = self.samples.iter().copied().collect();
        MotionWindow::from_positions(&positions, self.label).map(Some)
    }

    pub fn reset(&mut self) {
        self.samples.clear();
        self.last_frame = None;
    }
}
