//! Human wrist-motion prediction with online RLS adaptation, and a
//! closed-loop benchmark of how prediction affects robot safety and
//! efficiency in a shared workspace.

pub mod config;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod human;
pub mod io;
pub mod linear;
pub mod metrics;
pub mod network;
pub mod parallel;
pub mod pipeline;
pub mod predictor;
pub mod rls;
pub mod robot;
pub mod seeding;
pub mod types;
pub mod window;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use types::*;
