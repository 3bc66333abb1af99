//! Replay storage and the built-in desk-scale environments.
//!
//! Environments take actions in their native bounds and are pure functions
//! of (seed, action sequence). The agent side works in normalized [-1, 1]
//! actions; the harness converts at the boundary and the buffer stores the
//! normalized form.

mod buffer;
pub mod dump;
mod pendulum;
mod pointmass;
mod tabular_env;

pub use buffer::{ReplayBuffer, SequenceBatch};
pub use pendulum::Pendulum;
pub use pointmass::PointMass;
pub use tabular_env::TabularEnv;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("a transition cannot be both terminal and timed out")]
    TerminalAndTimeout,
    #[error("no valid length-{k} window in the buffer")]
    NoValidWindow { k: usize },
    #[error("invalid environment configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ExpError>;

/// One environment step. `terminal` marks true termination; `timeout` marks
/// an episode cut at the horizon. They are mutually exclusive, and only
/// `terminal` stops value bootstrapping.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    pub timeout: bool,
}

/// Static environment description.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub act_low: Vec<f64>,
    pub act_high: Vec<f64>,
    pub horizon: usize,
    pub reward_range: (f64, f64),
}

impl EnvSpec {
    /// Map a normalized [-1, 1] action into native bounds.
    pub fn to_native(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.act_low.iter().zip(&self.act_high))
            .map(|(a, (lo, hi))| lo + (a.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub timeout: bool,
}

/// A seeded, single-owner environment.
///
/// `snapshot`/`restore` exist for the bias-analysis protocol: `restore` sets
/// the physical state and resets the internal step counter, so rollouts from
/// a restored state run a full horizon.
pub trait Env {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepOutcome;
    fn snapshot(&self) -> Vec<f64>;
    fn restore(&mut self, state: &[f64]) -> Vec<f64>;
}
