//! Training loop, evaluation, diagnostics, verification sweep, and
//! configuration plumbing.

mod bench;
mod bias;
mod config;
mod diagnostics;
mod evaluate;
mod metrics;
mod train;
#[cfg(test)]
mod tests;
mod verify;

pub use bench::{run_bench, BenchReport};
pub use bias::{agent_bias_analysis, bias_analysis_with, BiasReport};
pub use config::{EnvConfig, Profile, RunConfig, TrainConfig};
pub use diagnostics::latent_divergence;
pub use evaluate::{evaluate_agent, random_baseline, EvalResult};
pub use metrics::{MetricsRow, MetricsWriter, METRICS_COLUMNS};
pub use train::{train, TrainOutcome};
pub use verify::{run_verification, CheckRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {key}: {msg}")]
    Config { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Diff(#[from] crate::diffmath::DiffError),
    #[error(transparent)]
    Experience(#[from] crate::experience::ExpError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("training aborted at env step {step}: {reason} (diagnostic checkpoint at {checkpoint})")]
    Aborted {
        step: u64,
        reason: String,
        checkpoint: String,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

use crate::experience::{Env, Pendulum, PointMass, TabularEnv};

/// Construct the configured environment with a seed.
pub fn make_env(cfg: &EnvConfig, seed: u64) -> Result<Box<dyn Env>> {
    match cfg.name.as_str() {
        "pendulum" => Ok(Box::new(Pendulum::new(seed))),
        "pointmass" => Ok(Box::new(PointMass::new(seed, cfg.noise_std))),
        "tabular" => {
            let path = cfg.tabular_path.as_ref().ok_or_else(|| HarnessError::Config {
                key: "env.tabular_path".into(),
                msg: "required for the tabular environment".into(),
            })?;
            let text = std::fs::read_to_string(path)?;
            let mdp: crate::oracle::TabularMdp =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config {
                    key: "env.tabular_path".into(),
                    msg: e.to_string(),
                })?;
            mdp.validate()?;
            Ok(Box::new(TabularEnv::new(mdp, cfg.tabular_horizon, seed)))
        }
        other => Err(HarnessError::Config {
            key: "env.name".into(),
            msg: format!("unknown environment '{other}' (pendulum, pointmass, tabular)"),
        }),
    }
}
