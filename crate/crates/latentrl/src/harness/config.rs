//! Run configuration: a flat `key.path = value` text format where every key
//! is also overridable from the command line via `--set key=value`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;

use super::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// pendulum | pointmass | tabular
    pub name: String,
    /// Dynamics noise std for pointmass.
    pub noise_std: f64,
    /// JSON file holding a tabular MDP.
    pub tabular_path: Option<PathBuf>,
    pub tabular_horizon: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            name: "pendulum".into(),
            noise_std: 0.0,
            tabular_path: None,
            tabular_horizon: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_env_steps: u64,
    pub warmup_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub buffer_capacity: usize,
    /// Multiplier applied to rewards entering the replay buffer. Metrics and
    /// evaluation always report raw environment returns.
    pub reward_scale: f64,
    pub checkpoint_every: Option<u64>,
    /// Write every stored transition as a JSON line next to the metrics.
    pub dump_trajectories: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_env_steps: 200_000,
            warmup_steps: 5_000,
            eval_every: 5_000,
            eval_episodes: 10,
            seed: 0,
            out_dir: PathBuf::from("runs/out"),
            buffer_capacity: 100_000,
            reward_scale: 1.0,
            checkpoint_every: None,
            dump_trajectories: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Full-size defaults.
    Paper,
    /// Scaled-down profile for minutes-scale runs: smaller nets and batch,
    /// shorter exploration decay, one update round per step, and rewards
    /// scaled to keep value targets within easy reach of the zero-started
    /// critic.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn with_profile(profile: Profile) -> Self {
        let mut cfg = RunConfig::default();
        if profile == Profile::Desk {
            cfg.agent.latent_dim = 16;
            cfg.agent.hidden = 128;
            cfg.agent.model_hidden = 128;
            cfg.agent.batch = 128;
            cfg.agent.utd = 1;
            cfg.agent.lr = 3e-4;
            cfg.agent.exploration.decay_steps = 20_000;
            cfg.train.buffer_capacity = 50_000;
            cfg.train.total_env_steps = 30_000;
            cfg.train.eval_every = 1_000;
            cfg.train.eval_episodes = 5;
            cfg.train.reward_scale = 0.1;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        // warmup == total is allowed as the degenerate "random policy only"
        // schedule; beyond that the config makes no sense.
        if self.train.warmup_steps > self.train.total_env_steps {
            return Err(HarnessError::Config {
                key: "train.warmup_steps".into(),
                msg: format!(
                    "warmup {} exceeds total_env_steps {}",
                    self.train.warmup_steps, self.train.total_env_steps
                ),
            });
        }
        if self.train.eval_episodes == 0 {
            return Err(HarnessError::Config {
                key: "train.eval_episodes".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.train.eval_every == 0 {
            return Err(HarnessError::Config {
                key: "train.eval_every".into(),
                msg: "must be positive".into(),
            });
        }
        if self.train.reward_scale <= 0.0 {
            return Err(HarnessError::Config {
                key: "train.reward_scale".into(),
                msg: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Parse a config file: one `key.path = value` per line, `#` comments.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config {
                    key: format!("line {}", lineno + 1),
                    msg: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply one `key.path = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let err = |msg: String| HarnessError::Config {
            key: key.to_string(),
            msg,
        };
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|e| err(e.to_string()));
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| err(e.to_string()));
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|e| err(e.to_string()));
        let parse_bool = |v: &str| v.parse::<bool>().map_err(|e| err(e.to_string()));

        match key {
            "env.name" => self.env.name = value.to_string(),
            "env.noise_std" => self.env.noise_std = parse_f64(value)?,
            "env.tabular_path" => self.env.tabular_path = Some(PathBuf::from(value)),
            "env.tabular_horizon" => self.env.tabular_horizon = parse_usize(value)?,

            "agent.latent_dim" => self.agent.latent_dim = parse_usize(value)?,
            "agent.hidden" => self.agent.hidden = parse_usize(value)?,
            "agent.model_hidden" => self.agent.model_hidden = parse_usize(value)?,
            "agent.depth" => self.agent.depth = parse_usize(value)?,
            "agent.k" => self.agent.k = parse_usize(value)?,
            "agent.gamma" => self.agent.gamma = parse_f64(value)?,
            "agent.lambda" => self.agent.lambda = parse_f64(value)?,
            "agent.classifier_coef" => self.agent.classifier_coef = parse_f64(value)?,
            "agent.tau" => self.agent.tau = parse_f64(value)?,
            "agent.lr" => self.agent.lr = parse_f64(value)?,
            "agent.max_grad_norm" => self.agent.max_grad_norm = parse_f64(value)?,
            "agent.batch" => self.agent.batch = parse_usize(value)?,
            "agent.utd" => self.agent.utd = parse_usize(value)?,
            "agent.no_kl" => self.agent.ablations.no_kl = parse_bool(value)?,
            "agent.no_value" => self.agent.ablations.no_value = parse_bool(value)?,
            "agent.no_classifier" => self.agent.ablations.no_classifier = parse_bool(value)?,
            "agent.modelfree_actor" => self.agent.ablations.modelfree_actor = parse_bool(value)?,
            "agent.sigma_start" => self.agent.exploration.sigma_start = parse_f64(value)?,
            "agent.sigma_end" => self.agent.exploration.sigma_end = parse_f64(value)?,
            "agent.decay_steps" => self.agent.exploration.decay_steps = parse_u64(value)?,
            "agent.noise_clip" => self.agent.exploration.noise_clip = parse_f64(value)?,
            "agent.log_reward_shift" => {
                self.agent.log_reward_shift = if value == "none" {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }

            "train.total_env_steps" => self.train.total_env_steps = parse_u64(value)?,
            "train.warmup_steps" => self.train.warmup_steps = parse_u64(value)?,
            "train.eval_every" => self.train.eval_every = parse_u64(value)?,
            "train.eval_episodes" => self.train.eval_episodes = parse_usize(value)?,
            "train.seed" => self.train.seed = parse_u64(value)?,
            "train.out_dir" => self.train.out_dir = PathBuf::from(value),
            "train.buffer_capacity" => self.train.buffer_capacity = parse_usize(value)?,
            "train.reward_scale" => self.train.reward_scale = parse_f64(value)?,
            "train.checkpoint_every" => {
                self.train.checkpoint_every = if value == "none" {
                    None
                } else {
                    Some(parse_u64(value)?)
                }
            }
            "train.dump_trajectories" => self.train.dump_trajectories = parse_bool(value)?,

            other => {
                return Err(HarnessError::Config {
                    key: other.to_string(),
                    msg: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }
}
