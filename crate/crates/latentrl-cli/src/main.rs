//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or runtime failure (the offending
//! key path is printed), 2 usage errors (unknown flags, missing arguments).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use latentrl::agent::Checkpoint;
use latentrl::harness::{
    self, agent_bias_analysis, latent_divergence, make_env, random_baseline, run_bench,
    run_verification, EnvConfig, Profile, RunConfig,
};

#[derive(Parser)]
#[command(name = "latentrl", version, about = "Latent model-based RL with a joint variational objective, plus an exact tabular verifier.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file of `key.path = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile the file and overrides apply on top of.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Individual overrides, repeatable: --set agent.k=2
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Random seed (shorthand for --set train.seed=N).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (shorthand for --set train.out_dir=DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<RunConfig> {
        let profile = match self.profile.as_str() {
            "desk" => Profile::Desk,
            "paper" => Profile::Paper,
            other => bail!("unknown profile '{other}' (desk, paper)"),
        };
        let mut cfg = RunConfig::with_profile(profile);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            cfg.apply_file(&text)?;
        }
        for kv in &self.sets {
            let (key, value) = kv
                .split_once('=')
                .with_context(|| format!("--set needs KEY=VALUE, got '{kv}'"))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.train.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write metrics + checkpoint to the output directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the environment recorded in the checkpoint.
        #[arg(long)]
        env: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long)]
        tabular_path: Option<PathBuf>,
    },
    /// Run the exact verification sweep and print one record per check.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long = "k-max", default_value_t = 4)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the records to this JSONL file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalized value-estimate bias of a checkpoint.
    Bias {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "n-states", default_value_t = 128)]
        n_states: usize,
        #[arg(long = "mc-episodes", default_value_t = 5)]
        mc_episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Open-loop latent rollout divergence of a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Update-round throughput of the configured agent.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
    },
}

/// Environment settings recorded at training time, if any.
fn env_from_checkpoint(extra: &serde_json::Value) -> Option<EnvConfig> {
    serde_json::from_value(extra.get("env")?.clone()).ok()
}

fn reward_scale_from_checkpoint(extra: &serde_json::Value) -> f64 {
    extra
        .get("train")
        .and_then(|t| t.get("reward_scale"))
        .and_then(|v| v.as_f64())
        .unwrap_or(1.0)
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config } => {
            let cfg = config.build()?;
            let outcome = harness::train(&cfg)?;
            println!(
                "trained {} env steps over {} episodes; final eval {:.2} ± {:.2}",
                cfg.train.total_env_steps,
                outcome.episodes_seen,
                outcome.final_eval_mean,
                outcome.final_eval_std
            );
            println!("metrics: {}", outcome.metrics_path.display());
            println!("checkpoint: {}", outcome.checkpoint_path.display());
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            env,
            noise_std,
            tabular_path,
        } => {
            let (agent, step, extra) = Checkpoint::load(&checkpoint)?;
            let mut env_cfg = env_from_checkpoint(&extra).unwrap_or_default();
            if let Some(name) = env {
                env_cfg.name = name;
                env_cfg.noise_std = noise_std;
                env_cfg.tabular_path = tabular_path;
            }
            let result = harness::evaluate_agent(&agent, &env_cfg, episodes, seed)?;
            let baseline = random_baseline(&env_cfg, episodes.max(20), seed ^ 0xB)?;
            println!(
                "checkpoint at step {step}: eval {:.2} ± {:.2} over {episodes} episodes (random baseline {:.2} ± {:.2})",
                result.mean, result.std, baseline.mean, baseline.std
            );
        }
        Command::Verify {
            instances,
            k_max,
            seed,
            out,
        } => {
            let records = run_verification(instances, k_max, seed)?;
            let mut failures = 0usize;
            let mut sink: Box<dyn std::io::Write> = match &out {
                Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
                None => Box::new(std::io::stdout().lock()),
            };
            for rec in &records {
                writeln!(sink, "{}", serde_json::to_string(rec)?)?;
                if !rec.pass {
                    failures += 1;
                }
            }
            sink.flush()?;
            if failures > 0 {
                bail!("{failures} of {} checks failed", records.len());
            }
            eprintln!("all {} checks passed", records.len());
        }
        Command::Bias {
            checkpoint,
            n_states,
            mc_episodes,
            seed,
        } => {
            let (agent, step, extra) = Checkpoint::load(&checkpoint)?;
            let env_cfg = env_from_checkpoint(&extra).unwrap_or_default();
            let scale = reward_scale_from_checkpoint(&extra);
            let report =
                agent_bias_analysis(&agent, &env_cfg, n_states, mc_episodes, scale, seed)?;
            println!(
                "checkpoint at step {step}: normalized bias {:.4} ± {:.4} over {} states",
                report.mean_normalized_bias, report.std_normalized_bias, report.samples
            );
        }
        Command::Diagnose {
            checkpoint,
            horizon,
            episodes,
            seed,
        } => {
            let (agent, step, extra) = Checkpoint::load(&checkpoint)?;
            let env_cfg = env_from_checkpoint(&extra).unwrap_or_default();
            let mut sums = vec![0.0f64; horizon + 1];
            let mut counts = vec![0usize; horizon + 1];
            for ep in 0..episodes {
                let mut env = make_env(&env_cfg, seed.wrapping_add(ep as u64))?;
                let trace = latent_divergence(&agent, env.as_mut(), horizon, seed ^ ep as u64)?;
                for (t, d) in trace.iter().enumerate() {
                    sums[t] += d;
                    counts[t] += 1;
                }
            }
            println!("checkpoint at step {step}: open-loop latent divergence");
            for (t, (s, c)) in sums.iter().zip(&counts).enumerate() {
                if *c > 0 {
                    println!("step {t}: {:.6}", s / *c as f64);
                }
            }
        }
        Command::Bench { config, seconds } => {
            let cfg = config.build()?;
            let report = run_bench(&cfg, seconds)?;
            println!(
                "{} rounds in {:.2}s: {:.2} ms/round, ~{:.1} env steps/s at utd={}",
                report.rounds,
                report.seconds,
                report.ms_per_round,
                report.env_steps_per_second,
                cfg.agent.utd
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
