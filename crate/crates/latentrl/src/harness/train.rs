//! The training loop: act, store, update `utd` rounds per step, soft-update
//! targets, evaluate on a schedule, and checkpoint at the end.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::agent::{AgentState, Checkpoint, RoundStats};
use crate::experience::{dump::TrajectoryDump, ReplayBuffer, Transition};

use super::{evaluate_agent, make_env, HarnessError, MetricsRow, MetricsWriter, Result, RunConfig};

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub final_eval_mean: f64,
    pub final_eval_std: f64,
    pub episodes_seen: u64,
    /// Gradient-update rounds executed; exactly utd per post-warmup step.
    pub update_rounds: u64,
}

fn rng_state(rng: &ChaCha12Rng) -> serde_json::Value {
    serde_json::json!({
        "seed": rng.get_seed().to_vec(),
        "word_pos": rng.get_word_pos().to_string(),
        "stream": rng.get_stream(),
    })
}

/// Run one full training session. Deterministic in (config, seed): the
/// metrics file and checkpoints depend on nothing else.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.train.out_dir)?;

    // Independent derived streams: environment dynamics, update-side
    // randomness (batch indices, latent samples, rollout noise), and action
    // noise during collection.
    let seed = cfg.train.seed;
    let mut env = make_env(&cfg.env, seed)?;
    let mut update_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5A17_AB1E);
    let mut act_rng = ChaCha12Rng::seed_from_u64(seed ^ 0xAC71_0B5E);

    let spec = env.spec().clone();
    let mut agent = AgentState::new(cfg.agent.clone(), spec.obs_dim, spec.act_dim, seed ^ 0x11717)?;
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_capacity, spec.obs_dim, spec.act_dim);

    let mut dump = if cfg.train.dump_trajectories {
        let file = std::fs::File::create(cfg.train.out_dir.join("trajectories.jsonl"))?;
        Some(TrajectoryDump::new(std::io::BufWriter::new(file)))
    } else {
        None
    };

    let mut metrics = MetricsWriter::create(&cfg.train.out_dir)?;
    let started = Instant::now();

    let mut obs = env.reset();
    let mut episode_return = 0.0;
    let mut last_episode_return = 0.0;
    let mut episodes_seen = 0u64;
    let mut update_rounds = 0u64;
    let mut window_stats: Vec<RoundStats> = Vec::new();

    let shift = cfg.agent.log_reward_shift.unwrap_or(0.0);
    let checkpoint_path = cfg.train.out_dir.join("final.ckpt");

    for step in 0..cfg.train.total_env_steps {
        let action = if step < cfg.train.warmup_steps {
            (0..spec.act_dim)
                .map(|_| act_rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        } else {
            agent.act(&obs, step, true, &mut act_rng)?
        };
        let native = spec.to_native(&action);
        let out = env.step(&native);
        episode_return += out.reward;

        let transition = Transition {
            obs: obs.clone(),
            action,
            reward: out.reward * cfg.train.reward_scale + shift,
            next_obs: out.obs.clone(),
            terminal: out.terminal,
            timeout: out.timeout,
        };
        if let Some(d) = dump.as_mut() {
            d.record(&transition)?;
        }
        buffer.push(transition)?;

        if out.terminal || out.timeout {
            obs = env.reset();
            last_episode_return = episode_return;
            episode_return = 0.0;
            episodes_seen += 1;
        } else {
            obs = out.obs;
        }

        if step >= cfg.train.warmup_steps {
            for _ in 0..cfg.agent.utd {
                let batch = buffer.sample_sequences(cfg.agent.batch, cfg.agent.k, &mut update_rng)?;
                match agent.update_round(&batch, step, &mut update_rng) {
                    Ok(stats) => {
                        update_rounds += 1;
                        window_stats.push(stats)
                    }
                    Err(e) => {
                        let diag = cfg.train.out_dir.join("diagnostic.ckpt");
                        let extra = serde_json::json!({"failure": e.to_string(), "step": step});
                        Checkpoint::save(&diag, &agent, step, extra)?;
                        return Err(HarnessError::Aborted {
                            step,
                            reason: e.to_string(),
                            checkpoint: diag.display().to_string(),
                        });
                    }
                }
                agent.update_targets();
            }
        }

        let env_step = step + 1;
        if env_step % cfg.train.eval_every == 0 || env_step == cfg.train.total_env_steps {
            let eval = evaluate_agent(
                &agent,
                &cfg.env,
                cfg.train.eval_episodes,
                seed ^ (0xEE00 + env_step),
            )?;
            let row = summarize(&window_stats, env_step, last_episode_return, &eval, &started);
            metrics.append(&row)?;
            window_stats.clear();
        }

        if let Some(every) = cfg.train.checkpoint_every {
            if env_step % every == 0 && env_step != cfg.train.total_env_steps {
                let path = cfg.train.out_dir.join(format!("step_{env_step}.ckpt"));
                let extra = serde_json::json!({
                    "update_rng": rng_state(&update_rng),
                    "act_rng": rng_state(&act_rng),
                });
                Checkpoint::save(&path, &agent, env_step, extra)?;
            }
        }
    }

    metrics.flush()?;
    if let Some(d) = dump {
        d.finish()?;
    }

    let final_eval = evaluate_agent(&agent, &cfg.env, cfg.train.eval_episodes, seed ^ 0xF17A1)?;
    let extra = serde_json::json!({
        "update_rng": rng_state(&update_rng),
        "act_rng": rng_state(&act_rng),
        "env": cfg.env,
        "train": cfg.train,
    });
    Checkpoint::save(&checkpoint_path, &agent, cfg.train.total_env_steps, extra)?;

    Ok(TrainOutcome {
        checkpoint_path,
        metrics_path: cfg.train.out_dir.join("metrics.csv"),
        final_eval_mean: final_eval.mean,
        final_eval_std: final_eval.std,
        episodes_seen,
        update_rounds,
    })
}

fn summarize(
    window: &[RoundStats],
    env_step: u64,
    last_episode_return: f64,
    eval: &super::EvalResult,
    started: &Instant,
) -> MetricsRow {
    let n = window.len().max(1) as f64;
    let avg = |f: fn(&RoundStats) -> f64| window.iter().map(f).sum::<f64>() / n;
    MetricsRow {
        env_step,
        episode_return: last_episode_return,
        eval_return_mean: eval.mean,
        eval_return_std: eval.std,
        loss_encoder_model: avg(|s| s.loss_encoder_model),
        loss_policy: avg(|s| s.loss_policy),
        loss_classifier: avg(|s| s.loss_classifier),
        loss_q: avg(|s| s.loss_q),
        loss_reward: avg(|s| s.loss_reward),
        intrinsic_reward_mean: avg(|s| s.intrinsic_mean),
        classifier_accuracy: avg(|s| s.classifier_accuracy),
        grad_norm_encoder_model: avg(|s| s.grad_norm_encoder_model),
        grad_norm_policy: avg(|s| s.grad_norm_policy),
        grad_norm_classifier: avg(|s| s.grad_norm_classifier),
        grad_norm_q: avg(|s| s.grad_norm_q),
        grad_norm_reward: avg(|s| s.grad_norm_reward),
        wall_clock_s: started.elapsed().as_secs_f64(),
    }
}
