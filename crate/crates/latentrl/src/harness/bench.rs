//! Throughput measurement: update rounds per second and projected
//! environment steps per second at the configured update ratio.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::agent::AgentState;
use crate::experience::{ReplayBuffer, Transition};

use super::{make_env, Result, RunConfig};

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rounds: usize,
    pub seconds: f64,
    pub ms_per_round: f64,
    pub env_steps_per_second: f64,
}

/// Fill a buffer with random interaction, then time update rounds for about
/// `budget_secs` of wall clock.
pub fn run_bench(cfg: &RunConfig, budget_secs: f64) -> Result<BenchReport> {
    cfg.validate()?;
    let mut env = make_env(&cfg.env, cfg.train.seed)?;
    let spec = env.spec().clone();
    let mut agent = AgentState::new(cfg.agent.clone(), spec.obs_dim, spec.act_dim, cfg.train.seed)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.train.seed ^ 0xBE7C);
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_capacity.min(10_000), spec.obs_dim, spec.act_dim);

    let mut obs = env.reset();
    let fill = (cfg.agent.batch * (cfg.agent.k + 2)).max(2_000);
    for _ in 0..fill {
        let action: Vec<f64> = (0..spec.act_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = env.step(&spec.to_native(&action));
        buffer.push(Transition {
            obs: obs.clone(),
            action,
            reward: out.reward,
            next_obs: out.obs.clone(),
            terminal: out.terminal,
            timeout: out.timeout,
        })?;
        obs = if out.terminal || out.timeout {
            env.reset()
        } else {
            out.obs
        };
    }

    let start = Instant::now();
    let mut rounds = 0usize;
    while start.elapsed().as_secs_f64() < budget_secs {
        let batch = buffer.sample_sequences(cfg.agent.batch, cfg.agent.k, &mut rng)?;
        agent.update_round(&batch, rounds as u64, &mut rng)?;
        agent.update_targets();
        rounds += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    let per_round = seconds / rounds.max(1) as f64;
    Ok(BenchReport {
        rounds,
        seconds,
        ms_per_round: per_round * 1e3,
        env_steps_per_second: 1.0 / (per_round * cfg.agent.utd.max(1) as f64),
    })
}
