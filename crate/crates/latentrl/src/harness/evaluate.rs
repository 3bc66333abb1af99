//! Policy evaluation and the random-action baseline band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::agent::AgentState;

use super::{make_env, EnvConfig, Result};

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    /// Standard error of the mean.
    pub sem: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        EvalResult {
            mean,
            std,
            sem: std / n.sqrt(),
            returns,
        }
    }
}

/// Undiscounted return of the deterministic policy over fresh episodes.
/// Episode i runs on an environment seeded with `seed + i`; the agent is
/// read-only throughout.
pub fn evaluate_agent(
    agent: &AgentState,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xE7A1);
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut env = make_env(env_cfg, seed.wrapping_add(ep as u64))?;
        let mut obs = env.reset();
        let mut total = 0.0;
        loop {
            let action = agent.act(&obs, u64::MAX, false, &mut rng)?;
            let native = env.spec().to_native(&action);
            let out = env.step(&native);
            total += out.reward;
            if out.terminal || out.timeout {
                break;
            }
            obs = out.obs;
        }
        returns.push(total);
    }
    Ok(EvalResult::from_returns(returns))
}

/// Return statistics of uniform-random actions over fresh episodes; the
/// reference band for the learning checks.
pub fn random_baseline(env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xBA5E);
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut env = make_env(env_cfg, seed.wrapping_add(1_000_003 * ep as u64))?;
        let act_dim = env.spec().act_dim;
        env.reset();
        let mut total = 0.0;
        loop {
            let action: Vec<f64> = (0..act_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let native = env.spec().to_native(&action);
            let out = env.step(&native);
            total += out.reward;
            if out.terminal || out.timeout {
                break;
            }
        }
        returns.push(total);
    }
    Ok(EvalResult::from_returns(returns))
}
