//! Open-loop model diagnostics: roll a real trajectory with the policy,
//! unroll the latent model from the initial representation with the same
//! actions, and report the per-step L2 distance between the model's
//! predicted latent means and the encoder means of the true observations.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::agent::{AgentState, Bind};
use crate::diffmath::Tensor;
use crate::experience::Env;

use super::Result;

/// One trace of length `horizon + 1`; index 0 is always 0 because both
/// trajectories start from the same encoded state.
pub fn latent_divergence(
    agent: &AgentState,
    env: &mut dyn Env,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = agent.cfg.latent_dim;

    let encoder = agent.encoder.bind(Bind::Frozen);
    let model = agent.model.bind(Bind::Frozen);

    let enc_mean = |obs: &[f64]| -> Result<Vec<f64>> {
        let x = Tensor::from_vec(vec![1, obs.len()], obs.to_vec())?;
        Ok(encoder.dist(&x)?.mean.values().to_vec())
    };

    let mut obs = env.reset();
    let mut true_latents = vec![enc_mean(&obs)?];
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = agent.act(&obs, u64::MAX, false, &mut rng)?;
        let native = env.spec().to_native(&action);
        let out = env.step(&native);
        true_latents.push(enc_mean(&out.obs)?);
        actions.push(action);
        if out.terminal || out.timeout {
            break;
        }
        obs = out.obs;
    }

    let steps = actions.len();
    let mut predicted = Tensor::from_vec(vec![1, l], true_latents[0].clone())?;
    let mut trace = vec![0.0];
    for (t, action) in actions.iter().take(steps).enumerate() {
        let a = Tensor::from_vec(vec![1, action.len()], action.clone())?;
        let za = Tensor::concat_cols(&[&predicted, &a])?;
        predicted = model.dist(&za)?.mean;
        let dist: f64 = predicted
            .values()
            .iter()
            .zip(&true_latents[t + 1])
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        trace.push(dist);
    }
    Ok(trace)
}
