//! Value-estimate bias analysis: compare a state-action value estimator
//! against truncated Monte-Carlo returns of the acting policy, normalized by
//! the magnitude of the mean Monte-Carlo return so the report is
//! scale-invariant.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::agent::{AgentState, ImagineOpts};
use crate::diffmath::{Tape, Tensor};

use super::{make_env, EnvConfig, HarnessError, Result};

#[derive(Clone, Debug)]
pub struct BiasReport {
    pub mean_normalized_bias: f64,
    pub std_normalized_bias: f64,
    pub samples: usize,
}

/// Generic bias pipeline.
///
/// States are collected by rolling `actor` in the environment; for each
/// collected state the evaluated action is `actor(obs)`, the estimate comes
/// from `estimator(obs, action)`, and the ground truth is the mean of
/// `mc_episodes` γ-discounted rollouts (reward scaled by `reward_scale`)
/// truncated at the episode horizon.
pub fn bias_analysis_with(
    env_cfg: &EnvConfig,
    actor: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    estimator: &mut dyn FnMut(&[f64], &[f64]) -> f64,
    n_states: usize,
    mc_episodes: usize,
    gamma: f64,
    reward_scale: f64,
    seed: u64,
) -> Result<BiasReport> {
    if mc_episodes < 2 {
        return Err(HarnessError::Invalid(
            "bias analysis needs mc_episodes >= 2".into(),
        ));
    }
    if n_states < 30 {
        return Err(HarnessError::Invalid(
            "bias analysis needs at least 30 states".into(),
        ));
    }

    // Collect (snapshot, obs) pairs spaced along fresh policy rollouts.
    let mut env = make_env(env_cfg, seed)?;
    let horizon = env.spec().horizon;
    let mut states = Vec::with_capacity(n_states);
    let mut obs = env.reset();
    let mut steps_in_episode = 0usize;
    while states.len() < n_states {
        states.push((env.snapshot(), obs.clone()));
        // Space samples a few steps apart to decorrelate them.
        for _ in 0..7 {
            let action = actor(&obs);
            let native = env.spec().to_native(&action);
            let out = env.step(&native);
            steps_in_episode += 1;
            if out.terminal || out.timeout || steps_in_episode >= horizon {
                obs = env.reset();
                steps_in_episode = 0;
            } else {
                obs = out.obs;
            }
        }
    }

    let mut biases = Vec::with_capacity(n_states);
    let mut estimates = Vec::with_capacity(n_states);
    let mut mc_values = Vec::with_capacity(n_states);
    for (snapshot, obs0) in &states {
        let action0 = actor(obs0);
        estimates.push(estimator(obs0, &action0));

        let mut total = 0.0;
        for _ in 0..mc_episodes {
            let mut ret = 0.0;
            let mut discount = 1.0;
            env.restore(snapshot);
            let mut a = action0.clone();
            for _ in 0..horizon {
                let native = env.spec().to_native(&a);
                let out = env.step(&native);
                ret += discount * out.reward * reward_scale;
                discount *= gamma;
                if out.terminal {
                    break;
                }
                a = actor(&out.obs);
            }
            total += ret;
        }
        mc_values.push(total / mc_episodes as f64);
    }

    let mean_mc = mc_values.iter().sum::<f64>() / mc_values.len() as f64;
    let denom = mean_mc.abs().max(1e-12);
    for (est, mc) in estimates.iter().zip(&mc_values) {
        biases.push((est - mc) / denom);
    }
    let mean = biases.iter().sum::<f64>() / biases.len() as f64;
    let var = biases.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / biases.len() as f64;
    Ok(BiasReport {
        mean_normalized_bias: mean,
        std_normalized_bias: var.sqrt(),
        samples: biases.len(),
    })
}

/// Bias of the agent's imagined-rollout value estimate: the λ-weighted
/// k-step objective evaluated mean-propagated (no gradients, no noise) with
/// the first action forced to the evaluated one.
pub fn agent_bias_analysis(
    agent: &AgentState,
    env_cfg: &EnvConfig,
    n_states: usize,
    mc_episodes: usize,
    reward_scale: f64,
    seed: u64,
) -> Result<BiasReport> {
    let mut act_rng = ChaCha12Rng::seed_from_u64(seed ^ 0xB1A5);
    let agent_actor = agent.clone();
    let mut actor = move |obs: &[f64]| {
        agent_actor
            .act(obs, u64::MAX, false, &mut act_rng)
            .expect("deterministic action")
    };

    let est_agent = agent.clone();
    let mut est_rng = ChaCha12Rng::seed_from_u64(seed ^ 0xE571);
    let mut estimator = move |obs: &[f64], action: &[f64]| {
        imagined_value(&est_agent, obs, action, &mut est_rng).expect("value estimate")
    };

    bias_analysis_with(
        env_cfg,
        &mut actor,
        &mut estimator,
        n_states,
        mc_episodes,
        agent.cfg.gamma,
        reward_scale,
        seed,
    )
}

/// λ-weighted imagined value of (s, a): mean-propagated K-step rollout with
/// the first action pinned.
pub fn imagined_value(
    agent: &AgentState,
    obs: &[f64],
    action: &[f64],
    rng: &mut ChaCha12Rng,
) -> crate::diffmath::Result<f64> {
    let tape = Tape::new();
    let obs_t = Tensor::from_vec(vec![1, obs.len()], obs.to_vec())?;
    let forced = Tensor::from_vec(vec![1, action.len()], action.to_vec())?;
    let opts = ImagineOpts {
        attach_policy: false,
        sigma: 0.0,
        forced_first_action: Some(forced),
        sample_latents: false,
    };
    let roll = agent.imagine(&tape, &obs_t, &opts, rng)?;
    let weights = crate::agent::lambda_weights(agent.cfg.lambda, agent.cfg.k);
    let gamma = agent.cfg.gamma;
    let c = if agent.cfg.ablations.no_classifier {
        0.0
    } else {
        agent.cfg.classifier_coef
    };

    let mut value = 0.0;
    let mut prefix = 0.0;
    for k in 1..=agent.cfg.k {
        let i = k - 1;
        prefix += gamma.powi(i as i32)
            * (roll.rewards[i].values()[0] + c * roll.intrinsic[i].values()[0]);
        let v_k = prefix + gamma.powi(k as i32) * roll.q_values[i].values()[0];
        value += weights[i] * v_k;
    }
    Ok(value)
}
