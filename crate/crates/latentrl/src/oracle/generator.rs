//! Random tabular instances for the verification sweeps.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::{Result, TabularAlm, TabularMdp};

/// Instance sampling ranges. Sizes stay small enough that exhaustive K = 4
/// enumeration is around a million trajectories.
#[derive(Clone, Debug)]
pub struct InstanceConfig {
    pub state_sizes: Vec<usize>,
    pub action_sizes: Vec<usize>,
    pub latent_sizes: Vec<usize>,
    pub gammas: Vec<f64>,
    pub reward_range: (f64, f64),
    /// Lower floor applied to every categorical entry so logs stay finite.
    pub positivity_floor: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            state_sizes: vec![2, 3],
            action_sizes: vec![2, 3],
            latent_sizes: vec![2, 3],
            gammas: vec![0.9, 0.99],
            reward_range: (0.1, 1.0),
            positivity_floor: 1e-6,
        }
    }
}

fn dirichlet_row(width: usize, floor: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    // Dirichlet(1) via normalized unit exponentials, then floored and
    // renormalized to keep strict positivity.
    let mut row: Vec<f64> = (0..width)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = row.iter().sum();
    for v in &mut row {
        *v = (*v / total).max(floor);
    }
    let total: f64 = row.iter().sum();
    for v in &mut row {
        *v /= total;
    }
    row
}

fn pick<T: Copy>(options: &[T], rng: &mut ChaCha12Rng) -> T {
    options[rng.gen_range(0..options.len())]
}

/// Draw one valid (MDP, encoder/model/policy) pair.
pub fn random_instance(cfg: &InstanceConfig, rng: &mut ChaCha12Rng) -> Result<(TabularMdp, TabularAlm)> {
    let s_n = pick(&cfg.state_sizes, rng);
    let a_n = pick(&cfg.action_sizes, rng);
    let z_n = pick(&cfg.latent_sizes, rng);
    let gamma = pick(&cfg.gammas, rng);
    let floor = cfg.positivity_floor;

    let p0 = dirichlet_row(s_n, floor, rng);
    let mut trans = Vec::with_capacity(s_n * a_n * s_n);
    for _ in 0..s_n * a_n {
        trans.extend(dirichlet_row(s_n, floor, rng));
    }
    let (r_lo, r_hi) = cfg.reward_range;
    let reward: Vec<f64> = (0..s_n * a_n).map(|_| rng.gen_range(r_lo..r_hi)).collect();
    let mdp = TabularMdp::new(s_n, a_n, p0, trans, reward, gamma)?;

    let mut encoder = Vec::with_capacity(s_n * z_n);
    for _ in 0..s_n {
        encoder.extend(dirichlet_row(z_n, floor, rng));
    }
    let mut model = Vec::with_capacity(z_n * a_n * z_n);
    for _ in 0..z_n * a_n {
        model.extend(dirichlet_row(z_n, floor, rng));
    }
    let mut policy = Vec::with_capacity(z_n * a_n);
    for _ in 0..z_n {
        policy.extend(dirichlet_row(a_n, floor, rng));
    }
    let alm = TabularAlm::new(&mdp, z_n, encoder, model, policy)?;
    Ok((mdp, alm))
}

/// A strictly positive random behavior policy `[s][a]` for the offline bound.
pub fn random_behavior_policy(mdp: &TabularMdp, floor: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut rows = Vec::with_capacity(mdp.n_states * mdp.n_actions);
    for _ in 0..mdp.n_states {
        rows.extend(dirichlet_row(mdp.n_actions, floor, rng));
    }
    rows
}
