use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{Env, EnvSpec, StepOutcome};
use crate::oracle::TabularMdp;

/// Bridges a finite MDP into the continuous-control training loop:
/// observations are one-hot states, and the scalar action in [-1, 1] is
/// discretized to the nearest action bin.
pub struct TabularEnv {
    mdp: TabularMdp,
    spec: EnvSpec,
    rng: ChaCha12Rng,
    state: usize,
    steps: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, horizon: usize, seed: u64) -> Self {
        let (lo, hi) = reward_bounds(&mdp);
        let spec = EnvSpec {
            obs_dim: mdp.n_states,
            act_dim: 1,
            act_low: vec![-1.0],
            act_high: vec![1.0],
            horizon,
            reward_range: (lo, hi),
        };
        TabularEnv {
            mdp,
            spec,
            rng: ChaCha12Rng::seed_from_u64(seed),
            state: 0,
            steps: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    /// Nearest action bin for a continuous input; bins are evenly spaced
    /// over [-1, 1].
    pub fn discretize(&self, a: f64) -> usize {
        let n = self.mdp.n_actions;
        if n == 1 {
            return 0;
        }
        let x = (a.clamp(-1.0, 1.0) + 1.0) / 2.0 * (n as f64 - 1.0);
        (x.round() as usize).min(n - 1)
    }

    pub fn current_state(&self) -> usize {
        self.state
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.n_states];
        v[s] = 1.0;
        v
    }

    fn sample_row(&mut self, row: &[f64]) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        row.len() - 1
    }
}

fn reward_bounds(mdp: &TabularMdp) -> (f64, f64) {
    let lo = mdp.reward.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mdp.reward.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

impl Env for TabularEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        let p0 = self.mdp.p0.clone();
        self.state = self.sample_row(&p0);
        self.steps = 0;
        self.one_hot(self.state)
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = self.discretize(action[0]);
        let s = self.state;
        let reward = self.mdp.r(s, a);
        let row_start = (s * self.mdp.n_actions + a) * self.mdp.n_states;
        let row = self.mdp.trans[row_start..row_start + self.mdp.n_states].to_vec();
        self.state = self.sample_row(&row);
        self.steps += 1;
        StepOutcome {
            obs: self.one_hot(self.state),
            reward,
            terminal: false,
            timeout: self.steps >= self.spec.horizon,
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        vec![self.state as f64]
    }

    fn restore(&mut self, state: &[f64]) -> Vec<f64> {
        self.state = state[0] as usize;
        self.steps = 0;
        self.one_hot(self.state)
    }
}
