use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::{Env, EnvSpec, StepOutcome};

const DT: f64 = 0.1;
const MAX_SPEED: f64 = 2.0;
const ARENA: f64 = 5.0;
const HORIZON: usize = 200;

/// 2-D double integrator steering to the origin. Reward is the negative
/// distance to the goal; `noise_std` injects Gaussian noise into the
/// velocity update, the knob for studying aleatoric dynamics noise.
pub struct PointMass {
    spec: EnvSpec,
    rng: ChaCha12Rng,
    noise_std: f64,
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
}

impl PointMass {
    pub fn new(seed: u64, noise_std: f64) -> Self {
        assert!(noise_std >= 0.0, "noise_std must be nonnegative");
        PointMass {
            spec: EnvSpec {
                obs_dim: 4,
                act_dim: 2,
                act_low: vec![-1.0, -1.0],
                act_high: vec![1.0, 1.0],
                horizon: HORIZON,
                reward_range: (-2.0 * ARENA * std::f64::consts::SQRT_2, 0.0),
            },
            rng: ChaCha12Rng::seed_from_u64(seed),
            noise_std,
            pos: [0.0; 2],
            vel: [0.0; 2],
            steps: 0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        for p in &mut self.pos {
            *p = self.rng.gen_range(-2.0..2.0);
        }
        self.vel = [0.0; 2];
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        for i in 0..2 {
            let a = action[i].clamp(-1.0, 1.0);
            let noise: f64 = if self.noise_std > 0.0 {
                self.noise_std * self.rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            self.vel[i] = (self.vel[i] + a * DT + noise).clamp(-MAX_SPEED, MAX_SPEED);
            self.pos[i] = (self.pos[i] + self.vel[i] * DT).clamp(-ARENA, ARENA);
        }
        self.steps += 1;
        let dist = (self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1]).sqrt();
        StepOutcome {
            obs: self.obs(),
            reward: -dist,
            terminal: false,
            timeout: self.steps >= HORIZON,
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn restore(&mut self, state: &[f64]) -> Vec<f64> {
        self.pos = [state[0], state[1]];
        self.vel = [state[2], state[3]];
        self.steps = 0;
        self.obs()
    }
}
