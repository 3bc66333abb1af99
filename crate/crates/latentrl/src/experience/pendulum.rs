use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::{Env, EnvSpec, StepOutcome};

const G: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DT: f64 = 0.05;
const MAX_TORQUE: f64 = 2.0;
const MAX_SPEED: f64 = 8.0;
const HORIZON: usize = 200;

/// Inverted-pendulum swing-up: observation [cos θ, sin θ, θ̇], torque-bounded
/// action, reward -(θ² + 0.1 θ̇² + 0.001 u²), 200-step episodes with no true
/// termination.
pub struct Pendulum {
    spec: EnvSpec,
    rng: ChaCha12Rng,
    theta: f64,
    theta_dot: f64,
    steps: usize,
}

impl Pendulum {
    pub fn new(seed: u64) -> Self {
        Pendulum {
            spec: EnvSpec {
                obs_dim: 3,
                act_dim: 1,
                act_low: vec![-MAX_TORQUE],
                act_high: vec![MAX_TORQUE],
                horizon: HORIZON,
                reward_range: (-17.0, 0.0),
            },
            rng: ChaCha12Rng::seed_from_u64(seed),
            theta: std::f64::consts::PI,
            theta_dot: 0.0,
            steps: 0,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

fn angle_normalize(x: f64) -> f64 {
    use std::f64::consts::PI;
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    y
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.theta = self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        self.theta_dot = self.rng.gen_range(-1.0..1.0);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let u = action[0].clamp(-MAX_TORQUE, MAX_TORQUE);
        let th = angle_normalize(self.theta);
        let cost = th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u;

        let accel = 3.0 * G / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * DT;
        self.steps += 1;

        StepOutcome {
            obs: self.obs(),
            reward: -cost,
            terminal: false,
            timeout: self.steps >= HORIZON,
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        vec![self.theta, self.theta_dot]
    }

    fn restore(&mut self, state: &[f64]) -> Vec<f64> {
        self.theta = state[0];
        self.theta_dot = state[1];
        self.steps = 0;
        self.obs()
    }
}
