//! The agent: encoder, latent model, policy, reward head, Q head, and
//! classifier, plus target copies of encoder and Q, one Adam state per
//! network, and the five training losses.

mod checkpoint;
mod losses;
mod nets;

pub use checkpoint::Checkpoint;
pub use losses::{lambda_weights, ImagineOpts, ImaginedRollout, LossStats, TargetPlanes};
pub use nets::{Bind, BoundDense, BoundGaussian, DenseNet, FinalInit, GaussianNet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{polyak_update, Adam, DiffError, Param, Result};

/// Ablation switches: each removes or replaces exactly one term of the
/// objective, leaving the random streams untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// Drop the consistency KL from the encoder/model loss.
    pub no_kl: bool,
    /// Drop the terminal value term from the encoder/model loss.
    pub no_value: bool,
    /// Zero the classifier reward coefficient in the policy loss.
    pub no_classifier: bool,
    /// Replace the rollout policy objective with the one-step critic value.
    pub modelfree_actor: bool,
}

/// Exploration noise schedule: linear interpolation of the standard
/// deviation over the first `decay_steps` environment steps, samples clipped
/// before being added to the squashed policy mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub decay_steps: u64,
    pub noise_clip: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration {
            sigma_start: 1.0,
            sigma_end: 0.1,
            decay_steps: 100_000,
            noise_clip: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub model_hidden: usize,
    /// Hidden layers per trunk.
    pub depth: usize,
    /// Rollout length K.
    pub k: usize,
    pub gamma: f64,
    /// Weight base of the exponentially-averaged multi-step policy objective.
    pub lambda: f64,
    /// Classifier reward coefficient c.
    pub classifier_coef: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub batch: usize,
    /// Gradient-update rounds per environment step.
    pub utd: usize,
    pub ablations: Ablations,
    pub exploration: Exploration,
    /// When set, train with logarithmic reward terms on rewards shifted by
    /// this constant (the buffer stores r + shift).
    pub log_reward_shift: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            latent_dim: 50,
            hidden: 512,
            model_hidden: 1024,
            depth: 2,
            k: 3,
            gamma: 0.99,
            lambda: 0.95,
            classifier_coef: 0.1,
            tau: 0.005,
            lr: 1e-4,
            max_grad_norm: 100.0,
            batch: 512,
            utd: 3,
            ablations: Ablations::default(),
            exploration: Exploration::default(),
            log_reward_shift: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DiffError::Contract(msg));
        if self.k == 0 {
            return bad("rollout length K must be >= 1".into());
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1)", self.lambda));
        }
        if self.classifier_coef < 0.0 {
            return bad("classifier coefficient must be nonnegative".into());
        }
        if self.exploration.sigma_end > self.exploration.sigma_start {
            return bad("sigma_end must not exceed sigma_start".into());
        }
        if self.depth == 0 || self.hidden == 0 || self.latent_dim == 0 {
            return bad("network sizes must be positive".into());
        }
        if let Some(a) = self.log_reward_shift {
            if a <= 0.0 {
                return bad(format!("log reward shift {a} must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-round update statistics for the metrics stream.
#[derive(Clone, Copy, Debug, Default)]
pub struct RoundStats {
    pub loss_encoder_model: f64,
    pub loss_policy: f64,
    pub loss_classifier: f64,
    pub loss_q: f64,
    pub loss_reward: f64,
    pub grad_norm_encoder_model: f64,
    pub grad_norm_policy: f64,
    pub grad_norm_classifier: f64,
    pub grad_norm_q: f64,
    pub grad_norm_reward: f64,
    pub intrinsic_mean: f64,
    pub classifier_accuracy: f64,
}

/// All six networks with target copies and optimizer states. Exclusively
/// owned by one training loop; evaluation works on snapshots.
#[derive(Clone)]
pub struct AgentState {
    pub cfg: AgentConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub encoder: GaussianNet,
    pub encoder_target: GaussianNet,
    pub model: GaussianNet,
    pub policy: DenseNet,
    pub reward: DenseNet,
    pub q: DenseNet,
    pub q_target: DenseNet,
    pub classifier: DenseNet,
    pub opt_encoder: Adam,
    pub opt_model: Adam,
    pub opt_policy: Adam,
    pub opt_reward: Adam,
    pub opt_q: Adam,
    pub opt_classifier: Adam,
}

impl AgentState {
    pub fn new(cfg: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let l = cfg.latent_dim;
        let mut trunk = vec![obs_dim];
        trunk.extend(std::iter::repeat(cfg.hidden).take(cfg.depth));
        let encoder = GaussianNet::new("encoder", &trunk, l, &mut rng);

        let mut model_sizes = vec![l + act_dim];
        model_sizes.extend(std::iter::repeat(cfg.model_hidden).take(cfg.depth));
        let model = GaussianNet::new("model", &model_sizes, l, &mut rng);

        let mut policy_sizes = vec![l];
        policy_sizes.extend(std::iter::repeat(cfg.hidden).take(cfg.depth));
        policy_sizes.push(act_dim);
        let policy = DenseNet::new("policy", &policy_sizes, false, nets::FinalInit::Zero, &mut rng);

        let mut head_sizes = vec![l + act_dim];
        head_sizes.extend(std::iter::repeat(cfg.hidden).take(cfg.depth));
        head_sizes.push(1);
        let reward = DenseNet::new("reward", &head_sizes, true, nets::FinalInit::Zero, &mut rng);
        let q = DenseNet::new("q", &head_sizes, true, nets::FinalInit::Zero, &mut rng);

        let mut cls_sizes = vec![2 * l + act_dim];
        cls_sizes.extend(std::iter::repeat(cfg.hidden).take(cfg.depth));
        cls_sizes.push(1);
        let classifier =
            DenseNet::new("classifier", &cls_sizes, false, nets::FinalInit::Orthogonal, &mut rng);

        let lr = cfg.lr;
        Ok(AgentState {
            obs_dim,
            act_dim,
            encoder_target: encoder.clone(),
            q_target: q.clone(),
            opt_encoder: Adam::new(encoder.params(), lr),
            opt_model: Adam::new(model.params(), lr),
            opt_policy: Adam::new(policy.params(), lr),
            opt_reward: Adam::new(reward.params(), lr),
            opt_q: Adam::new(q.params(), lr),
            opt_classifier: Adam::new(classifier.params(), lr),
            encoder,
            model,
            policy,
            reward,
            q,
            classifier,
            cfg,
        })
    }

    /// Exploration standard deviation at an environment step.
    pub fn sigma(&self, step: u64) -> f64 {
        let e = &self.cfg.exploration;
        let frac = if e.decay_steps == 0 {
            1.0
        } else {
            (step as f64 / e.decay_steps as f64).min(1.0)
        };
        e.sigma_start + (e.sigma_end - e.sigma_start) * frac
    }

    /// Soft-update both target networks.
    pub fn update_targets(&mut self) {
        let tau = self.cfg.tau;
        polyak_update(self.encoder_target.params_mut(), self.encoder.params(), tau);
        polyak_update(self.q_target.params_mut(), self.q.params(), tau);
    }

    /// Hard-sync both target networks.
    pub fn sync_targets(&mut self) {
        polyak_update(self.encoder_target.params_mut(), self.encoder.params(), 1.0);
        polyak_update(self.q_target.params_mut(), self.q.params(), 1.0);
    }

    pub(crate) fn networks(&self) -> Vec<(&'static str, &[Param])> {
        vec![
            ("encoder", self.encoder.params()),
            ("encoder_target", self.encoder_target.params()),
            ("model", self.model.params()),
            ("policy", self.policy.params()),
            ("reward", self.reward.params()),
            ("q", self.q.params()),
            ("q_target", self.q_target.params()),
            ("classifier", self.classifier.params()),
        ]
    }
}
