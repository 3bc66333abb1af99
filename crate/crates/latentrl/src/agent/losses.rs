//! The five training losses and the imagined rollout they share.
//!
//! Gradient routing is done structurally: a network bound onto the tape
//! trains this step, a frozen network is evaluated as constants (gradients
//! still flow *through* its activations into the inputs). Target-network
//! outputs additionally have no tape nodes at all, so nothing upstream of
//! them is differentiated.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::diffmath::{clip_global_norm, DiffError, Result, Tape, Tensor};
use crate::dists::{binary_cross_entropy, standard_normal, DiagGaussian, CLAMP_EPS};
use crate::experience::SequenceBatch;

use super::nets::{collect_grads, Bind, BoundDense, BoundGaussian};
use super::{AgentState, RoundStats};

/// Truncated exponential weights over k-step values: (1-λ)λ^{k-1} for
/// k < K and the leftover geometric mass λ^{K-1} on the final term. The
/// weights are nonnegative and sum to one for every λ in [0, 1).
pub fn lambda_weights(lambda: f64, k: usize) -> Vec<f64> {
    assert!(k >= 1);
    let mut w = Vec::with_capacity(k);
    for i in 1..k {
        w.push((1.0 - lambda) * lambda.powi(i as i32 - 1));
    }
    w.push(lambda.powi(k as i32 - 1));
    w
}

/// One loss update's summary.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Target-encoder distributions for every window observation plane,
/// computed once per round with a single stacked forward pass and shared by
/// all losses (each use site still draws its own samples).
pub struct TargetPlanes {
    planes: Vec<DiagGaussian>,
}

impl TargetPlanes {
    pub fn plane(&self, t: usize) -> &DiagGaussian {
        &self.planes[t]
    }
}

/// Controls an imagined rollout.
pub struct ImagineOpts {
    /// Put the policy parameters on the tape (the policy-loss path).
    pub attach_policy: bool,
    /// Noise scale added to the squashed mean; 0 disables noise.
    pub sigma: f64,
    /// Override the first action instead of querying the policy.
    pub forced_first_action: Option<Tensor>,
    /// Sample latents (reparameterized); false propagates means.
    pub sample_latents: bool,
}

/// A K-step latent rollout: K+1 latents and actions, per-step predicted and
/// intrinsic rewards, and the value estimates Q(z_k, a_k) for k = 1..=K
/// (the last entry is the terminal value).
pub struct ImaginedRollout {
    pub latents: Vec<Tensor>,
    pub actions: Vec<Tensor>,
    pub rewards: Vec<Tensor>,
    pub intrinsic: Vec<Tensor>,
    pub q_values: Vec<Tensor>,
}

impl ImaginedRollout {
    pub fn terminal_q(&self) -> &Tensor {
        self.q_values.last().expect("rollout has K >= 1 steps")
    }
}

impl AgentState {
    /// Encode one observation. `sample` draws the reparameterized latent;
    /// otherwise the mean is returned.
    pub fn encode(
        &self,
        obs: &[f64],
        use_target: bool,
        sample: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>> {
        let x = Tensor::from_vec(vec![1, self.obs_dim], obs.to_vec())?;
        let net = if use_target {
            &self.encoder_target
        } else {
            &self.encoder
        };
        let dist = net.bind(Bind::Frozen).dist(&x)?;
        let z = if sample {
            let noise = standard_normal(1, self.cfg.latent_dim, rng);
            dist.rsample(&noise)?
        } else {
            dist.mean
        };
        Ok(z.values().to_vec())
    }

    /// Greedy action in normalized [-1, 1] coordinates: tanh of the policy
    /// head at the online encoder mean. With `explore`, scheduled clipped
    /// Gaussian noise is added and the result re-clipped into bounds.
    pub fn act(
        &self,
        obs: &[f64],
        step: u64,
        explore: bool,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>> {
        let z = self.encode(obs, false, false, rng)?;
        let zt = Tensor::from_vec(vec![1, self.cfg.latent_dim], z)?;
        let pre = self.policy.bind(Bind::Frozen).forward(&zt)?;
        let mut action: Vec<f64> = pre.values().iter().map(|v| v.tanh()).collect();
        if explore {
            let sigma = self.sigma(step);
            let clip = self.cfg.exploration.noise_clip;
            for a in &mut action {
                let noise = (sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .clamp(-clip, clip);
                *a = (*a + noise).clamp(-1.0, 1.0);
            }
        }
        Ok(action)
    }

    /// Evaluate the target encoder once over every observation plane of the
    /// window and split the result back into per-offset distributions.
    pub fn target_planes(&self, batch: &SequenceBatch) -> Result<TargetPlanes> {
        let enc_t = self.encoder_target.bind(Bind::Frozen);
        let stacked = enc_t.dist(&batch.obs_stacked())?;
        let b = batch.batch;
        let mut planes = Vec::with_capacity(batch.k + 1);
        for t in 0..=batch.k {
            planes.push(DiagGaussian::new(
                stacked.mean.rows_detached(t * b, b)?,
                stacked.std.rows_detached(t * b, b)?,
            )?);
        }
        Ok(TargetPlanes { planes })
    }

    /// Reward term used inside the model-based losses: the predicted reward
    /// itself, or its shifted-log transform when configured.
    fn reward_term(&self, predicted: &Tensor) -> Result<Tensor> {
        match self.cfg.log_reward_shift {
            None => Ok(predicted.clone()),
            Some(a) => predicted
                .clamp(CLAMP_EPS, f64::MAX)?
                .log()?
                .add_scalar(-a.ln())?
                .scale(a),
        }
    }

    /// Value term used inside the model-based losses, mirroring
    /// [`Self::reward_term`] for the terminal Q.
    fn value_term(&self, q: &Tensor) -> Result<Tensor> {
        match self.cfg.log_reward_shift {
            None => Ok(q.clone()),
            Some(a) => {
                let scale = a / (1.0 - self.cfg.gamma);
                q.clamp(CLAMP_EPS, f64::MAX)?
                    .log()?
                    .add_scalar(-scale.ln())?
                    .scale(a)
            }
        }
    }

    /// Roll the latent model forward from a batch of observations, taking
    /// actions from the current policy.
    pub fn imagine(
        &self,
        tape: &Tape,
        obs: &Tensor,
        opts: &ImagineOpts,
        rng: &mut ChaCha12Rng,
    ) -> Result<ImaginedRollout> {
        let policy = if opts.attach_policy {
            self.policy.bind(Bind::Tape(tape))
        } else {
            self.policy.bind(Bind::Frozen)
        };
        self.imagine_with_policy(tape, obs, opts, &policy, rng)
    }

    /// Log-odds intrinsic reward for explicit latent/action vectors.
    pub fn intrinsic_reward(&self, z: &[f64], action: &[f64], z_next: &[f64]) -> Result<f64> {
        let zt = Tensor::from_vec(vec![1, z.len()], z.to_vec())?;
        let at = Tensor::from_vec(vec![1, action.len()], action.to_vec())?;
        let znt = Tensor::from_vec(vec![1, z_next.len()], z_next.to_vec())?;
        let input = Tensor::concat_cols(&[&znt, &at, &zt])?;
        let p = self
            .classifier
            .bind(Bind::Frozen)
            .forward_scalar(&input)?
            .sigmoid()?
            .values()[0]
            .clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        Ok((p / (1.0 - p)).ln())
    }

    // ── Loss graphs ─────────────────────────────────────────────────────

    /// Encoder/model objective on buffered K-sequences: predicted rewards
    /// minus the consistency KL along the latent rollout, plus the terminal
    /// value, negated into a loss. No discounting across the window.
    fn build_encoder_model_loss(
        &self,
        batch: &SequenceBatch,
        planes: &TargetPlanes,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tape, Tensor, BoundGaussian, BoundGaussian)> {
        if batch.k != self.cfg.k {
            return Err(DiffError::Contract(format!(
                "sequence batch has K = {}, agent expects {}",
                batch.k, self.cfg.k
            )));
        }
        let tape = Tape::new();
        let enc = self.encoder.bind(Bind::Tape(&tape));
        let model = self.model.bind(Bind::Tape(&tape));
        let reward = self.reward.bind(Bind::Frozen);
        let q_net = self.q.bind(Bind::Frozen);
        let policy = self.policy.bind(Bind::Frozen);

        let (b, l) = (batch.batch, self.cfg.latent_dim);
        let mut z = enc.dist(&batch.obs(0))?.rsample(&standard_normal(b, l, rng))?;
        let mut objective: Option<Tensor> = None;
        let add = |acc: &mut Option<Tensor>, term: Tensor| -> Result<()> {
            *acc = Some(match acc.take() {
                None => term,
                Some(prev) => prev.add(&term)?,
            });
            Ok(())
        };

        let mut step_inputs = Vec::with_capacity(batch.k);
        for i in 0..batch.k {
            let za = Tensor::concat_cols(&[&z, &batch.action(i)])?;
            let dist = model.dist(&za)?;
            step_inputs.push(za);
            if !self.cfg.ablations.no_kl {
                add(&mut objective, dist.kl(planes.plane(i + 1))?.negate()?)?;
            }
            z = dist.rsample(&standard_normal(b, l, rng))?;
        }
        // The reward head does not feed back into the rollout: evaluate it
        // once over the stacked step inputs.
        let refs: Vec<&Tensor> = step_inputs.iter().collect();
        let reward_flat = self.reward_term(&reward.forward_scalar(&Tensor::concat_rows(&refs)?)?)?;
        for i in 0..batch.k {
            add(&mut objective, reward_flat.slice_rows(i * b, b)?)?;
        }

        if !self.cfg.ablations.no_value {
            let a_k = policy.forward(&z)?.tanh()?;
            let za = Tensor::concat_cols(&[&z, &a_k])?;
            add(&mut objective, self.value_term(&q_net.forward_scalar(&za)?)?)?;
        }

        let loss = objective
            .expect("objective has at least the reward terms")
            .mean_all()?
            .negate()?;
        Ok((tape, loss, enc, model))
    }

    /// Policy objective: λ-weighted average over k = 1..K of the imagined
    /// k-step value (discounted predicted + intrinsic rewards, value
    /// bootstrap), negated. The model-free ablation regresses to the plain
    /// critic value at the encoded state.
    fn build_policy_loss(
        &self,
        batch: &SequenceBatch,
        planes: &TargetPlanes,
        env_step: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tape, Tensor, BoundDense, f64)> {
        let tape = Tape::new();
        let b = batch.batch;
        let z0 = planes
            .plane(0)
            .rsample(&standard_normal(b, self.cfg.latent_dim, rng))?;
        if self.cfg.ablations.modelfree_actor {
            let policy = self.policy.bind(Bind::Tape(&tape));
            let q_net = self.q.bind(Bind::Frozen);
            let a = policy.forward(&z0)?.tanh()?;
            let za = Tensor::concat_cols(&[&z0, &a])?;
            let loss = q_net.forward_scalar(&za)?.mean_all()?.negate()?;
            return Ok((tape, loss, policy, 0.0));
        }

        let opts = ImagineOpts {
            attach_policy: true,
            sigma: self.sigma(env_step),
            forced_first_action: None,
            sample_latents: true,
        };
        let policy = self.policy.bind(Bind::Tape(&tape));
        let rollout = self.imagine_from_latent(&tape, z0, &opts, &policy, rng)?;

        let gamma = self.cfg.gamma;
        let c = if self.cfg.ablations.no_classifier {
            0.0
        } else {
            self.cfg.classifier_coef
        };
        let weights = lambda_weights(self.cfg.lambda, self.cfg.k);

        // Shared discounted prefix: value_k = prefix_k + γ^k Q_k.
        let mut value_total: Option<Tensor> = None;
        let mut prefix: Option<Tensor> = None;
        let mut intrinsic_mean = 0.0;
        for k in 1..=self.cfg.k {
            let i = k - 1;
            let step_reward = rollout.rewards[i]
                .add(&rollout.intrinsic[i].scale(c)?)?
                .scale(gamma.powi(i as i32))?;
            intrinsic_mean += mean_of(&rollout.intrinsic[i]);
            prefix = Some(match prefix.take() {
                None => step_reward,
                Some(p) => p.add(&step_reward)?,
            });
            let value_k = prefix
                .as_ref()
                .expect("prefix set above")
                .add(&rollout.q_values[i].scale(gamma.powi(k as i32))?)?;
            let weighted = value_k.scale(weights[k - 1])?;
            value_total = Some(match value_total.take() {
                None => weighted,
                Some(v) => v.add(&weighted)?,
            });
        }
        intrinsic_mean /= self.cfg.k as f64;

        let loss = value_total
            .expect("K >= 1")
            .mean_all()?
            .negate()?;
        Ok((tape, loss, policy, intrinsic_mean))
    }

    /// `imagine` with a caller-supplied bound policy (so the policy leaves
    /// remain visible for gradient extraction).
    fn imagine_with_policy(
        &self,
        tape: &Tape,
        obs: &Tensor,
        opts: &ImagineOpts,
        policy: &BoundDense,
        rng: &mut ChaCha12Rng,
    ) -> Result<ImaginedRollout> {
        let enc_t = self.encoder_target.bind(Bind::Frozen);
        let start = enc_t.dist(obs)?;
        let z0 = if opts.sample_latents {
            let b = obs.shape()[0];
            start.rsample(&standard_normal(b, self.cfg.latent_dim, rng))?
        } else {
            start.mean.clone()
        };
        self.imagine_from_latent(tape, z0, opts, policy, rng)
    }

    /// Rollout core, seeded with an explicit starting latent.
    ///
    /// The policy/model recursion is inherently sequential; the reward,
    /// classifier, and value heads do not feed back into it, so they run
    /// once on row-stacked inputs covering every step.
    fn imagine_from_latent(
        &self,
        _tape: &Tape,
        z0: Tensor,
        opts: &ImagineOpts,
        policy: &BoundDense,
        rng: &mut ChaCha12Rng,
    ) -> Result<ImaginedRollout> {
        let k = self.cfg.k;
        let batch = z0.shape()[0];
        let (l, a_dim) = (self.cfg.latent_dim, self.act_dim);

        let model = self.model.bind(Bind::Frozen);
        let reward = self.reward.bind(Bind::Frozen);
        let q_net = self.q.bind(Bind::Frozen);
        let classifier = self.classifier.bind(Bind::Frozen);

        let mut latents = vec![z0];
        let mut actions: Vec<Tensor> = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let z = latents[i].clone();
            let action = match (&opts.forced_first_action, i) {
                (Some(a), 0) => a.clone(),
                _ => {
                    let mean = policy.forward(&z)?.tanh()?;
                    if opts.sigma > 0.0 {
                        let clip = self.cfg.exploration.noise_clip;
                        let noise: Vec<f64> = (0..batch * a_dim)
                            .map(|_| {
                                (opts.sigma
                                    * rng.sample::<f64, _>(rand_distr::StandardNormal))
                                .clamp(-clip, clip)
                            })
                            .collect();
                        let noise = Tensor::from_vec(vec![batch, a_dim], noise)?;
                        mean.add(&noise)?.clamp(-1.0, 1.0)?
                    } else {
                        mean
                    }
                }
            };
            actions.push(action.clone());
            if i == k {
                break;
            }
            let za = Tensor::concat_cols(&[&z, &action])?;
            let dist = model.dist(&za)?;
            let z_next = if opts.sample_latents {
                dist.rsample(&standard_normal(batch, l, rng))?
            } else {
                dist.mean.clone()
            };
            latents.push(z_next);
        }

        // Stacked head evaluations, sliced back into per-step vectors.
        let sa: Vec<Tensor> = (0..k)
            .map(|i| Tensor::concat_cols(&[&latents[i], &actions[i]]))
            .collect::<Result<_>>()?;
        let sa_refs: Vec<&Tensor> = sa.iter().collect();
        let reward_flat =
            self.reward_term(&reward.forward_scalar(&Tensor::concat_rows(&sa_refs)?)?)?;

        let cls_in: Vec<Tensor> = (0..k)
            .map(|i| Tensor::concat_cols(&[&latents[i + 1], &actions[i], &latents[i]]))
            .collect::<Result<_>>()?;
        let cls_refs: Vec<&Tensor> = cls_in.iter().collect();
        let prob = classifier
            .forward_scalar(&Tensor::concat_rows(&cls_refs)?)?
            .sigmoid()?
            .clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)?;
        let one_minus = prob.scale(-1.0)?.add_scalar(1.0)?;
        let intrinsic_flat = prob.log()?.sub(&one_minus.log()?)?;

        let qa: Vec<Tensor> = (1..=k)
            .map(|i| Tensor::concat_cols(&[&latents[i], &actions[i]]))
            .collect::<Result<_>>()?;
        let qa_refs: Vec<&Tensor> = qa.iter().collect();
        let q_flat = self.value_term(&q_net.forward_scalar(&Tensor::concat_rows(&qa_refs)?)?)?;

        let split = |flat: &Tensor| -> Result<Vec<Tensor>> {
            (0..k).map(|i| flat.slice_rows(i * batch, batch)).collect()
        };
        Ok(ImaginedRollout {
            latents,
            actions,
            rewards: split(&reward_flat)?,
            intrinsic: split(&intrinsic_flat)?,
            q_values: split(&q_flat)?,
        })
    }

    /// Classifier cross-entropy on the single-step view: real next latents
    /// (label 1) against model-predicted next latents (label 0), both from
    /// the same (z_t, a_t). Only the classifier trains.
    fn build_classifier_loss(
        &self,
        batch: &SequenceBatch,
        planes: &TargetPlanes,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tape, Tensor, BoundDense, f64)> {
        let tape = Tape::new();
        let classifier = self.classifier.bind(Bind::Tape(&tape));
        let model = self.model.bind(Bind::Frozen);

        let (b, l) = (batch.batch, self.cfg.latent_dim);
        let a0 = batch.action(0);
        let z_t = planes.plane(0).rsample(&standard_normal(b, l, rng))?;
        let z_real = planes.plane(1).rsample(&standard_normal(b, l, rng))?;
        let za = Tensor::concat_cols(&[&z_t, &a0])?;
        let z_fake = model
            .dist(&za)?
            .rsample(&standard_normal(b, l, rng))?
            .detach();

        let real_in = Tensor::concat_cols(&[&z_real, &a0, &z_t])?;
        let fake_in = Tensor::concat_cols(&[&z_fake, &a0, &z_t])?;
        let p_all = classifier
            .forward_scalar(&Tensor::concat_rows(&[&real_in, &fake_in])?)?
            .sigmoid()?;
        let p_real = p_all.slice_rows(0, b)?;
        let p_fake = p_all.slice_rows(b, b)?;

        let ones = Tensor::from_vec(vec![b], vec![1.0; b])?;
        let zeros = Tensor::from_vec(vec![b], vec![0.0; b])?;
        let loss = binary_cross_entropy(&p_real, &ones)?
            .add(&binary_cross_entropy(&p_fake, &zeros)?)?
            .scale(0.5)?
            .mean_all()?;

        let correct = p_real.values().iter().filter(|p| **p > 0.5).count()
            + p_fake.values().iter().filter(|p| **p < 0.5).count();
        let accuracy = correct as f64 / (2 * b) as f64;
        Ok((tape, loss, classifier, accuracy))
    }

    /// TD loss on real single transitions; latents come from the target
    /// encoder, the bootstrap uses the target Q at the policy's next action,
    /// and timeouts still bootstrap (only true terminals do not).
    fn build_q_loss(
        &self,
        batch: &SequenceBatch,
        planes: &TargetPlanes,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tape, Tensor, BoundDense)> {
        let tape = Tape::new();
        let q_net = self.q.bind(Bind::Tape(&tape));
        let q_t = self.q_target.bind(Bind::Frozen);
        let policy = self.policy.bind(Bind::Frozen);

        let (b, l) = (batch.batch, self.cfg.latent_dim);
        let z_t = planes.plane(0).rsample(&standard_normal(b, l, rng))?;
        let z_next = planes.plane(1).rsample(&standard_normal(b, l, rng))?;

        let a_next = policy.forward(&z_next)?.tanh()?;
        let q_next = q_t.forward_scalar(&Tensor::concat_cols(&[&z_next, &a_next])?)?;
        let target = batch
            .reward(0)
            .add(&q_next.mul(&batch.bootstrap_mask(0))?.scale(self.cfg.gamma)?)?
            .detach();

        let q_pred = q_net.forward_scalar(&Tensor::concat_cols(&[&z_t, &batch.action(0)])?)?;
        let loss = q_pred.sub(&target)?.square()?.mean_all()?;
        Ok((tape, loss, q_net))
    }

    /// Mean squared error of the reward head on real transitions.
    fn build_reward_loss(
        &self,
        batch: &SequenceBatch,
        planes: &TargetPlanes,
        rng: &mut ChaCha12Rng,
    ) -> Result<(Tape, Tensor, BoundDense)> {
        let tape = Tape::new();
        let reward = self.reward.bind(Bind::Tape(&tape));

        let (b, l) = (batch.batch, self.cfg.latent_dim);
        let z_t = planes.plane(0).rsample(&standard_normal(b, l, rng))?;
        let pred = reward.forward_scalar(&Tensor::concat_cols(&[&z_t, &batch.action(0)])?)?;
        let loss = pred.sub(&batch.reward(0))?.square()?.mean_all()?;
        Ok((tape, loss, reward))
    }

    // ── Loss values (no update) ─────────────────────────────────────────

    pub fn encoder_model_loss_value(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let planes = self.target_planes(batch)?;
        let (_, loss, _, _) = self.build_encoder_model_loss(batch, &planes, rng)?;
        Ok(loss.item())
    }

    pub fn policy_loss_value(
        &self,
        batch: &SequenceBatch,
        env_step: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let planes = self.target_planes(batch)?;
        let (_, loss, _, _) = self.build_policy_loss(batch, &planes, env_step, rng)?;
        Ok(loss.item())
    }

    pub fn classifier_loss_value(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<f64> {
        let planes = self.target_planes(batch)?;
        let (_, loss, _, _) = self.build_classifier_loss(batch, &planes, rng)?;
        Ok(loss.item())
    }

    pub fn q_loss_value(&self, batch: &SequenceBatch, rng: &mut ChaCha12Rng) -> Result<f64> {
        let planes = self.target_planes(batch)?;
        let (_, loss, _) = self.build_q_loss(batch, &planes, rng)?;
        Ok(loss.item())
    }

    pub fn reward_loss_value(&self, batch: &SequenceBatch, rng: &mut ChaCha12Rng) -> Result<f64> {
        let planes = self.target_planes(batch)?;
        let (_, loss, _) = self.build_reward_loss(batch, &planes, rng)?;
        Ok(loss.item())
    }

    // ── Gradients (no update) — used by the gradient-check suites ───────

    /// Loss value plus dense gradients for (encoder, model).
    pub fn encoder_model_grads(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let planes = self.target_planes(batch)?;
        let (tape, loss, enc, model) = self.build_encoder_model_loss(batch, &planes, rng)?;
        check_loss(&loss)?;
        let mut grads = tape.backward(&loss)?;
        let ge = collect_grads(&mut grads, enc.leaf_tensors());
        let gm = collect_grads(&mut grads, model.leaf_tensors());
        Ok((loss.item(), ge, gm))
    }

    pub fn policy_grads(
        &self,
        batch: &SequenceBatch,
        env_step: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let planes = self.target_planes(batch)?;
        let (tape, loss, policy, _) = self.build_policy_loss(batch, &planes, env_step, rng)?;
        check_loss(&loss)?;
        let mut grads = tape.backward(&loss)?;
        let gp = collect_grads(&mut grads, policy.leaf_tensors());
        Ok((loss.item(), gp))
    }

    pub fn classifier_grads(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let planes = self.target_planes(batch)?;
        let (tape, loss, cls, _) = self.build_classifier_loss(batch, &planes, rng)?;
        check_loss(&loss)?;
        let mut grads = tape.backward(&loss)?;
        let gc = collect_grads(&mut grads, cls.leaf_tensors());
        Ok((loss.item(), gc))
    }

    pub fn q_grads(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let planes = self.target_planes(batch)?;
        let (tape, loss, q_net) = self.build_q_loss(batch, &planes, rng)?;
        check_loss(&loss)?;
        let mut grads = tape.backward(&loss)?;
        let gq = collect_grads(&mut grads, q_net.leaf_tensors());
        Ok((loss.item(), gq))
    }

    pub fn reward_grads(
        &self,
        batch: &SequenceBatch,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let planes = self.target_planes(batch)?;
        let (tape, loss, reward) = self.build_reward_loss(batch, &planes, rng)?;
        check_loss(&loss)?;
        let mut grads = tape.backward(&loss)?;
        let gr = collect_grads(&mut grads, reward.leaf_tensors());
        Ok((loss.item(), gr))
    }

    // ── Updates ─────────────────────────────────────────────────────────

    /// One full update round in the pseudocode order: encoder+model ascent,
    /// policy ascent, then classifier/Q/reward regression. Target updates
    /// are the caller's separate step.
    pub fn update_round(
        &mut self,
        batch: &SequenceBatch,
        env_step: u64,
        rng: &mut ChaCha12Rng,
    ) -> Result<RoundStats> {
        let mut stats = RoundStats::default();
        let planes = self.target_planes(batch)?;

        // Encoder and model share one loss and a joint gradient-norm clip.
        {
            let (tape, loss, enc, model) = self.build_encoder_model_loss(batch, &planes, rng)?;
            check_loss(&loss)?;
            stats.loss_encoder_model = loss.item();
            let mut grads = tape.backward(&loss)?;
            let mut ge = collect_grads(&mut grads, enc.leaf_tensors());
            let n_enc = ge.len();
            ge.extend(collect_grads(&mut grads, model.leaf_tensors()));
            stats.grad_norm_encoder_model = clip_global_norm(&mut ge, self.cfg.max_grad_norm);
            let gm = ge.split_off(n_enc);
            self.opt_encoder.step(self.encoder.params_mut(), &ge)?;
            self.opt_model.step(self.model.params_mut(), &gm)?;
        }

        {
            let (tape, loss, policy, intr) = self.build_policy_loss(batch, &planes, env_step, rng)?;
            check_loss(&loss)?;
            stats.loss_policy = loss.item();
            stats.intrinsic_mean = intr;
            let mut grads = tape.backward(&loss)?;
            let mut gp = collect_grads(&mut grads, policy.leaf_tensors());
            stats.grad_norm_policy = clip_global_norm(&mut gp, self.cfg.max_grad_norm);
            self.opt_policy.step(self.policy.params_mut(), &gp)?;
        }

        {
            let (tape, loss, cls, acc) = self.build_classifier_loss(batch, &planes, rng)?;
            check_loss(&loss)?;
            stats.loss_classifier = loss.item();
            stats.classifier_accuracy = acc;
            let mut grads = tape.backward(&loss)?;
            let mut gc = collect_grads(&mut grads, cls.leaf_tensors());
            stats.grad_norm_classifier = clip_global_norm(&mut gc, self.cfg.max_grad_norm);
            self.opt_classifier.step(self.classifier.params_mut(), &gc)?;
        }

        {
            let (tape, loss, q_net) = self.build_q_loss(batch, &planes, rng)?;
            check_loss(&loss)?;
            stats.loss_q = loss.item();
            let mut grads = tape.backward(&loss)?;
            let mut gq = collect_grads(&mut grads, q_net.leaf_tensors());
            stats.grad_norm_q = clip_global_norm(&mut gq, self.cfg.max_grad_norm);
            self.opt_q.step(self.q.params_mut(), &gq)?;
        }

        {
            let (tape, loss, reward) = self.build_reward_loss(batch, &planes, rng)?;
            check_loss(&loss)?;
            stats.loss_reward = loss.item();
            let mut grads = tape.backward(&loss)?;
            let mut gr = collect_grads(&mut grads, reward.leaf_tensors());
            stats.grad_norm_reward = clip_global_norm(&mut gr, self.cfg.max_grad_norm);
            self.opt_reward.step(self.reward.params_mut(), &gr)?;
        }

        Ok(stats)
    }
}

fn mean_of(t: &Tensor) -> f64 {
    t.values().iter().sum::<f64>() / t.len() as f64
}

fn check_loss(loss: &Tensor) -> Result<()> {
    if cfg!(debug_assertions) {
        loss.check_finite("loss")?;
    } else if !loss.item().is_finite() {
        return Err(DiffError::NonFinite {
            what: "loss",
            detail: format!("{}", loss.item()),
        });
    }
    Ok(())
}
