//! Exact, enumeration-based verification of the return bound and its
//! supporting identities on finite MDPs.
//!
//! Encoder, latent model, and policy are categorical tables here, so every
//! expectation is computed exactly: K-step quantities by exhaustive
//! trajectory enumeration (mirroring the derivations literally), infinite
//! horizon quantities by solving the linear Bellman fixed point. There is no
//! sampling error anywhere in this module.

mod bounds;
mod enumerate;
mod generator;
mod lemmas;
mod solve;

pub use bounds::{
    check_monotone, check_tightness, eval_lower_bound, lambda_weighted_bound, offline_bound,
    optimal_discount,
};
pub use enumerate::{expected_psi, optimal_latent_dynamics, TrajectoryDist};
pub use generator::{random_behavior_policy, random_instance, InstanceConfig};
pub use lemmas::{
    lemma2_identity, lemma3_maximizer, lemma3_objective, lemma3_value, log_shift_equivalence,
};
pub use solve::{exact_q, exact_q_for, exact_returns, exact_returns_for, exact_values, state_policy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid tabular instance: {0}")]
    Invalid(String),
    #[error("{op}: zero or negative entry at {entry}")]
    Domain { op: &'static str, entry: String },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("degenerate instance: {0}")]
    Degenerate(String),
    #[error("bound sequence increased at K={k}: L^{k} = {lk} < L^{k_next} = {lk_next}")]
    NotMonotone {
        k: usize,
        lk: f64,
        k_next: usize,
        lk_next: f64,
    },
    #[error(transparent)]
    Dist(#[from] crate::diffmath::DiffError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Finite MDP with explicit tables. Rewards are nonnegative; the bound
/// evaluations additionally require them strictly positive.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Initial distribution, `[s]`.
    pub p0: Vec<f64>,
    /// Transition tensor, `[s][a][s']` flattened row-major.
    pub trans: Vec<f64>,
    /// Reward table, `[s][a]` flattened.
    pub reward: Vec<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        p0: Vec<f64>,
        trans: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            n_states,
            n_actions,
            p0,
            trans,
            reward,
            gamma,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states, self.n_actions);
        if s == 0 || a == 0 {
            return Err(OracleError::Invalid("empty state or action space".into()));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(OracleError::Invalid(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if self.p0.len() != s || self.trans.len() != s * a * s || self.reward.len() != s * a {
            return Err(OracleError::Invalid("table sizes do not match dims".into()));
        }
        check_stochastic_row(&self.p0, "p0")?;
        for si in 0..s {
            for ai in 0..a {
                let row = &self.trans[(si * a + ai) * s..(si * a + ai + 1) * s];
                check_stochastic_row(row, &format!("P(.|s={si},a={ai})"))?;
            }
        }
        if let Some((i, bad)) = self
            .reward
            .iter()
            .enumerate()
            .find(|(_, r)| **r < 0.0 || !r.is_finite())
        {
            return Err(OracleError::Invalid(format!(
                "reward[{}][{}] = {bad} is negative or non-finite",
                i / a,
                i % a
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.trans[(s * self.n_actions + a) * self.n_states + s_next]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }
}

/// Categorical encoder e(z|s), latent model m(z'|z,a), and policy π(a|z).
/// All rows are stochastic and strictly positive so every log in the bound
/// stays finite.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TabularAlm {
    pub n_latents: usize,
    pub n_actions: usize,
    /// `[s][z]`
    pub encoder: Vec<f64>,
    /// `[z][a][z']`
    pub model: Vec<f64>,
    /// `[z][a]`
    pub policy: Vec<f64>,
}

impl TabularAlm {
    pub fn new(
        mdp: &TabularMdp,
        n_latents: usize,
        encoder: Vec<f64>,
        model: Vec<f64>,
        policy: Vec<f64>,
    ) -> Result<Self> {
        let alm = TabularAlm {
            n_latents,
            n_actions: mdp.n_actions,
            encoder,
            model,
            policy,
        };
        alm.validate(mdp)?;
        Ok(alm)
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        let (s, a, z) = (mdp.n_states, mdp.n_actions, self.n_latents);
        if z == 0 {
            return Err(OracleError::Invalid("empty latent space".into()));
        }
        if self.n_actions != a {
            return Err(OracleError::Invalid("action count mismatch with MDP".into()));
        }
        if self.encoder.len() != s * z || self.model.len() != z * a * z || self.policy.len() != z * a
        {
            return Err(OracleError::Invalid(
                "encoder/model/policy sizes do not match dims".into(),
            ));
        }
        for (name, rows, width) in [
            ("encoder", &self.encoder, z),
            ("model", &self.model, z),
            ("policy", &self.policy, a),
        ] {
            for (ri, row) in rows.chunks(width).enumerate() {
                check_stochastic_row(row, &format!("{name} row {ri}"))?;
                if let Some(bad) = row.iter().find(|p| **p <= 0.0) {
                    return Err(OracleError::Invalid(format!(
                        "{name} row {ri} has non-positive entry {bad}; strict positivity required"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn e(&self, s: usize, z: usize) -> f64 {
        self.encoder[s * self.n_latents + z]
    }

    #[inline]
    pub fn m(&self, z: usize, a: usize, z_next: usize) -> f64 {
        self.model[(z * self.n_actions + a) * self.n_latents + z_next]
    }

    #[inline]
    pub fn pi(&self, z: usize, a: usize) -> f64 {
        self.policy[z * self.n_actions + a]
    }
}

fn check_stochastic_row(row: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = row.iter().find(|p| **p < 0.0 || !p.is_finite()) {
        return Err(OracleError::Invalid(format!(
            "{what} has invalid entry {bad}"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(OracleError::Invalid(format!(
            "{what} sums to {total}, not 1"
        )));
    }
    Ok(())
}
