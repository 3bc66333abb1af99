//! Probability primitives: diagonal Gaussians with reparameterized sampling
//! and closed-form KL (differentiable, tensor-valued), categoricals and the
//! truncated geometric horizon distribution (plain `f64`, used by the exact
//! oracle), and Bernoulli cross-entropy for the classifier.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffmath::{DiffError, Result, Tensor};

/// Floor added to softplus-parameterized standard deviations. Keeps the KL
/// finite when a network becomes overconfident.
pub const STD_FLOOR: f64 = 1e-3;

/// Classifier probabilities are clamped into [CLAMP_EPS, 1 - CLAMP_EPS]
/// before any log, so cross-entropy and log-odds stay finite.
pub const CLAMP_EPS: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// Batched diagonal Gaussian over `[batch, dim]` tensors. `std` is strictly
/// positive; construct with [`DiagGaussian::from_raw_std`] when the scale
/// comes out of a network.
#[derive(Clone, Debug)]
pub struct DiagGaussian {
    pub mean: Tensor,
    pub std: Tensor,
}

impl DiagGaussian {
    pub fn new(mean: Tensor, std: Tensor) -> Result<Self> {
        if mean.shape() != std.shape() {
            return Err(DiffError::Dimension {
                op: "diag_gaussian",
                lhs: mean.shape().to_vec(),
                rhs: std.shape().to_vec(),
            });
        }
        if let Some(bad) = std.values().iter().find(|v| **v <= 0.0) {
            return Err(DiffError::Domain {
                op: "diag_gaussian",
                msg: format!("non-positive std {bad}"),
            });
        }
        Ok(DiagGaussian { mean, std })
    }

    /// std = softplus(raw) + floor.
    pub fn from_raw_std(mean: Tensor, raw_std: Tensor, floor: f64) -> Result<Self> {
        let std = raw_std.softplus()?.add_scalar(floor)?;
        DiagGaussian::new(mean, std)
    }

    pub fn dim(&self) -> usize {
        *self.mean.shape().last().unwrap_or(&0)
    }

    /// Reparameterized draw: mean + std ⊙ noise. Differentiable with respect
    /// to mean and std; `noise` is treated as a constant.
    pub fn rsample(&self, noise: &Tensor) -> Result<Tensor> {
        if noise.shape() != self.mean.shape() {
            return Err(DiffError::Dimension {
                op: "rsample",
                lhs: self.mean.shape().to_vec(),
                rhs: noise.shape().to_vec(),
            });
        }
        self.mean.add(&self.std.mul(noise)?)
    }

    /// Per-row log density: sum over dimensions of univariate Gaussian logs.
    /// `[batch, dim]` input gives a `[batch]` output.
    pub fn log_prob(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.mean.shape() {
            return Err(DiffError::Dimension {
                op: "log_prob",
                lhs: self.mean.shape().to_vec(),
                rhs: x.shape().to_vec(),
            });
        }
        let log_std = self.std.log()?;
        let inv_std = log_std.negate()?.exp()?;
        let z = x.sub(&self.mean)?.mul(&inv_std)?;
        let per_dim = z
            .square()?
            .scale(-0.5)?
            .sub(&log_std)?
            .add_scalar(-0.5 * LN_2PI)?;
        per_dim.sum_axis(1)
    }

    /// Closed-form KL(self ‖ q) per row, `[batch]`-shaped, differentiable
    /// with respect to both distributions' parameters.
    pub fn kl(&self, q: &DiagGaussian) -> Result<Tensor> {
        if self.mean.shape() != q.mean.shape() {
            return Err(DiffError::Dimension {
                op: "gaussian_kl",
                lhs: self.mean.shape().to_vec(),
                rhs: q.mean.shape().to_vec(),
            });
        }
        let log_p = self.std.log()?;
        let log_q = q.std.log()?;
        let inv_var_q = log_q.scale(-2.0)?.exp()?;
        let var_p = self.std.square()?;
        let mean_diff_sq = self.mean.sub(&q.mean)?.square()?;
        let per_dim = log_q
            .sub(&log_p)?
            .add(&var_p.add(&mean_diff_sq)?.mul(&inv_var_q)?.scale(0.5)?)?
            .add_scalar(-0.5)?;
        per_dim.sum_axis(1)
    }

    /// Both parameter tensors cut loose from the tape.
    pub fn detached(&self) -> DiagGaussian {
        DiagGaussian {
            mean: self.mean.detach(),
            std: self.std.detach(),
        }
    }
}

/// Detached `[rows, cols]` tensor of standard-normal draws.
pub fn standard_normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::from_vec(vec![rows, cols], data).expect("shape matches data")
}

/// Finite-support distribution with explicit probabilities.
#[derive(Clone, Debug)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(DiffError::Contract("empty categorical".to_string()));
        }
        if let Some(bad) = probs.iter().find(|p| **p < 0.0 || !p.is_finite()) {
            return Err(DiffError::Domain {
                op: "categorical",
                msg: format!("invalid probability {bad}"),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DiffError::Domain {
                op: "categorical",
                msg: format!("probabilities sum to {total}, not 1"),
            });
        }
        Ok(Categorical { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Horizon distribution that re-expresses geometric discounting as a random
/// stopping time: mass (1-γ)γ^H for H < K and the full tail γ^K at H = K.
#[derive(Clone, Debug)]
pub struct TruncatedGeometric {
    pub gamma: f64,
    pub k: usize,
    pmf: Vec<f64>,
}

impl TruncatedGeometric {
    pub fn new(gamma: f64, k: usize) -> Result<Self> {
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(DiffError::Domain {
                op: "truncated_geometric",
                msg: format!("gamma {gamma} outside (0, 1)"),
            });
        }
        if k == 0 {
            return Err(DiffError::Contract(
                "truncated geometric needs K >= 1".to_string(),
            ));
        }
        let mut pmf = Vec::with_capacity(k + 1);
        for h in 0..k {
            pmf.push((1.0 - gamma) * gamma.powi(h as i32));
        }
        pmf.push(gamma.powi(k as i32));
        Ok(TruncatedGeometric { gamma, k, pmf })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// The discounting identity: E_{P_K(H)}[sum_{t<=H} x_t] equals
    /// sum_t γ^t x_t. Returns (lhs, rhs) computed by independent routes —
    /// pmf-weighted enumeration on the left, a direct discounted sum on the
    /// right.
    pub fn discounted_identity(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.k + 1 {
            return Err(DiffError::Contract(format!(
                "identity needs K+1 = {} values, got {}",
                self.k + 1,
                x.len()
            )));
        }
        let mut lhs = 0.0;
        for (h, p) in self.pmf.iter().enumerate() {
            let prefix: f64 = x[..=h].iter().sum();
            lhs += p * prefix;
        }
        let rhs: f64 = x
            .iter()
            .enumerate()
            .map(|(t, v)| self.gamma.powi(t as i32) * v)
            .sum();
        Ok((lhs, rhs))
    }
}

/// Scalar Bernoulli cross-entropy with the probability clamped into
/// [CLAMP_EPS, 1 - CLAMP_EPS].
pub fn bernoulli_cross_entropy(p_hat: f64, label: u8) -> f64 {
    let p = p_hat.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
    match label {
        1 => -p.ln(),
        _ => -(1.0 - p).ln(),
    }
}

/// Batched Bernoulli cross-entropy over probability and label vectors,
/// clamped the same way. Differentiable through `probs`.
pub fn binary_cross_entropy(probs: &Tensor, labels: &Tensor) -> Result<Tensor> {
    if probs.shape() != labels.shape() {
        return Err(DiffError::Dimension {
            op: "binary_cross_entropy",
            lhs: probs.shape().to_vec(),
            rhs: labels.shape().to_vec(),
        });
    }
    let p = probs.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)?;
    let one_minus_labels = labels.scale(-1.0)?.add_scalar(1.0)?;
    let one_minus_p = p.scale(-1.0)?.add_scalar(1.0)?;
    labels
        .mul(&p.log()?)?
        .add(&one_minus_labels.mul(&one_minus_p.log()?)?)?
        .negate()
}
