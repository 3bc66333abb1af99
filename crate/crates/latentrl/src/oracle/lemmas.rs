//! Executable forms of the supporting identities: the horizon rewrite of the
//! objective, the entropy-regularized maximizer, and the reward log-shift
//! approximation bound.

use crate::dists::TruncatedGeometric;

use super::enumerate::expected_psi;
use super::solve::{exact_q, exact_returns};
use super::{OracleError, Result, TabularAlm, TabularMdp};

/// Both sides of the horizon rewrite of the objective:
/// lhs = (1-γ) · E[Σ_t γ^t r]      (linear fixed-point route)
/// rhs = E_{P_K(H)} E_{p(τ|H)}[Ψ]  (enumeration route)
pub fn lemma2_identity(mdp: &TabularMdp, alm: &TabularAlm, k: usize) -> Result<(f64, f64)> {
    let lhs = (1.0 - mdp.gamma) * exact_returns(mdp, alm)?;
    let q_table = exact_q(mdp, alm)?;
    let pk = TruncatedGeometric::new(mdp.gamma, k)?;
    let rhs: f64 = (0..=k)
        .map(|h| pk.pmf()[h] * expected_psi(mdp, alm, h, k, &q_table))
        .sum();
    Ok((lhs, rhs))
}

/// The maximizer of E_p[f - log p] over pmfs on a finite support: softmax(f).
pub fn lemma3_maximizer(f: &[f64]) -> Vec<f64> {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
    let norm: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / norm).collect()
}

/// E_p[f - log p], with 0·log 0 read as 0.
pub fn lemma3_objective(f: &[f64], p: &[f64]) -> f64 {
    f.iter()
        .zip(p)
        .map(|(fv, pv)| if *pv > 0.0 { pv * (fv - pv.ln()) } else { 0.0 })
        .sum()
}

/// The optimal objective value, log Σ e^f, by log-sum-exp.
pub fn lemma3_value(f: &[f64]) -> f64 {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + f.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Max deviation of the shifted-log reward transform a·(log(r+a) - log a)
/// from the identity over the given rewards, together with the Taylor bound
/// 1.1 · max(r)²/(2a) it must stay under.
pub fn log_shift_equivalence(r_values: &[f64], a: f64) -> Result<(f64, f64)> {
    if a <= 0.0 {
        return Err(OracleError::Invalid(format!("shift a = {a} must be positive")));
    }
    if let Some(bad) = r_values.iter().find(|r| **r < 0.0) {
        return Err(OracleError::Invalid(format!("negative reward {bad}")));
    }
    let mut max_dev = 0.0f64;
    let mut max_r = 0.0f64;
    for &r in r_values {
        let transformed = a * ((r + a).ln() - a.ln());
        max_dev = max_dev.max((transformed - r).abs());
        max_r = max_r.max(r);
    }
    let taylor_bound = 0.55 * max_r * max_r / a;
    Ok((max_dev, taylor_bound))
}
