//! The K-step return bound and its variants, evaluated exactly.

use crate::dists::TruncatedGeometric;

use super::enumerate::{expected_psi, optimal_latent_dynamics, walk_p};
use super::solve::{exact_q, exact_q_for, exact_returns};
use super::{OracleError, Result, TabularAlm, TabularMdp};

/// Per-entry log tables with positivity checks that name the offending entry.
struct LogTables {
    log_e: Vec<f64>,
    log_m: Vec<f64>,
    log_r: Vec<f64>,
    log_q: Vec<f64>,
}

fn log_tables(mdp: &TabularMdp, alm: &TabularAlm, q_table: &[f64]) -> Result<LogTables> {
    let a_n = mdp.n_actions;
    let log_of = |v: f64, op: &'static str, entry: String| -> Result<f64> {
        if v <= 0.0 {
            Err(OracleError::Domain { op, entry })
        } else {
            Ok(v.ln())
        }
    };
    let mut log_r = Vec::with_capacity(mdp.reward.len());
    for (i, r) in mdp.reward.iter().enumerate() {
        log_r.push(log_of(*r, "log r", format!("r(s={}, a={}) = {r}", i / a_n, i % a_n))?);
    }
    let mut log_q = Vec::with_capacity(q_table.len());
    for (i, q) in q_table.iter().enumerate() {
        log_q.push(log_of(*q, "log Q", format!("Q(s={}, a={}) = {q}", i / a_n, i % a_n))?);
    }
    let log_e = alm
        .encoder
        .iter()
        .enumerate()
        .map(|(i, v)| log_of(*v, "log e", format!("e index {i} = {v}")))
        .collect::<Result<Vec<_>>>()?;
    let log_m = alm
        .model
        .iter()
        .enumerate()
        .map(|(i, v)| log_of(*v, "log m", format!("m index {i} = {v}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(LogTables {
        log_e,
        log_m,
        log_r,
        log_q,
    })
}

/// The K-step objective: the exact expectation, under the model-rollout
/// trajectory distribution, of
///   Σ_{t<K} γ^t [ (1-γ) log r(s_t,a_t) + log e(z_{t+1}|s_{t+1})
///                 - log m(z_{t+1}|z_t,a_t) ]  +  γ^K log Q(s_K,a_K),
/// computed by exhaustive enumeration of all length-K (s, z, a) trajectories.
pub fn eval_lower_bound(mdp: &TabularMdp, alm: &TabularAlm, k: usize) -> Result<f64> {
    let q_table = exact_q(mdp, alm)?;
    eval_lower_bound_with_q(mdp, alm, k, &q_table)
}

/// Same objective with a caller-supplied (positive) Q table.
pub fn eval_lower_bound_with_q(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    k: usize,
    q_table: &[f64],
) -> Result<f64> {
    if k == 0 {
        return Err(OracleError::Invalid("bound needs K >= 1".into()));
    }
    let logs = log_tables(mdp, alm, q_table)?;
    let (s_n, z_n, a_n) = (mdp.n_states, alm.n_latents, mdp.n_actions);
    let gamma = mdp.gamma;
    let gpow: Vec<f64> = (0..=k).map(|t| gamma.powi(t as i32)).collect();

    struct Ctx<'a> {
        mdp: &'a TabularMdp,
        alm: &'a TabularAlm,
        logs: &'a LogTables,
        gpow: &'a [f64],
        k: usize,
        one_minus_gamma: f64,
    }

    // Carries the running probability and the running discounted log terms;
    // leaves add the terminal log Q.
    fn recurse(ctx: &Ctx, t: usize, s: usize, z: usize, a: usize, prob: f64, acc: f64, total: &mut f64) {
        let (s_n, z_n, a_n) = (ctx.mdp.n_states, ctx.alm.n_latents, ctx.mdp.n_actions);
        if t == ctx.k {
            *total += prob * (acc + ctx.gpow[ctx.k] * ctx.logs.log_q[s * a_n + a]);
            return;
        }
        let reward_term = ctx.gpow[t] * ctx.one_minus_gamma * ctx.logs.log_r[s * a_n + a];
        for s2 in 0..s_n {
            let ps = ctx.mdp.p(s, a, s2);
            if ps == 0.0 {
                continue;
            }
            for z2 in 0..z_n {
                let pm = ctx.alm.m(z, a, z2);
                let consistency = ctx.gpow[t]
                    * (ctx.logs.log_e[s2 * z_n + z2]
                        - ctx.logs.log_m[(z * a_n + a) * z_n + z2]);
                let acc2 = acc + reward_term + consistency;
                for a2 in 0..a_n {
                    recurse(
                        ctx,
                        t + 1,
                        s2,
                        z2,
                        a2,
                        prob * ps * pm * ctx.alm.pi(z2, a2),
                        acc2,
                        total,
                    );
                }
            }
        }
    }

    let ctx = Ctx {
        mdp,
        alm,
        logs: &logs,
        gpow: &gpow,
        k,
        one_minus_gamma: 1.0 - gamma,
    };
    let mut total = 0.0;
    for s0 in 0..s_n {
        let p0 = mdp.p0[s0];
        if p0 == 0.0 {
            continue;
        }
        for z0 in 0..z_n {
            let pe = alm.e(s0, z0);
            for a0 in 0..a_n {
                recurse(&ctx, 0, s0, z0, a0, p0 * pe * alm.pi(z0, a0), 0.0, &mut total);
            }
        }
    }
    Ok(total)
}

/// The bound sequence [L^1, ..., L^K_max], checked nonincreasing to 1e-10.
pub fn check_monotone(mdp: &TabularMdp, alm: &TabularAlm, k_max: usize) -> Result<Vec<f64>> {
    if k_max < 2 {
        return Err(OracleError::Invalid("monotonicity check needs K_max >= 2".into()));
    }
    let q_table = exact_q(mdp, alm)?;
    let seq: Vec<f64> = (1..=k_max)
        .map(|k| eval_lower_bound_with_q(mdp, alm, k, &q_table))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..seq.len() - 1 {
        if seq[k] < seq[k + 1] - 1e-10 {
            return Err(OracleError::NotMonotone {
                k: k + 1,
                lk: seq[k],
                k_next: k + 2,
                lk_next: seq[k + 1],
            });
        }
    }
    Ok(seq)
}

/// The closed-form optimal discount distribution over horizons 0..=K:
/// proportional to P_K(H) · E_{p(τ|H)}[Ψ].
pub fn optimal_discount(mdp: &TabularMdp, alm: &TabularAlm, k: usize) -> Result<Vec<f64>> {
    let q_table = exact_q(mdp, alm)?;
    let pk = TruncatedGeometric::new(mdp.gamma, k)?;
    let mut weights: Vec<f64> = (0..=k)
        .map(|h| pk.pmf()[h] * expected_psi(mdp, alm, h, k, &q_table))
        .collect();
    let norm: f64 = weights.iter().sum();
    if norm <= 0.0 {
        return Err(OracleError::Degenerate(
            "zero normalizer in optimal discount".into(),
        ));
    }
    for w in &mut weights {
        *w /= norm;
    }
    Ok(weights)
}

/// Substitute the optimal trajectory distributions and optimal discount into
/// the horizon-decomposed bound and compare with the true log objective.
///
/// Returns (bound_with_optimal, log((1-γ) · exact returns)); the two agree to
/// enumeration precision, which simultaneously cross-validates
/// `optimal_latent_dynamics`, `optimal_discount`, and `exact_returns`.
pub fn check_tightness(mdp: &TabularMdp, alm: &TabularAlm, k: usize) -> Result<(f64, f64)> {
    let q_table = exact_q(mdp, alm)?;
    let q_stars = optimal_latent_dynamics(mdp, alm, k, &q_table)?;
    let gamma_star = optimal_discount(mdp, alm, k)?;
    let pk = TruncatedGeometric::new(mdp.gamma, k)?;
    let a_n = mdp.n_actions;

    let mut bound = 0.0;
    for h in 0..=k {
        if gamma_star[h] == 0.0 {
            continue;
        }
        let table = &q_stars[h];
        let mut inner = 0.0;
        walk_p(mdp, alm, h, &mut |rank, p_prob, s, a| {
            let q_prob = table.prob_of_rank(rank);
            if q_prob == 0.0 {
                return;
            }
            let psi = if h < k { mdp.r(s, a) } else { q_table[s * a_n + a] };
            inner += q_prob
                * (pk.pmf()[h].ln() + p_prob.ln() + psi.ln()
                    - gamma_star[h].ln()
                    - q_prob.ln());
        });
        bound += gamma_star[h] * inner;
    }

    let reference = ((1.0 - mdp.gamma) * exact_returns(mdp, alm)?).ln();
    Ok((bound, reference))
}

/// Exponentially-weighted average of the k-step bounds for k = 1..K_max.
/// The geometric tail mass beyond the truncation is folded onto the last
/// term, so the weights stay a convex combination and the average remains a
/// bound.
pub fn lambda_weighted_bound(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    lambda: f64,
    k_max: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(OracleError::Invalid(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    if k_max == 0 {
        return Err(OracleError::Invalid("lambda average needs K_max >= 1".into()));
    }
    let q_table = exact_q(mdp, alm)?;
    let mut total = 0.0;
    for k in 1..=k_max {
        let w = if k < k_max {
            (1.0 - lambda) * lambda.powi(k as i32 - 1)
        } else {
            lambda.powi(k_max as i32 - 1)
        };
        if w == 0.0 {
            continue;
        }
        total += w * eval_lower_bound_with_q(mdp, alm, k, &q_table)?;
    }
    Ok(total)
}

/// Offline variant of the bound, evaluated against the returns of a behavior
/// policy `pi_b` (a strictly positive `[s][a]` table).
///
/// Under the model-rollout distribution the integrand keeps the index
/// placement the horizon decomposition actually produces: behavior-cloning
/// log-ratios at t = 0..K with weight γ^t, consistency log-ratios for the
/// K transitions with weight γ^{t+1}, discounted log rewards for t < K, and
/// the behavior Q value at the endpoint.
pub fn offline_bound(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    behavior: &[f64],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(OracleError::Invalid("offline bound needs K >= 1".into()));
    }
    let (s_n, z_n, a_n) = (mdp.n_states, alm.n_latents, mdp.n_actions);
    if behavior.len() != s_n * a_n {
        return Err(OracleError::Invalid("behavior policy table size mismatch".into()));
    }
    for (si, row) in behavior.chunks(a_n).enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-12 || row.iter().any(|p| *p <= 0.0) {
            return Err(OracleError::Invalid(format!(
                "behavior policy row {si} must be stochastic and strictly positive"
            )));
        }
    }
    let q_b = exact_q_for(mdp, behavior)?;
    let logs = log_tables(mdp, alm, &q_b)?;
    let log_pi_b: Vec<f64> = behavior.iter().map(|p| p.ln()).collect();
    let log_pi: Vec<f64> = alm.policy.iter().map(|p| p.ln()).collect();
    let gamma = mdp.gamma;
    let gpow: Vec<f64> = (0..=k).map(|t| gamma.powi(t as i32)).collect();

    struct Ctx<'a> {
        mdp: &'a TabularMdp,
        alm: &'a TabularAlm,
        logs: &'a LogTables,
        log_pi_b: &'a [f64],
        log_pi: &'a [f64],
        gpow: &'a [f64],
        k: usize,
        one_minus_gamma: f64,
    }

    fn recurse(ctx: &Ctx, t: usize, s: usize, z: usize, a: usize, prob: f64, acc: f64, total: &mut f64) {
        let (s_n, z_n, a_n) = (ctx.mdp.n_states, ctx.alm.n_latents, ctx.mdp.n_actions);
        // Behavior-cloning ratio for the action taken at step t.
        let acc = acc
            + ctx.gpow[t] * (ctx.log_pi_b[s * a_n + a] - ctx.log_pi[z * a_n + a]);
        if t == ctx.k {
            *total += prob * (acc + ctx.gpow[ctx.k] * ctx.logs.log_q[s * a_n + a]);
            return;
        }
        let reward_term = ctx.gpow[t] * ctx.one_minus_gamma * ctx.logs.log_r[s * a_n + a];
        for s2 in 0..s_n {
            let ps = ctx.mdp.p(s, a, s2);
            if ps == 0.0 {
                continue;
            }
            for z2 in 0..z_n {
                let pm = ctx.alm.m(z, a, z2);
                let consistency = ctx.gpow[t + 1]
                    * (ctx.logs.log_e[s2 * z_n + z2]
                        - ctx.logs.log_m[(z * a_n + a) * z_n + z2]);
                let acc2 = acc + reward_term + consistency;
                for a2 in 0..a_n {
                    recurse(
                        ctx,
                        t + 1,
                        s2,
                        z2,
                        a2,
                        prob * ps * pm * ctx.alm.pi(z2, a2),
                        acc2,
                        total,
                    );
                }
            }
        }
    }

    let ctx = Ctx {
        mdp,
        alm,
        logs: &logs,
        log_pi_b: &log_pi_b,
        log_pi: &log_pi,
        gpow: &gpow,
        k,
        one_minus_gamma: 1.0 - gamma,
    };
    let mut total = 0.0;
    for s0 in 0..s_n {
        let p0 = mdp.p0[s0];
        if p0 == 0.0 {
            continue;
        }
        for z0 in 0..z_n {
            let pe = alm.e(s0, z0);
            for a0 in 0..a_n {
                recurse(&ctx, 0, s0, z0, a0, p0 * pe * alm.pi(z0, a0), 0.0, &mut total);
            }
        }
    }
    Ok(total)
}
