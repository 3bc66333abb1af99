//! Infinite-horizon quantities via the linear Bellman fixed point.

use super::{OracleError, Result, TabularAlm, TabularMdp};

/// The state-space policy induced by encoder and latent policy:
/// π̄(a|s) = Σ_z π(a|z) e(z|s). Returned as `[s][a]` flattened.
pub fn state_policy(mdp: &TabularMdp, alm: &TabularAlm) -> Vec<f64> {
    let (s_n, a_n, z_n) = (mdp.n_states, mdp.n_actions, alm.n_latents);
    let mut pi_bar = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        for z in 0..z_n {
            let ez = alm.e(s, z);
            for a in 0..a_n {
                pi_bar[s * a_n + a] += ez * alm.pi(z, a);
            }
        }
    }
    pi_bar
}

/// Undiscounted-normalization state values v(s) = E[Σ_t γ^t r | s_0 = s]
/// under the given state policy, solved to residual ≤ 1e-12.
pub fn exact_values(mdp: &TabularMdp, pi_bar: &[f64]) -> Result<Vec<f64>> {
    let (s_n, a_n) = (mdp.n_states, mdp.n_actions);
    if mdp.gamma >= 1.0 {
        return Err(OracleError::Singular(format!(
            "gamma {} >= 1 makes the evaluation system singular",
            mdp.gamma
        )));
    }
    // (I - γ P_π) v = r_π
    let mut a_mat = vec![0.0; s_n * s_n];
    let mut rhs = vec![0.0; s_n];
    for s in 0..s_n {
        a_mat[s * s_n + s] = 1.0;
        for a in 0..a_n {
            let w = pi_bar[s * a_n + a];
            rhs[s] += w * mdp.r(s, a);
            for s2 in 0..s_n {
                a_mat[s * s_n + s2] -= mdp.gamma * w * mdp.p(s, a, s2);
            }
        }
    }
    let v = solve_dense(a_mat.clone(), rhs.clone(), s_n)?;

    let scale = rhs.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let mut worst = 0.0f64;
    for s in 0..s_n {
        let mut acc = -rhs[s];
        for s2 in 0..s_n {
            acc += a_mat[s * s_n + s2] * v[s2];
        }
        worst = worst.max(acc.abs());
    }
    if worst > 1e-12 * scale.max(1.0) {
        return Err(OracleError::Singular(format!(
            "policy evaluation residual {worst} exceeds tolerance"
        )));
    }
    Ok(v)
}

/// E[Σ_t γ^t r] under the joint process induced by encoder and policy.
pub fn exact_returns(mdp: &TabularMdp, alm: &TabularAlm) -> Result<f64> {
    exact_returns_for(mdp, &state_policy(mdp, alm))
}

/// Same, for an explicit state policy table `[s][a]`.
pub fn exact_returns_for(mdp: &TabularMdp, pi_bar: &[f64]) -> Result<f64> {
    let v = exact_values(mdp, pi_bar)?;
    Ok(mdp.p0.iter().zip(&v).map(|(p, vs)| p * vs).sum())
}

/// Q table over `[s][a]` with the (1-γ) normalization of R(τ):
/// Q(s,a) = (1-γ)(r(s,a) + γ Σ_{s'} P(s'|s,a) v(s')).
pub fn exact_q(mdp: &TabularMdp, alm: &TabularAlm) -> Result<Vec<f64>> {
    exact_q_for(mdp, &state_policy(mdp, alm))
}

/// Normalized Q table for an explicit state policy.
pub fn exact_q_for(mdp: &TabularMdp, pi_bar: &[f64]) -> Result<Vec<f64>> {
    let (s_n, a_n) = (mdp.n_states, mdp.n_actions);
    let v = exact_values(mdp, pi_bar)?;
    let mut q = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        for a in 0..a_n {
            let mut next = 0.0;
            for s2 in 0..s_n {
                next += mdp.p(s, a, s2) * v[s2];
            }
            q[s * a_n + a] = (1.0 - mdp.gamma) * (mdp.r(s, a) + mdp.gamma * next);
        }
    }
    Ok(q)
}

/// Gaussian elimination with partial pivoting; systems here are tiny.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(OracleError::Singular("zero pivot".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}
