//! Exhaustive walks over finite trajectory spaces.
//!
//! A length-(H+1) trajectory is the tuple sequence (s_0, z_0, a_0), ...,
//! (s_H, z_H, a_H). Walks skip zero-probability environment branches but
//! never skip encoder/model/policy branches, which are strictly positive by
//! construction.

use super::{OracleError, Result, TabularAlm, TabularMdp};

/// Explicit probability table over length-(H+1) trajectories, indexed by the
/// mixed-radix rank of the (s, z, a) tuple sequence.
#[derive(Clone, Debug)]
pub struct TrajectoryDist {
    pub horizon: usize,
    dims: (usize, usize, usize),
    probs: Vec<f64>,
}

impl TrajectoryDist {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of_rank(&self, rank: usize) -> f64 {
        self.probs[rank]
    }

    /// Rank of an explicit tuple path; inverse of the walk ordering.
    pub fn rank_of(&self, path: &[(usize, usize, usize)]) -> usize {
        let (s_n, z_n, a_n) = self.dims;
        let step = s_n * z_n * a_n;
        let mut rank = 0;
        for (s, z, a) in path {
            rank = rank * step + (s * z_n + z) * a_n + a;
        }
        rank
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Per-trajectory step rank within one (s, z, a) tuple.
#[inline]
fn tuple_rank(s: usize, z: usize, a: usize, z_n: usize, a_n: usize) -> usize {
    (s * z_n + z) * a_n + a
}

/// Walk the true trajectory distribution p(τ|H) restricted to horizon `h`,
/// visiting every support trajectory with its rank, probability, and final
/// (s, a) pair.
pub(crate) fn walk_p(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    h: usize,
    visit: &mut impl FnMut(usize, f64, usize, usize),
) {
    let (s_n, z_n, a_n) = (mdp.n_states, alm.n_latents, mdp.n_actions);
    let step = s_n * z_n * a_n;

    struct Ctx<'a> {
        mdp: &'a TabularMdp,
        alm: &'a TabularAlm,
        h: usize,
        step: usize,
    }

    fn recurse(
        ctx: &Ctx,
        t: usize,
        s: usize,
        a: usize,
        rank: usize,
        prob: f64,
        visit: &mut impl FnMut(usize, f64, usize, usize),
    ) {
        if t == ctx.h {
            visit(rank, prob, s, a);
            return;
        }
        let (s_n, z_n, a_n) = (ctx.mdp.n_states, ctx.alm.n_latents, ctx.mdp.n_actions);
        for s2 in 0..s_n {
            let ps = ctx.mdp.p(s, a, s2);
            if ps == 0.0 {
                continue;
            }
            for z2 in 0..z_n {
                let pe = ctx.alm.e(s2, z2);
                for a2 in 0..a_n {
                    let w = prob * ps * pe * ctx.alm.pi(z2, a2);
                    let r2 = rank * ctx.step + tuple_rank(s2, z2, a2, z_n, a_n);
                    recurse(ctx, t + 1, s2, a2, r2, w, visit);
                }
            }
        }
    }

    let ctx = Ctx { mdp, alm, h, step };
    for s0 in 0..s_n {
        let p0 = mdp.p0[s0];
        if p0 == 0.0 {
            continue;
        }
        for z0 in 0..z_n {
            let pe = alm.e(s0, z0);
            for a0 in 0..a_n {
                let prob = p0 * pe * alm.pi(z0, a0);
                let rank = tuple_rank(s0, z0, a0, z_n, a_n);
                recurse(&ctx, 0, s0, a0, rank, prob, visit);
            }
        }
    }
}

/// E_{p(τ|H)}[Ψ] where Ψ is the final-step reward for H < K and the
/// normalized Q value at H = K. Computed by full enumeration.
pub fn expected_psi(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    h: usize,
    k: usize,
    q_table: &[f64],
) -> f64 {
    let a_n = mdp.n_actions;
    let mut total = 0.0;
    walk_p(mdp, alm, h, &mut |_rank, prob, s, a| {
        let psi = if h < k {
            mdp.r(s, a)
        } else {
            q_table[s * a_n + a]
        };
        total += prob * psi;
    });
    total
}

const MAX_TABLE_ENTRIES: usize = 40_000_000;

/// The reward-reweighted trajectory distributions q*(τ|H) for H = 0..=K:
/// the true conditional p(τ|H) tilted by Ψ and renormalized. These are the
/// distributions that make the bound tight.
pub fn optimal_latent_dynamics(
    mdp: &TabularMdp,
    alm: &TabularAlm,
    k: usize,
    q_table: &[f64],
) -> Result<Vec<TrajectoryDist>> {
    let (s_n, z_n, a_n) = (mdp.n_states, alm.n_latents, mdp.n_actions);
    let step = s_n * z_n * a_n;
    let mut out = Vec::with_capacity(k + 1);
    for h in 0..=k {
        let entries = step.checked_pow(h as u32 + 1).filter(|e| *e <= MAX_TABLE_ENTRIES);
        let Some(entries) = entries else {
            return Err(OracleError::Invalid(format!(
                "trajectory table for H={h} would exceed {MAX_TABLE_ENTRIES} entries"
            )));
        };
        let mut probs = vec![0.0; entries];
        let mut norm = 0.0;
        walk_p(mdp, alm, h, &mut |rank, prob, s, a| {
            let psi = if h < k {
                mdp.r(s, a)
            } else {
                q_table[s * a_n + a]
            };
            let w = prob * psi;
            probs[rank] = w;
            norm += w;
        });
        if norm <= 0.0 {
            return Err(OracleError::Degenerate(format!(
                "zero normalizer for the reweighted distribution at H={h}"
            )));
        }
        for p in &mut probs {
            *p /= norm;
        }
        out.push(TrajectoryDist {
            horizon: h,
            dims: (s_n, z_n, a_n),
            probs,
        });
    }
    Ok(out)
}
