//! The verification sweep: random tabular instances, every bound and
//! identity checked exactly, one structured record per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::TruncatedGeometric;
use crate::oracle::{
    check_tightness, eval_lower_bound, exact_returns, exact_returns_for, lambda_weighted_bound,
    lemma2_identity, lemma3_maximizer, lemma3_objective, lemma3_value, log_shift_equivalence,
    offline_bound, random_behavior_policy, random_instance, InstanceConfig,
};

use super::Result;

/// One verification line: lhs/rhs depend on the check; `margin >= 0` means
/// the inequality (or identity tolerance) holds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub instance: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn bound(check: &str, instance: u64, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = rhs - lhs;
        CheckRecord {
            check: check.to_string(),
            instance,
            lhs,
            rhs,
            margin,
            pass: margin >= -tol,
        }
    }

    fn identity(check: &str, instance: u64, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = tol - (lhs - rhs).abs();
        CheckRecord {
            check: check.to_string(),
            instance,
            lhs,
            rhs,
            margin,
            pass: margin >= 0.0,
        }
    }
}

fn instance_checks(sweep_seed: u64, index: u64, k_max: usize) -> Result<Vec<CheckRecord>> {
    let mut rng = ChaCha12Rng::seed_from_u64(sweep_seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1)));
    let cfg = InstanceConfig::default();
    let (mdp, alm) = random_instance(&cfg, &mut rng)?;
    let mut records = Vec::new();

    let j = exact_returns(&mdp, &alm)?;
    let log_obj = ((1.0 - mdp.gamma) * j).ln();

    // K-step bound, every K.
    let mut bounds = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let l = eval_lower_bound(&mdp, &alm, k)?;
        bounds.push(l);
        records.push(CheckRecord::bound(
            &format!("theorem1_k{k}"),
            index,
            l.exp() / (1.0 - mdp.gamma),
            j,
            1e-10,
        ));
    }

    // Monotonicity over the whole sequence: worst adjacent pair.
    if k_max >= 2 {
        let (mut worst_lhs, mut worst_rhs) = (bounds[1], bounds[0]);
        for w in bounds.windows(2) {
            if w[1] - w[0] > worst_lhs - worst_rhs {
                worst_rhs = w[0];
                worst_lhs = w[1];
            }
        }
        records.push(CheckRecord::bound(
            "k_monotonicity",
            index,
            worst_lhs,
            worst_rhs,
            1e-10,
        ));
    }

    // Tightness with the optimal discount and trajectory distributions.
    let k_tight = k_max.min(3);
    let (tight, reference) = check_tightness(&mdp, &alm, k_tight)?;
    records.push(CheckRecord::identity(
        "tightness",
        index,
        tight,
        reference,
        1e-9,
    ));

    // Discounting identity on random inputs.
    let gamma: f64 = rng.gen_range(0.05..0.995);
    let k_geom = rng.gen_range(1..=8usize);
    let xs: Vec<f64> = (0..=k_geom).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (lhs, rhs) = TruncatedGeometric::new(gamma, k_geom)?.discounted_identity(&xs)?;
    records.push(CheckRecord::identity("lemma1", index, lhs, rhs, 1e-12));

    // Horizon rewrite of the objective.
    let (lhs, rhs) = lemma2_identity(&mdp, &alm, k_max.min(3))?;
    records.push(CheckRecord::identity("lemma2", index, lhs, rhs, 1e-10));

    // Softmax maximizer against random pmf perturbations.
    let f: Vec<f64> = (0..rng.gen_range(2..=6usize))
        .map(|_| rng.gen_range(-2.0..2.0))
        .collect();
    let best = lemma3_maximizer(&f);
    let best_val = lemma3_objective(&f, &best);
    let mut worst_gap = f64::INFINITY;
    for _ in 0..1000 {
        let mut p: Vec<f64> = best
            .iter()
            .map(|v| (v + rng.gen_range(-0.2..0.2) * v.max(0.05)).max(1e-9))
            .collect();
        let total: f64 = p.iter().sum();
        for v in &mut p {
            *v /= total;
        }
        worst_gap = worst_gap.min(best_val - lemma3_objective(&f, &p));
    }
    records.push(CheckRecord {
        check: "lemma3".to_string(),
        instance: index,
        lhs: best_val,
        rhs: lemma3_value(&f),
        margin: worst_gap.min(1e-12 - (best_val - lemma3_value(&f)).abs()),
        pass: worst_gap >= -1e-12 && (best_val - lemma3_value(&f)).abs() <= 1e-12,
    });

    // Exponentially-weighted average of the K-step bounds.
    let lw = lambda_weighted_bound(&mdp, &alm, 0.95, k_max)?;
    records.push(CheckRecord::bound("lambda_bound", index, lw, log_obj, 1e-10));

    // Offline bound against the behavior policy's returns.
    let behavior = random_behavior_policy(&mdp, cfg.positivity_floor, &mut rng);
    let off = offline_bound(&mdp, &alm, &behavior, k_max.min(3))?;
    let j_b = exact_returns_for(&mdp, &behavior)?;
    records.push(CheckRecord::bound(
        "offline_bound",
        index,
        off,
        ((1.0 - mdp.gamma) * j_b).ln(),
        1e-10,
    ));

    Ok(records)
}

/// Run the full sweep over `instances` random instances with K up to
/// `k_max`, fanning out across threads; the output order is deterministic.
pub fn run_verification(instances: u64, k_max: usize, seed: u64) -> Result<Vec<CheckRecord>> {
    let mut per_instance: Vec<Vec<CheckRecord>> = (0..instances)
        .into_par_iter()
        .map(|i| instance_checks(seed, i, k_max))
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<CheckRecord> = per_instance.drain(..).flatten().collect();

    // The reward log-shift approximation, once per sweep.
    let rs: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.1).collect();
    let (dev, bound) = log_shift_equivalence(&rs, 10_000.0)?;
    records.push(CheckRecord {
        check: "log_shift".to_string(),
        instance: 0,
        lhs: dev,
        rhs: bound,
        margin: bound - dev,
        pass: dev <= bound,
    });

    Ok(records)
}
