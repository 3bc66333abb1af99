//! Criterion 8: a classifier trained to separate samples from two known 1-d
//! Gaussians recovers their analytic log-density-ratio through its log-odds.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use latentrl::agent::{Bind, DenseNet};
use latentrl::diffmath::{clip_global_norm, Adam, Tensor};
use latentrl::dists::{binary_cross_entropy, standard_normal, CLAMP_EPS};

fn log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn criterion_08_classifier_recovers_density_ratio() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let (mu_p, sd_p) = (0.0, 1.0); // the "real" class, labeled 1
    let (mu_q, sd_q) = (0.8, 1.2); // the "model" class, labeled 0

    let mut net = DenseNet::new(
        "ratio",
        &[1, 64, 64, 1],
        false,
        latentrl::agent::FinalInit::Orthogonal,
        &mut rng,
    );
    let mut adam = Adam::new(net.params(), 1e-3);

    let batch = 128;
    for _ in 0..3_000 {
        let eps_p = standard_normal(batch, 1, &mut rng);
        let eps_q = standard_normal(batch, 1, &mut rng);
        let xs_p: Vec<f64> = eps_p.values().iter().map(|e| mu_p + sd_p * e).collect();
        let xs_q: Vec<f64> = eps_q.values().iter().map(|e| mu_q + sd_q * e).collect();
        let mut xs = xs_p;
        xs.extend_from_slice(&xs_q);
        let x = Tensor::from_vec(vec![2 * batch, 1], xs).unwrap();
        let mut labels = vec![1.0; batch];
        labels.extend(vec![0.0; batch]);
        let y = Tensor::from_vec(vec![2 * batch], labels).unwrap();

        let tape = latentrl::diffmath::Tape::new();
        let bound = net.bind(Bind::Tape(&tape));
        let p = bound.forward_scalar(&x).unwrap().sigmoid().unwrap();
        let loss = binary_cross_entropy(&p, &y).unwrap().mean_all().unwrap();
        let mut grads = tape.backward(&loss).unwrap();
        let mut g: Vec<Vec<f64>> = bound
            .leaf_tensors()
            .iter()
            .map(|t| grads.take_or_zeros(t))
            .collect();
        clip_global_norm(&mut g, 100.0);
        adam.step(net.params_mut(), &g).unwrap();
    }

    // Central 90% probability mass of the equal mixture, from quantiles of a
    // large sample.
    let mut mix: Vec<f64> = Vec::with_capacity(200_000);
    let eps = standard_normal(100_000, 2, &mut rng);
    for pair in eps.values().chunks(2) {
        mix.push(mu_p + sd_p * pair[0]);
        mix.push(mu_q + sd_q * pair[1]);
    }
    mix.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = mix[(mix.len() as f64 * 0.05) as usize];
    let hi = mix[(mix.len() as f64 * 0.95) as usize];

    let grid = 201;
    let frozen = net.bind(Bind::Frozen);
    let mut mae = 0.0;
    for i in 0..grid {
        let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let xt = Tensor::from_vec(vec![1, 1], vec![x]).unwrap();
        let p = frozen.forward_scalar(&xt).unwrap().sigmoid().unwrap().values()[0]
            .clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        let learned = (p / (1.0 - p)).ln();
        let analytic = log_density(x, mu_p, sd_p) - log_density(x, mu_q, sd_q);
        mae += (learned - analytic).abs();
    }
    mae /= grid as f64;
    let elapsed = start.elapsed().as_secs_f64();

    assert!(
        mae <= 0.1,
        "log-odds MAE {mae:.4} over [{lo:.2}, {hi:.2}] exceeds 0.1"
    );
    assert!(elapsed <= 60.0, "took {elapsed:.1}s, budget is 60s");
    println!(
        "criterion 08 density-ratio recovery: PASS (MAE {mae:.4} over the central 90% mass, {elapsed:.1}s)"
    );
}
