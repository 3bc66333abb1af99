//! Microbenchmarks for the three compute pillars: the tensor kernels, one
//! full desk-scale update round, and the exact bound enumeration.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use latentrl::agent::AgentState;
use latentrl::diffmath::{Tape, Tensor};
use latentrl::experience::{ReplayBuffer, Transition};
use latentrl::harness::{Profile, RunConfig};
use latentrl::oracle::{eval_lower_bound, random_instance, InstanceConfig};

fn bench_tensor_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("tensor");
    let x = Tensor::from_vec(vec![128, 128], vec![0.3; 128 * 128]).unwrap();
    let w = Tensor::from_vec(vec![128, 128], vec![0.01; 128 * 128]).unwrap();
    let b = Tensor::from_vec(vec![128], vec![0.1; 128]).unwrap();

    group.bench_function("matmul_128", |bench| {
        bench.iter(|| black_box(x.matmul(&w).unwrap()))
    });
    group.bench_function("fused_linear_elu_128", |bench| {
        bench.iter(|| black_box(x.linear(&w, &b, true).unwrap()))
    });
    group.bench_function("linear_backward_128", |bench| {
        bench.iter(|| {
            let tape = Tape::new();
            let xt = tape.leaf(&x);
            let wt = tape.leaf(&w);
            let bt = tape.leaf(&b);
            let loss = xt.linear(&wt, &bt, true).unwrap().sum_all().unwrap();
            black_box(tape.backward(&loss).unwrap());
        })
    });
    group.finish();
}

fn bench_update_round(c: &mut Criterion) {
    let cfg = RunConfig::with_profile(Profile::Desk);
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut agent = AgentState::new(cfg.agent.clone(), 3, 1, 0).unwrap();
    let mut buf = ReplayBuffer::new(4_096, 3, 1);
    for i in 0..2_048u32 {
        buf.push(Transition {
            obs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: vec![rng.gen_range(-1.0..1.0)],
            reward: rng.gen_range(-1.0..0.0),
            next_obs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal: false,
            timeout: i % 200 == 199,
        })
        .unwrap();
    }
    let batch = buf.sample_sequences(cfg.agent.batch, cfg.agent.k, &mut rng).unwrap();
    c.bench_function("desk_update_round", |bench| {
        bench.iter(|| {
            agent.update_round(&batch, 0, &mut rng).unwrap();
            agent.update_targets();
        })
    });
}

fn bench_oracle(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let cfg = InstanceConfig {
        state_sizes: vec![3],
        action_sizes: vec![3],
        latent_sizes: vec![3],
        ..InstanceConfig::default()
    };
    let (mdp, alm) = random_instance(&cfg, &mut rng).unwrap();
    c.bench_function("bound_enumeration_k3_dims3", |bench| {
        bench.iter(|| black_box(eval_lower_bound(&mdp, &alm, 3).unwrap()))
    });
}

criterion_group!(benches, bench_tensor_kernels, bench_update_round, bench_oracle);
criterion_main!(benches);
