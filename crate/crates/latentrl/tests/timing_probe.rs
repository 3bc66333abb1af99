use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use latentrl::agent::AgentState;
use latentrl::experience::{ReplayBuffer, Transition};
use latentrl::harness::{Profile, RunConfig};
use std::time::Instant;

#[test]
#[ignore]
fn probe_loss_timings() {
    let cfg = RunConfig::with_profile(Profile::Desk);
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let mut agent = AgentState::new(cfg.agent.clone(), 3, 1, 0).unwrap();
    let mut buf = ReplayBuffer::new(10_000, 3, 1);
    for i in 0..3000u32 {
        buf.push(Transition {
            obs: vec![rng.gen(), rng.gen(), rng.gen()],
            action: vec![rng.gen_range(-1.0..1.0)],
            reward: rng.gen_range(-1.0..0.0),
            next_obs: vec![rng.gen(), rng.gen(), rng.gen()],
            terminal: false,
            timeout: i % 200 == 199,
        }).unwrap();
    }
    let batch = buf.sample_sequences(cfg.agent.batch, cfg.agent.k, &mut rng).unwrap();
    let n = 40;

    let t = Instant::now();
    for _ in 0..n { agent.encoder_model_grads(&batch, &mut rng).unwrap(); }
    println!("enc_model fwd+bwd: {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n { agent.policy_grads(&batch, 0, &mut rng).unwrap(); }
    println!("policy fwd+bwd:    {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n { agent.classifier_grads(&batch, &mut rng).unwrap(); }
    println!("classifier:        {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n { agent.q_grads(&batch, &mut rng).unwrap(); }
    println!("q:                 {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n { agent.reward_grads(&batch, &mut rng).unwrap(); }
    println!("reward:            {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n {
        agent.update_round(&batch, 0, &mut rng).unwrap();
        agent.update_targets();
    }
    println!("full round+targets: {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    let t = Instant::now();
    for _ in 0..n { agent.encoder_model_loss_value(&batch, &mut rng).unwrap(); }
    println!("enc_model fwd only: {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);
    let t = Instant::now();
    for _ in 0..n { agent.policy_loss_value(&batch, 0, &mut rng).unwrap(); }
    println!("policy fwd only:    {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);
}

#[test]
#[ignore]
fn probe_fwd_bwd_split() {
    use latentrl::diffmath::Tensor;
    let cfg = RunConfig::with_profile(Profile::Desk);
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let agent = AgentState::new(cfg.agent.clone(), 3, 1, 0).unwrap();
    let mut buf = ReplayBuffer::new(10_000, 3, 1);
    for i in 0..3000u32 {
        buf.push(Transition {
            obs: vec![rng.gen(), rng.gen(), rng.gen()],
            action: vec![rng.gen_range(-1.0..1.0)],
            reward: rng.gen_range(-1.0..0.0),
            next_obs: vec![rng.gen(), rng.gen(), rng.gen()],
            terminal: false,
            timeout: i % 200 == 199,
        }).unwrap();
    }
    let batch = buf.sample_sequences(cfg.agent.batch, cfg.agent.k, &mut rng).unwrap();
    let n = 60;

    // planes alone
    let t = Instant::now();
    for _ in 0..n { agent.target_planes(&batch).unwrap(); }
    println!("target_planes: {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    // imagine rollout fwd alone (policy loss core)
    let t = Instant::now();
    for _ in 0..n {
        let tape = latentrl::diffmath::Tape::new();
        let opts = latentrl::agent::ImagineOpts {
            attach_policy: true, sigma: 1.0, forced_first_action: None, sample_latents: true,
        };
        let obs = batch.obs(0);
        agent.imagine(&tape, &obs, &opts, &mut rng).unwrap();
    }
    println!("imagine fwd:   {:.2} ms", t.elapsed().as_secs_f64()/n as f64*1e3);

    // gemm-equivalent volume: one 512x128 x 128x128 matmul pair
    let x = Tensor::from_vec(vec![512,128], vec![0.5;512*128]).unwrap();
    let w = Tensor::from_vec(vec![128,128], vec![0.01;128*128]).unwrap();
    let t = Instant::now();
    for _ in 0..n*20 { x.matmul(&w).unwrap(); }
    println!("512x128x128 matmul via tensor op: {:.3} ms", t.elapsed().as_secs_f64()/(n*20) as f64*1e3);
}

#[test]
#[ignore]
fn probe_components() {
    use latentrl::agent::Bind;
    use latentrl::diffmath::{Tape, Tensor};
    use latentrl::dists::standard_normal;
    let cfg = RunConfig::with_profile(Profile::Desk);
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let agent = AgentState::new(cfg.agent.clone(), 3, 1, 0).unwrap();
    let z = Tensor::from_vec(vec![128, 16], (0..128*16).map(|i| (i as f64 * 0.01).sin()).collect()).unwrap();
    let za = Tensor::from_vec(vec![128, 17], (0..128*17).map(|i| (i as f64 * 0.01).cos()).collect()).unwrap();
    let n = 3000;

    let t = Instant::now();
    for _ in 0..n { let p = agent.policy.bind(Bind::Frozen); let _ = p.forward(&z).unwrap(); }
    println!("policy bind+fwd frozen: {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let p = agent.policy.bind(Bind::Frozen);
    let t = Instant::now();
    for _ in 0..n { let _ = p.forward(&z).unwrap(); }
    println!("policy fwd only:        {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let tape = Tape::new();
    let pa = agent.policy.bind(Bind::Tape(&tape));
    let t = Instant::now();
    for _ in 0..n { let _ = pa.forward(&z).unwrap(); }
    println!("policy fwd on tape:     {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let m = agent.model.bind(Bind::Frozen);
    let t = Instant::now();
    for _ in 0..n { let _ = m.dist(&za).unwrap(); }
    println!("model dist frozen:      {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let t = Instant::now();
    for _ in 0..n { let d = m.dist(&za).unwrap(); let _ = d.rsample(&standard_normal(128, 16, &mut rng)).unwrap(); }
    println!("model dist + rsample:   {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let t = Instant::now();
    for _ in 0..n { let _ = standard_normal(128, 16, &mut rng); }
    println!("standard_normal 2048:   {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);

    let t = Instant::now();
    for _ in 0..n { let _ = agent.policy.bind(Bind::Frozen); }
    println!("bind alone:             {:.1} us", t.elapsed().as_secs_f64()/n as f64*1e6);
}
