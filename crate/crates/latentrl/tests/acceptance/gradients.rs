//! Criterion 7: every training loss matches central finite differences over
//! the parameters it updates, on toy-sized networks, across 20 seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use latentrl::agent::{AgentConfig, AgentState};
use latentrl::diffmath::GradCheck;
use latentrl::experience::{ReplayBuffer, SequenceBatch, Transition};

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn toy_agent(seed: u64) -> AgentState {
    let cfg = AgentConfig {
        latent_dim: 4,
        hidden: 8,
        model_hidden: 8,
        k: 2,
        batch: 3,
        ..AgentConfig::default()
    };
    let mut agent = AgentState::new(cfg, 3, 1, seed).unwrap();
    // Zero-initialized heads have identically-zero gradients in places;
    // perturb every network so each path carries signal.
    let mut r = rng(seed ^ 0xF00D);
    for net in [
        agent.policy.params_mut(),
        agent.reward.params_mut(),
        agent.q.params_mut(),
        agent.classifier.params_mut(),
    ] {
        for p in net {
            for v in &mut p.data {
                *v += r.gen_range(-0.3..0.3);
            }
        }
    }
    agent.sync_targets();
    agent
}

fn toy_batch(seed: u64) -> SequenceBatch {
    let mut buf = ReplayBuffer::new(64, 3, 1);
    let mut r = rng(seed ^ 0xBA7C);
    for i in 0..32u32 {
        buf.push(Transition {
            obs: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
            action: vec![r.gen_range(-1.0..1.0)],
            reward: r.gen_range(-2.0..2.0),
            next_obs: (0..3).map(|_| r.gen_range(-1.0..1.0)).collect(),
            terminal: false,
            timeout: i % 8 == 7,
        })
        .unwrap();
    }
    buf.sample_sequences(3, 2, &mut rng(seed)).unwrap()
}

#[derive(Clone, Copy)]
enum Net {
    Encoder,
    Model,
    Policy,
    Reward,
    Q,
    Classifier,
}

fn params_mut(agent: &mut AgentState, net: Net) -> &mut [latentrl::diffmath::Param] {
    match net {
        Net::Encoder => agent.encoder.params_mut(),
        Net::Model => agent.model.params_mut(),
        Net::Policy => agent.policy.params_mut(),
        Net::Reward => agent.reward.params_mut(),
        Net::Q => agent.q.params_mut(),
        Net::Classifier => agent.classifier.params_mut(),
    }
}

/// Compare analytic gradients against central differences for one loss.
/// `analytic[i]` lines up with `nets[i]`'s parameter list.
fn check(
    label: &str,
    agent: &mut AgentState,
    nets: &[Net],
    analytic: &[Vec<Vec<f64>>],
    rng_seed: u64,
    eval: &dyn Fn(&AgentState, &mut ChaCha12Rng) -> f64,
) -> f64 {
    let gc = GradCheck::default();
    let mut worst = 0.0f64;
    for (net, grads) in nets.iter().zip(analytic) {
        let n_params = params_mut(agent, *net).len();
        for pi in 0..n_params {
            let len = params_mut(agent, *net)[pi].data.len();
            for ci in 0..len {
                let orig = params_mut(agent, *net)[pi].data[ci];
                params_mut(agent, *net)[pi].data[ci] = orig + gc.step;
                let hi = eval(agent, &mut rng(rng_seed));
                params_mut(agent, *net)[pi].data[ci] = orig - gc.step;
                let lo = eval(agent, &mut rng(rng_seed));
                params_mut(agent, *net)[pi].data[ci] = orig;
                let fd = (hi - lo) / (2.0 * gc.step);
                let a = grads[pi][ci];
                let denom = a.abs().max(fd.abs()).max(gc.scale_floor);
                let err = (a - fd).abs() / denom;
                worst = worst.max(err);
                assert!(
                    err <= 1e-4,
                    "{label}: param {pi}[{ci}] analytic {a} vs fd {fd} (rel {err})"
                );
            }
        }
    }
    worst
}

#[test]
fn criterion_07_loss_gradients_match_finite_differences() {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut agent = toy_agent(seed);
        let batch = toy_batch(seed);
        let rs = seed ^ 0xC0FE;

        let (_, ge, gm) = agent.encoder_model_grads(&batch, &mut rng(rs)).unwrap();
        worst = worst.max(check(
            "encoder/model loss",
            &mut agent,
            &[Net::Encoder, Net::Model],
            &[ge, gm],
            rs,
            &|a, r| a.encoder_model_loss_value(&batch, r).unwrap(),
        ));

        let (_, gp) = agent.policy_grads(&batch, 1_000, &mut rng(rs)).unwrap();
        worst = worst.max(check(
            "policy loss",
            &mut agent,
            &[Net::Policy],
            &[gp],
            rs,
            &|a, r| a.policy_loss_value(&batch, 1_000, r).unwrap(),
        ));

        let (_, gc_) = agent.classifier_grads(&batch, &mut rng(rs)).unwrap();
        worst = worst.max(check(
            "classifier loss",
            &mut agent,
            &[Net::Classifier],
            &[gc_],
            rs,
            &|a, r| a.classifier_loss_value(&batch, r).unwrap(),
        ));

        let (_, gq) = agent.q_grads(&batch, &mut rng(rs)).unwrap();
        worst = worst.max(check(
            "td loss",
            &mut agent,
            &[Net::Q],
            &[gq],
            rs,
            &|a, r| a.q_loss_value(&batch, r).unwrap(),
        ));

        let (_, gr) = agent.reward_grads(&batch, &mut rng(rs)).unwrap();
        worst = worst.max(check(
            "reward loss",
            &mut agent,
            &[Net::Reward],
            &[gr],
            rs,
            &|a, r| a.reward_loss_value(&batch, r).unwrap(),
        ));
    }
    println!(
        "criterion 07 gradient suite: PASS (20 seeds x 5 losses, worst relative error {worst:.3e})"
    );
}
