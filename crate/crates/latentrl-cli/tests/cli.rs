//! End-to-end checks of the command-line surface: exit codes, flag
//! plumbing, and the artifacts each subcommand produces.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latentrl"))
}

fn tiny_train_args(out: &Path) -> Vec<String> {
    [
        "train",
        "--profile",
        "desk",
        "--seed",
        "3",
        "--set",
        "agent.latent_dim=6",
        "--set",
        "agent.hidden=16",
        "--set",
        "agent.model_hidden=16",
        "--set",
        "agent.batch=8",
        "--set",
        "agent.k=2",
        "--set",
        "train.total_env_steps=350",
        "--set",
        "train.warmup_steps=280",
        "--set",
        "train.eval_every=70",
        "--set",
        "train.eval_episodes=1",
        "--set",
        "train.buffer_capacity=1000",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain(["--out".to_string(), out.display().to_string()])
    .collect()
}

#[test]
fn verify_sweep_exits_zero_with_clean_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.jsonl");
    let output = bin()
        .args([
            "verify",
            "--instances",
            "6",
            "--k-max",
            "3",
            "--seed",
            "0",
            "--out",
        ])
        .arg(&report)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["pass"], true, "{line}");
        for key in ["check", "instance", "lhs", "rhs", "margin"] {
            assert!(rec.get(key).is_some(), "missing {key} in {line}");
        }
        n += 1;
    }
    assert!(n > 40, "expected a record per check, got {n}");
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let output = bin().args(["train", "--nonsense"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.to_lowercase().contains("usage"), "{err}");
}

#[test]
fn missing_config_file_exits_1() {
    let output = bin()
        .args(["train", "--config", "/nonexistent/run.cfg"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn malformed_config_exits_1_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "agent.bogus_field = 3\n").unwrap();
    let output = bin().args(["train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("agent.bogus_field"), "{err}");
}

#[test]
fn train_eval_bias_diagnose_bench_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = bin().args(tiny_train_args(&out)).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let ckpt = out.join("final.ckpt");
    assert!(ckpt.exists());
    assert!(out.join("metrics.csv").exists());

    let output = bin()
        .args(["eval", "--episodes", "2", "--seed", "1", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("eval"), "{text}");

    let output = bin()
        .args([
            "bias",
            "--n-states",
            "30",
            "--mc-episodes",
            "2",
            "--checkpoint",
        ])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).contains("normalized bias"));

    let output = bin()
        .args(["diagnose", "--horizon", "4", "--episodes", "2", "--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let text = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(text.contains("step 0: 0.000000"), "{text}");

    let output = bin()
        .args([
            "bench",
            "--profile",
            "desk",
            "--seconds",
            "0.2",
            "--set",
            "agent.latent_dim=6",
            "--set",
            "agent.hidden=16",
            "--set",
            "agent.model_hidden=16",
            "--set",
            "agent.batch=8",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).contains("ms/round"));
}

#[test]
fn ablation_flag_reaches_the_agent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "agent.latent_dim = 6\nagent.hidden = 16\nagent.model_hidden = 16\n\
         agent.batch = 8\nagent.k = 2\ntrain.total_env_steps = 300\n\
         train.warmup_steps = 260\ntrain.eval_every = 150\ntrain.eval_episodes = 1\n\
         train.buffer_capacity = 500\n",
    )
    .unwrap();
    let out = dir.path().join("run_nokl");
    let output = bin()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--set", "agent.no_kl=true", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    // The recorded checkpoint carries the flag.
    let (agent, _, _) = latentrl::agent::Checkpoint::load(&out.join("final.ckpt")).unwrap();
    assert!(agent.cfg.ablations.no_kl);
}
