use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vlrl_core::harness::{EnvKind, RunConfig};

fn vlrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlrl"))
        .args(args)
        .env_remove("VLRL_PRECISION")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let mut c = RunConfig::for_env(EnvKind::Gridworld).compact();
    c.total_steps = 300;
    c.warmup_steps = 100;
    c.batch_size = 8;
    c.eval_every = 150;
    c.eval_episodes = 2;
    let path = dir.join("base.json");
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let out = vlrl(&[
        "train",
        "--config",
        &cfg,
        "--k",
        "2",
        "--m",
        "3",
        "--seed",
        "1",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "config.json",
        "metrics.jsonl",
        "summary.csv",
        "timing.csv",
        "checkpoint.vlrl",
    ] {
        assert!(run.join(file).exists(), "{file}");
    }
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!((echoed.aux.k, echoed.aux.m, echoed.seed), (2, 3, 1));

    let ckpt = run.join("checkpoint.vlrl");
    let out = vlrl(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--episodes", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 episodes"));
}

#[test]
fn eval_of_missing_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = vlrl(&["eval", "--ckpt", dir.path().join("nope.vlrl").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = vlrl(&["train", "--env", "atari", "--out", run.to_str().unwrap()]);
    assert!(!out.status.success());
    let out = vlrl(&[
        "train",
        "--env",
        "gridworld",
        "--agent",
        "sac",
        "--steps",
        "10",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(!run.exists());
    let out = Command::new(env!("CARGO_BIN_EXE_vlrl"))
        .args(["train", "--steps", "10", "--out", run.to_str().unwrap()])
        .env("VLRL_PRECISION", "f16")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn ablate_writes_results_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("ablate");
    let out = vlrl(&[
        "ablate",
        "--sweep",
        "metric",
        "--seeds",
        "1",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn gradcheck_reports_no_failures() {
    let out = Command::new(env!("CARGO_BIN_EXE_vlrl"))
        .args(["gradcheck", "--instances", "2"])
        .env("VLRL_PRECISION", "f32")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
