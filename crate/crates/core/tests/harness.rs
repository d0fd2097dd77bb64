use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlrl_core::envs::GRID_ACTIONS;
use vlrl_core::harness::{
    ablation_run, evaluate, load_learner, median, read_metrics, train, EnvKind, RunConfig, Sweep, Variant,
};
use vlrl_core::Error;

fn tiny(env: EnvKind) -> RunConfig {
    let mut c = RunConfig::for_env(env).compact();
    c.total_steps = 300;
    c.warmup_steps = 100;
    c.batch_size = 8;
    c.eval_every = 100;
    c.eval_episodes = 2;
    c.log_every = 50;
    c.aux.k = 3;
    c.aux.m = 2;
    c.replay_capacity = 1_000;
    c
}

#[test]
fn warmup_only_run_makes_no_updates() {
    let mut c = tiny(EnvKind::Gridworld);
    c.total_steps = 100;
    let out = train::<f64>(&c, None).unwrap();
    assert_eq!(out.learner.updates(), 0);
    assert!(out.losses.is_empty());
    assert_eq!(out.replay.len(), 100);
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].step, 100);
    assert!(out.records[0].eval_mean.is_some());
}

#[test]
fn training_is_deterministic() {
    let c = tiny(EnvKind::Gridworld);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train::<f64>(&c, Some(a.path())).unwrap();
    train::<f64>(&c, Some(b.path())).unwrap();
    for file in ["metrics.jsonl", "summary.csv", "config.json", "checkpoint.vlrl"] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn pointmass_runs_end_to_end() {
    let mut c = tiny(EnvKind::Pointmass);
    c.total_steps = 250;
    let out = train::<f64>(&c, None).unwrap();
    assert_eq!(out.learner.updates(), 150);
    assert!(out.final_eval.mean <= 0.0);
    for b in &out.losses {
        assert!(b.identity_error(c.aux.lambda_pred, c.aux.lambda_cyc) < 1e-9);
    }
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut c = tiny(EnvKind::Gridworld);
    c.warmup_steps = c.total_steps + 1;
    assert!(matches!(train::<f64>(&c, Some(&out)), Err(Error::Config(_))));
    let mut c = tiny(EnvKind::Gridworld);
    c.agent = vlrl_core::harness::AgentKind::Sac;
    assert!(matches!(train::<f64>(&c, Some(&out)), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn evaluate_rejects_bad_arguments() {
    let c = tiny(EnvKind::Gridworld);
    let learner = vlrl_core::harness::Learner::<f64>::new(c).unwrap();
    assert!(matches!(evaluate(&learner, 0, 0, 0.0), Err(Error::Config(_))));
    assert!(matches!(evaluate(&learner, 3, 0, 1.5), Err(Error::Config(_))));
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(EnvKind::Gridworld);
    let out = train::<f64>(&c, Some(dir.path())).unwrap();
    let ckpt = dir.path().join("checkpoint.vlrl");

    let loaded = load_learner::<f64>(&ckpt).unwrap();
    let trained = out.learner.named_parameters();
    let restored = loaded.named_parameters();
    assert_eq!(trained.len(), restored.len());
    for ((na, a), (nb, b)) in trained.iter().zip(&restored) {
        assert_eq!(na, nb);
        assert_eq!(a, b, "{na}");
    }
    let e = evaluate(&loaded, 2, 7, 0.0).unwrap();
    assert_eq!(e, evaluate(&out.learner, 2, 7, 0.0).unwrap());

    // Widening the latent no longer matches the stored tensors.
    let mut wider = c.clone();
    wider.nets.latent_dim += 1;
    fs::write(dir.path().join("config.json"), serde_json::to_string(&wider).unwrap()).unwrap();
    assert!(matches!(load_learner::<f64>(&ckpt), Err(Error::Load(_))));

    fs::remove_file(dir.path().join("config.json")).unwrap();
    assert!(matches!(load_learner::<f64>(&ckpt), Err(Error::Load(_))));
    assert!(matches!(
        load_learner::<f64>(&dir.path().join("missing.vlrl")),
        Err(Error::Load(_))
    ));
}

/// Return of a uniform random walk from the start cell, simulated without
/// the environment type.
fn random_walk_return(cfg: &vlrl_core::envs::GridConfig, rng: &mut ChaCha8Rng) -> f64 {
    let mut cell = cfg.start;
    let mut total = 0.0;
    for _ in 0..cfg.max_steps {
        cell = cfg.next_cell(cell, rng.gen_range(0..GRID_ACTIONS));
        if cell == cfg.goal {
            return total + cfg.goal_reward;
        }
        total += cfg.step_penalty;
    }
    total
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn random_policy_eval_matches_monte_carlo() {
    let c = tiny(EnvKind::Gridworld);
    let learner = vlrl_core::harness::Learner::<f64>::new(c.clone()).unwrap();
    let eval = evaluate(&learner, 400, 3, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mc: Vec<f64> = (0..4000).map(|_| random_walk_return(&c.grid, &mut rng)).collect();
    let (m1, v1) = mean_var(&eval.returns);
    let (m2, v2) = mean_var(&mc);
    let se = (v1 / eval.returns.len() as f64 + v2 / mc.len() as f64).sqrt();
    assert!((m1 - m2).abs() < 1.96 * se, "eval {m1}, monte carlo {m2}, se {se}");
}

#[test]
fn greedy_eval_from_fixed_start_has_zero_spread() {
    let c = tiny(EnvKind::Gridworld);
    let learner = vlrl_core::harness::Learner::<f64>::new(c).unwrap();
    let eval = evaluate(&learner, 5, 0, 0.0).unwrap();
    assert_eq!(eval.std, 0.0);
    assert!(eval.returns.iter().all(|&r| r == eval.returns[0]));
}

#[test]
fn metrics_files_agree_with_output() {
    let dir = tempfile::tempdir().unwrap();
    let c = tiny(EnvKind::Gridworld);
    let out = train::<f64>(&c, Some(dir.path())).unwrap();
    let read = read_metrics(&dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(read, out.records);
    for r in &read {
        if let Some(b) = &r.loss {
            assert_eq!(b.step, r.step);
            assert!(b.identity_error(c.aux.lambda_pred, c.aux.lambda_cyc) < 1e-9);
        }
    }
    let evals = read.iter().filter(|r| r.eval_mean.is_some()).count();
    assert_eq!(evals, 3);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + evals);
    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 1 + evals);
    assert_eq!(out.final_eval.mean, read.last().unwrap().eval_mean.unwrap());
}

#[test]
fn loss_identity_holds_on_every_update() {
    let mut c = tiny(EnvKind::Gridworld);
    c.aux.lambda_pred = 0.7;
    c.aux.lambda_cyc = 0.3;
    let out = train::<f64>(&c, None).unwrap();
    assert_eq!(out.losses.len(), 200);
    for b in &out.losses {
        assert!(b.identity_error(0.7, 0.3) < 1e-9, "{b:?}");
        assert!((0.0..=4.0 * c.aux.k as f64).contains(&b.pred));
        assert!((0.0..=4.0).contains(&b.cyc));
    }
}

#[test]
fn sweep_setting_counts() {
    let base = tiny(EnvKind::Gridworld);
    assert_eq!(Sweep::K.settings(&base).len(), 10);
    assert_eq!(Sweep::M.settings(&base).len(), 5);
    assert_eq!(Sweep::Variant.settings(&base).len(), 5);
    assert_eq!(Sweep::Metric.settings(&base).len(), 2);
    let labels: Vec<String> = Sweep::Variant.settings(&base).into_iter().map(|s| s.label).collect();
    let unique: std::collections::HashSet<&String> = labels.iter().collect();
    assert_eq!(labels.len(), unique.len());
    assert!(labels[0].starts_with("baseline-wo-pred-k0-"));
    assert!(labels.iter().all(|l| !l.contains('/') && !l.contains('+')));
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    let base = tiny(EnvKind::Gridworld);
    assert_eq!(Variant::BaselineWithoutPred.apply(&base).aux.k, 0);
    assert_eq!(Variant::Baseline.apply(&base).aux.lambda_cyc, 0.0);
    assert!(Variant::BaselineBdm.apply(&base).backward_prediction);
    assert!(Variant::PlayVirtualNd.apply(&base).aux.nd_mode);
}

#[test]
fn single_setting_single_seed_matches_train() {
    let base = tiny(EnvKind::Gridworld);
    let setting = Sweep::Variant
        .settings(&base)
        .into_iter()
        .find(|s| s.variant == Variant::PlayVirtual)
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = ablation_run::<f64>(std::slice::from_ref(&setting), &[4], Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 1);
    let mut cfg = setting.config.clone();
    cfg.seed = 4;
    let out = train::<f64>(&cfg, None).unwrap();
    assert_eq!(rows[0].median_final, out.final_eval.mean);
    assert_eq!(rows[0].median_auc, out.area_under_curve());
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(Path::new(&dir.path().join(&setting.label).join("seed4").join("metrics.jsonl")).exists());
}

#[test]
fn k_zero_rows_match_without_pred_variant() {
    let base = tiny(EnvKind::Gridworld);
    let k_rows = ablation_run::<f64>(&Sweep::K.settings(&base)[..2], &[0, 1], None).unwrap();
    let wo = Sweep::Variant
        .settings(&base)
        .into_iter()
        .find(|s| s.variant == Variant::BaselineWithoutPred)
        .unwrap();
    let wo_rows = ablation_run::<f64>(&[wo], &[0, 1], None).unwrap();
    assert_eq!(k_rows[0].k, 0);
    assert_eq!(k_rows[1].k, 0);
    for r in &k_rows[..2] {
        assert_eq!(r.final_returns, wo_rows[0].final_returns);
        assert_eq!(r.aucs, wo_rows[0].aucs);
    }
}

#[test]
fn median_examples() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}
