use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use super::config::RunConfig;
use super::eval::{evaluate, EvalResult};
use super::learner::Learner;
use super::metrics::{write_metrics, write_summary, MetricsRecord};
use crate::agents::{ActMode, LossBreakdown};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, ReplayError, Transition};
use crate::rng;
use crate::tensor::{write_checkpoint, Real};

pub struct TrainOutput<R> {
    pub records: Vec<MetricsRecord>,
    pub final_eval: EvalResult,
    pub learner: Learner<R>,
    /// Every loss breakdown produced, in update order.
    pub losses: Vec<LossBreakdown>,
    /// `(step, seconds since start)` at each eval.
    pub timing: Vec<(u64, f64)>,
    pub replay: ReplayBuffer,
}

impl<R> TrainOutput<R> {
    pub fn area_under_curve(&self) -> f64 {
        area_under_curve(&self.records)
    }
}

/// Mean eval return over the learning curve; evaluations are equally
/// spaced, so this is the normalized area under it.
pub fn area_under_curve(records: &[MetricsRecord]) -> f64 {
    let evals: Vec<f64> = records.iter().filter_map(|r| r.eval_mean).collect();
    if evals.is_empty() {
        return f64::NAN;
    }
    evals.iter().sum::<f64>() / evals.len() as f64
}

/// Runs collect, store, sample, update and target refresh for
/// `total_steps` environment steps. With `out_dir` set, writes
/// `config.json`, `metrics.jsonl`, `summary.csv`, `timing.csv` and
/// `checkpoint.vlrl` into it.
pub fn train<R: Real>(config: &RunConfig, out_dir: Option<&Path>) -> Result<TrainOutput<R>> {
    config.validate()?;
    let started = Instant::now();
    let mut env = config.make_env()?;
    let space = env.action_space();
    let mut learner = Learner::<R>::new(config.clone())?;
    let mut replay = ReplayBuffer::new(config.replay_capacity)?;
    let mut act_rng = rng::stream(config.seed, "act");
    let mut episode_rng = rng::stream(config.seed, "env.episodes");
    // Every evaluation replays the same start states.
    let eval_seed = rng::stream_seed(config.seed, "eval");

    let mut records = Vec::new();
    let mut losses = Vec::new();
    let mut timing = Vec::new();
    let mut last_eval = None;

    let mut obs = env.reset(episode_rng.gen());
    let mut episode = 0u64;
    let mut episode_step = 0u64;
    for t in 0..config.total_steps {
        let action = if t < config.warmup_steps {
            space.sample(&mut act_rng)
        } else {
            learner.act(&obs, ActMode::Train, t, &mut act_rng)?
        };
        let out = env.step(&action)?;
        let done = out.done();
        replay.push(Transition {
            observation: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            terminal: out.terminal,
            truncated: out.truncated,
            episode,
            step: episode_step,
            final_observation: done.then(|| out.observation.clone()),
        });
        if done {
            obs = env.reset(episode_rng.gen());
            episode += 1;
            episode_step = 0;
        } else {
            obs = out.observation;
            episode_step += 1;
        }

        let step = t + 1;
        if t >= config.warmup_steps {
            for _ in 0..config.updates_per_step {
                match learner.update(&replay, step) {
                    Ok(b) => losses.push(b),
                    Err(Error::Replay(ReplayError::NotEnoughData { .. })) => break,
                    Err(e) => return Err(e),
                }
            }
        }

        let log_now = step % config.log_every == 0 && losses.last().is_some_and(|b| b.step == step);
        let eval_now = step % config.eval_every == 0 || step == config.total_steps;
        if log_now || eval_now {
            let eval = if eval_now {
                let e = evaluate(&learner, config.eval_episodes, eval_seed, 0.0)?;
                timing.push((step, started.elapsed().as_secs_f64()));
                Some(e)
            } else {
                None
            };
            records.push(MetricsRecord {
                step,
                updates: learner.updates(),
                loss: if log_now { losses.last().cloned() } else { None },
                eval_mean: eval.as_ref().map(|e| e.mean),
                eval_std: eval.as_ref().map(|e| e.std),
                exploration: learner.exploration(step),
            });
            if eval.is_some() {
                last_eval = eval;
            }
        }
    }

    let final_eval = last_eval.expect("the last step always evaluates");
    if let Some(dir) = out_dir {
        write_outputs(dir, config, &learner, &records, &timing)?;
    }
    Ok(TrainOutput {
        records,
        final_eval,
        learner,
        losses,
        timing,
        replay,
    })
}

fn write_outputs<R: Real>(
    dir: &Path,
    config: &RunConfig,
    learner: &Learner<R>,
    records: &[MetricsRecord],
    timing: &[(u64, f64)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut cfg = BufWriter::new(File::create(dir.join("config.json"))?);
    serde_json::to_writer_pretty(&mut cfg, config)?;
    cfg.write_all(b"\n")?;
    cfg.flush()?;
    write_metrics(BufWriter::new(File::create(dir.join("metrics.jsonl"))?), records)?;
    write_summary(File::create(dir.join("summary.csv"))?, records)?;
    let mut tw = csv::Writer::from_path(dir.join("timing.csv"))?;
    tw.write_record(["step", "seconds"])?;
    for (step, secs) in timing {
        tw.write_record([step.to_string(), format!("{secs:.3}")])?;
    }
    tw.flush()?;
    let mut ck = BufWriter::new(File::create(dir.join("checkpoint.vlrl"))?);
    write_checkpoint(&mut ck, &learner.named_parameters())?;
    ck.flush()?;
    Ok(())
}
