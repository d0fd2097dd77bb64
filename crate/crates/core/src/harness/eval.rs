use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;

use super::config::RunConfig;
use super::learner::Learner;
use crate::agents::ActMode;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{read_checkpoint, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Rolls out `episodes` episodes with the deterministic policy. With
/// `epsilon > 0` each action is replaced by a uniform one with that
/// probability; `epsilon = 1` gives the random-policy baseline. Learner
/// state is not touched.
pub fn evaluate<R: Real>(learner: &Learner<R>, episodes: usize, seed: u64, epsilon: f64) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut env = learner.config.make_env()?;
    let space = env.action_space();
    let mut episode_rng = rng::stream(seed, "eval.episodes");
    let mut act_rng = rng::stream(seed, "eval.act");
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(episode_rng.gen());
        let mut total = 0.0;
        loop {
            let action = if epsilon > 0.0 && act_rng.gen::<f64>() < epsilon {
                space.sample(&mut act_rng)
            } else {
                learner.act(&obs, ActMode::Eval, 0, &mut act_rng)?
            };
            let out = env.step(&action)?;
            total += out.reward;
            if out.done() {
                break;
            }
            obs = out.observation;
        }
        returns.push(total);
    }
    Ok(EvalResult::from_returns(returns))
}

/// Rebuilds a learner from a checkpoint and the `config.json` beside it.
pub fn load_learner<R: Real>(checkpoint: &Path) -> Result<Learner<R>> {
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let config_path = dir.join("config.json");
    let config: RunConfig = serde_json::from_reader(BufReader::new(
        File::open(&config_path).map_err(|e| Error::Load(format!("{}: {e}", config_path.display())))?,
    ))
    .map_err(|e| Error::Load(format!("{}: {e}", config_path.display())))?;
    let mut learner = Learner::new(config)?;
    let tensors = read_checkpoint::<R, _>(BufReader::new(
        File::open(checkpoint).map_err(|e| Error::Load(format!("{}: {e}", checkpoint.display())))?,
    ))
    .map_err(|e| Error::Load(format!("{}: {e}", checkpoint.display())))?;
    learner.load_parameters(tensors)?;
    Ok(learner)
}

pub fn evaluate_checkpoint<R: Real>(checkpoint: &Path, episodes: usize, seed: u64) -> Result<EvalResult> {
    let learner = load_learner::<R>(checkpoint)?;
    evaluate(&learner, episodes, seed, 0.0)
}
