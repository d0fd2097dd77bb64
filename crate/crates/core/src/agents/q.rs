use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ActMode;
use crate::nets::{ema_update, BoundMlp, Mlp, Module};
use crate::rng;
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the run over which epsilon decays linearly.
    pub epsilon_fraction: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_step: 3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.2,
        }
    }
}

impl QConfig {
    pub fn epsilon(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = (self.epsilon_fraction * total_steps as f64).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

/// Epsilon-greedy choice over `q_values`; ties go to the lowest index.
pub fn select_action<G: Rng>(q_values: &[f64], epsilon: f64, rng: &mut G) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q_values.len());
    }
    argmax(q_values)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Online and momentum Q networks over the latent.
#[derive(Clone, Debug, PartialEq)]
pub struct QHead<R> {
    pub online: Mlp<R>,
    pub target: Mlp<R>,
    pub config: QConfig,
}

impl<R: Real> QHead<R> {
    pub fn new(latent_dim: usize, hidden: usize, num_actions: usize, config: QConfig, seed: u64) -> Self {
        let online = Mlp::new(&[latent_dim, hidden, num_actions], &mut rng::stream(seed, "init.q"));
        Self {
            target: online.clone(),
            online,
            config,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn q_values(&self, z: &Tensor<R>) -> Result<Vec<f64>> {
        Ok(self.online.infer(z)?.to_f64_vec())
    }

    /// Epsilon-greedy in training, greedy in evaluation.
    pub fn act<G: Rng>(&self, z: &Tensor<R>, mode: ActMode, epsilon: f64, rng: &mut G) -> Result<usize> {
        let q = self.q_values(z)?;
        let eps = match mode {
            ActMode::Train => epsilon,
            ActMode::Eval => 0.0,
        };
        Ok(select_action(&q, eps, rng))
    }

    pub fn bind(&self, tape: &mut Tape<R>) -> BoundQ {
        BoundQ {
            online: self.online.bind(tape, true),
            online_frozen: self.online.bind(tape, false),
            target: self.target.bind(tape, false),
        }
    }

    pub fn update_target(&mut self, tau: f64) -> Result<()> {
        let online = self.online.parameters();
        ema_update(&online, &mut self.target.parameters_mut(), tau)
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor<R>)> {
        let mut out = self.online.named_parameters("q");
        out.extend(self.target.named_parameters("q_target"));
        out
    }

    pub fn parameters_mut_all(&mut self) -> Vec<&mut Tensor<R>> {
        let mut p = self.online.parameters_mut();
        p.extend(self.target.parameters_mut());
        p
    }
}

#[derive(Clone, Debug)]
pub struct BoundQ {
    pub online: BoundMlp,
    online_frozen: BoundMlp,
    target: BoundMlp,
}

impl BoundQ {
    /// Double-Q targets `R_n + discount * Q~(z'~, argmax_a Q(z', a))`.
    ///
    /// `discounts[i]` already folds in `gamma^n` and the terminal mask.
    pub fn targets<R: Real>(
        &self,
        tape: &mut Tape<R>,
        next_online: Var,
        next_target: Var,
        returns: &[f64],
        discounts: &[f64],
    ) -> Result<Vec<f64>> {
        let q_next = self.online_frozen.forward(tape, next_online)?;
        let q_next_target = self.target.forward(tape, next_target)?;
        let (qn, qt) = (tape.value(q_next), tape.value(q_next_target));
        if qn.rows() != returns.len() || discounts.len() != returns.len() {
            return Err(TensorError::Dimension {
                op: "q targets",
                lhs: qn.shape().to_vec(),
                rhs: vec![returns.len(), discounts.len()],
            });
        }
        Ok((0..returns.len())
            .map(|i| {
                let greedy = argmax(&qn.row(i).iter().map(|x| x.as_f64()).collect::<Vec<_>>());
                returns[i] + discounts[i] * qt.row(i)[greedy].as_f64()
            })
            .collect())
    }

    /// Mean squared TD error. `z` is the tracked online latent of the
    /// sampled observations; `next_online` and `next_target` are untracked
    /// latents of the bootstrap observations from the online and momentum
    /// encoders.
    #[allow(clippy::too_many_arguments)]
    pub fn loss<R: Real>(
        &self,
        tape: &mut Tape<R>,
        z: Var,
        actions: &[usize],
        next_online: Var,
        next_target: Var,
        returns: &[f64],
        discounts: &[f64],
    ) -> Result<Var> {
        let y = self.targets(tape, next_online, next_target, returns, discounts)?;
        let q = self.online.forward(tape, z)?;
        let q_sa = tape.gather_cols(q, actions)?;
        let y = tape.constant(Tensor::vector(y.into_iter().map(R::of).collect()));
        let err = tape.sub(q_sa, y)?;
        let sq = tape.square(err);
        Ok(tape.mean(sq))
    }
}
