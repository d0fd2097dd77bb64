use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ActMode;
use crate::nets::{ema_update, BoundMlp, Mlp, Module};
use crate::rng;
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub gamma: f64,
    /// Initial (and, without auto tuning, fixed) entropy weight.
    pub alpha: f64,
    pub auto_alpha: bool,
    /// Defaults to `-action_dim` when auto tuning.
    pub target_entropy: Option<f64>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.1,
            auto_alpha: false,
            target_entropy: None,
            log_std_min: -10.0,
            log_std_max: 2.0,
        }
    }
}

/// Log-density of `a = tanh(u)`, `u ~ N(mean, exp(log_std)^2)` per
/// dimension, summed over dimensions, written from the raw formula.
pub fn tanh_gaussian_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let std = log_std[i].exp();
        let eps = (u[i] - mean[i]) / std;
        lp += -0.5 * eps * eps - log_std[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        lp -= (1.0 - u[i].tanh().powi(2)).ln();
    }
    lp
}

/// Squashed Gaussian actor and twin critics with momentum targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SacHead<R> {
    pub actor: Mlp<R>,
    pub critic1: Mlp<R>,
    pub critic2: Mlp<R>,
    pub target_critic1: Mlp<R>,
    pub target_critic2: Mlp<R>,
    pub log_alpha: f64,
    pub config: SacConfig,
    action_dim: usize,
}

pub struct SacLosses {
    pub critic: Var,
    pub actor: Var,
    /// Mean log-probability of the fresh actor samples (for temperature
    /// tuning).
    pub mean_log_prob: f64,
}

impl<R: Real> SacHead<R> {
    pub fn new(latent_dim: usize, hidden: usize, action_dim: usize, config: SacConfig, seed: u64) -> Self {
        let actor = Mlp::new(
            &[latent_dim, hidden, hidden, 2 * action_dim],
            &mut rng::stream(seed, "init.actor"),
        );
        let critic_sizes = [latent_dim + action_dim, hidden, hidden, 1];
        let critic1 = Mlp::new(&critic_sizes, &mut rng::stream(seed, "init.critic1"));
        let critic2 = Mlp::new(&critic_sizes, &mut rng::stream(seed, "init.critic2"));
        Self {
            target_critic1: critic1.clone(),
            target_critic2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: config.alpha.ln(),
            config,
            action_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    /// Mean and clamped log-std for a single latent.
    pub fn policy(&self, z: &Tensor<R>) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.actor.infer(z)?.to_f64_vec();
        let d = self.action_dim;
        let log_std = out[d..2 * d]
            .iter()
            .map(|x| x.clamp(self.config.log_std_min, self.config.log_std_max))
            .collect();
        Ok((out[..d].to_vec(), log_std))
    }

    /// Sampled squashed action in training, `tanh(mean)` in evaluation.
    pub fn act<G: Rng>(&self, z: &Tensor<R>, mode: ActMode, rng: &mut G) -> Result<Vec<f64>> {
        let (mean, log_std) = self.policy(z)?;
        Ok(match mode {
            ActMode::Eval => mean.iter().map(|m| m.tanh()).collect(),
            ActMode::Train => mean
                .iter()
                .zip(&log_std)
                .map(|(m, s)| {
                    let eps: f64 = rng.sample(StandardNormal);
                    (m + s.exp() * eps).tanh()
                })
                .collect(),
        })
    }

    pub fn bind(&self, tape: &mut Tape<R>) -> BoundSac {
        BoundSac {
            actor: self.actor.bind(tape, true),
            actor_frozen: self.actor.bind(tape, false),
            critic1: self.critic1.bind(tape, true),
            critic2: self.critic2.bind(tape, true),
            critic1_frozen: self.critic1.bind(tape, false),
            critic2_frozen: self.critic2.bind(tape, false),
            target_critic1: self.target_critic1.bind(tape, false),
            target_critic2: self.target_critic2.bind(tape, false),
            action_dim: self.action_dim,
            log_std_min: self.config.log_std_min,
            log_std_max: self.config.log_std_max,
        }
    }

    pub fn update_targets(&mut self, tau: f64) -> Result<()> {
        let online = self.critic1.parameters();
        ema_update(&online, &mut self.target_critic1.parameters_mut(), tau)?;
        let online = self.critic2.parameters();
        ema_update(&online, &mut self.target_critic2.parameters_mut(), tau)
    }

    /// One gradient step on `log alpha` when auto tuning is enabled.
    pub fn update_alpha(&mut self, mean_log_prob: f64, learning_rate: f64) {
        if self.config.auto_alpha {
            let grad = -(mean_log_prob + self.target_entropy());
            self.log_alpha -= learning_rate * grad;
        }
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor<R>)> {
        let mut out = self.actor.named_parameters("actor");
        out.extend(self.critic1.named_parameters("critic1"));
        out.extend(self.critic2.named_parameters("critic2"));
        out.extend(self.target_critic1.named_parameters("target_critic1"));
        out.extend(self.target_critic2.named_parameters("target_critic2"));
        out
    }

    pub fn parameters_mut_all(&mut self) -> Vec<&mut Tensor<R>> {
        let mut p = self.actor.parameters_mut();
        p.extend(self.critic1.parameters_mut());
        p.extend(self.critic2.parameters_mut());
        p.extend(self.target_critic1.parameters_mut());
        p.extend(self.target_critic2.parameters_mut());
        p
    }
}

#[derive(Clone, Debug)]
pub struct BoundSac {
    pub actor: BoundMlp,
    actor_frozen: BoundMlp,
    pub critic1: BoundMlp,
    pub critic2: BoundMlp,
    critic1_frozen: BoundMlp,
    critic2_frozen: BoundMlp,
    target_critic1: BoundMlp,
    target_critic2: BoundMlp,
    action_dim: usize,
    log_std_min: f64,
    log_std_max: f64,
}

fn critic_value<R: Real>(tape: &mut Tape<R>, critic: &BoundMlp, z: Var, a: Var) -> Result<Var> {
    let input = tape.concat_cols(z, a)?;
    let q = critic.forward(tape, input)?;
    let n = tape.value(q).rows();
    tape.reshape(q, &[n])
}

impl BoundSac {
    /// Reparameterised squashed sample and its log-probability (`[n]`).
    /// `noise` is the standard normal draw, `n x action_dim`.
    pub fn sample<R: Real>(&self, tape: &mut Tape<R>, actor_out: Var, noise: &Tensor<R>) -> Result<(Var, Var)> {
        let d = self.action_dim;
        let out = tape.value(actor_out);
        if out.rank() != 2 || out.cols() != 2 * d || noise.shape() != [out.rows(), d] {
            return Err(TensorError::Dimension {
                op: "sac sample",
                lhs: out.shape().to_vec(),
                rhs: noise.shape().to_vec(),
            });
        }
        let mean = tape.slice_cols(actor_out, 0, d)?;
        let raw_log_std = tape.slice_cols(actor_out, d, 2 * d)?;
        let log_std = tape.clamp(raw_log_std, R::of(self.log_std_min), R::of(self.log_std_max));
        let std = tape.exp(log_std);
        let eps = tape.constant(noise.clone());
        let spread = tape.mul(std, eps)?;
        let u = tape.add(mean, spread)?;
        let action = tape.tanh(u);

        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let gauss_const: Vec<R> = noise
            .data()
            .chunks(d)
            .map(|row| {
                R::of(
                    row.iter()
                        .map(|e| -0.5 * e.as_f64() * e.as_f64() - half_log_2pi)
                        .sum::<f64>(),
                )
            })
            .collect();
        let gauss_const = tape.constant(Tensor::vector(gauss_const));
        let log_std_sum = tape.sum_cols(log_std)?;
        let gauss = tape.sub(gauss_const, log_std_sum)?;
        // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
        let neg2u = tape.scale(u, R::of(-2.0));
        let sp = tape.softplus(neg2u);
        let u_sp = tape.add(u, sp)?;
        let inner = tape.neg(u_sp);
        let inner = tape.offset(inner, R::of(std::f64::consts::LN_2));
        let log_det = tape.scale(inner, R::of(2.0));
        let log_det = tape.sum_cols(log_det)?;
        let log_prob = tape.sub(gauss, log_det)?;
        Ok((action, log_prob))
    }

    /// Twin-critic regression loss. `z` is the tracked online latent;
    /// `next_online` / `next_target` are untracked latents of the next
    /// observations. `discounts[i]` is `gamma * (1 - terminal)`.
    #[allow(clippy::too_many_arguments)]
    pub fn critic_loss<R: Real>(
        &self,
        tape: &mut Tape<R>,
        z: Var,
        actions: &Tensor<R>,
        rewards: &[f64],
        discounts: &[f64],
        next_online: Var,
        next_target: Var,
        next_noise: &Tensor<R>,
        alpha: f64,
    ) -> Result<Var> {
        let out = self.actor_frozen.forward(tape, next_online)?;
        let (next_action, next_log_prob) = self.sample(tape, out, next_noise)?;
        let q1 = critic_value(tape, &self.target_critic1, next_target, next_action)?;
        let q2 = critic_value(tape, &self.target_critic2, next_target, next_action)?;
        let q_min = tape.minimum(q1, q2)?;
        let (qm, lp) = (tape.value(q_min).data(), tape.value(next_log_prob).data());
        if qm.len() != rewards.len() || discounts.len() != rewards.len() {
            return Err(TensorError::Dimension {
                op: "sac targets",
                lhs: vec![qm.len()],
                rhs: vec![rewards.len(), discounts.len()],
            });
        }
        let y: Vec<R> = (0..rewards.len())
            .map(|i| R::of(rewards[i] + discounts[i] * (qm[i].as_f64() - alpha * lp[i].as_f64())))
            .collect();
        let y = tape.constant(Tensor::vector(y));

        let a = tape.constant(actions.clone());
        let mut total = None;
        for critic in [&self.critic1, &self.critic2] {
            let q = critic_value(tape, critic, z, a)?;
            let err = tape.sub(q, y)?;
            let sq = tape.square(err);
            let m = tape.mean(sq);
            total = Some(match total {
                None => m,
                Some(t) => tape.add(t, m)?,
            });
        }
        Ok(total.expect("two critics"))
    }

    /// `mean(alpha * log pi(a|z) - min_i Q_i(z, a))` with `a` resampled
    /// through the reparameterisation; critics are held fixed and `z` is
    /// detached so only the actor receives gradient.
    pub fn actor_loss<R: Real>(&self, tape: &mut Tape<R>, z: Var, noise: &Tensor<R>, alpha: f64) -> Result<(Var, f64)> {
        let z = tape.detach(z);
        let out = self.actor.forward(tape, z)?;
        let (action, log_prob) = self.sample(tape, out, noise)?;
        let q1 = critic_value(tape, &self.critic1_frozen, z, action)?;
        let q2 = critic_value(tape, &self.critic2_frozen, z, action)?;
        let q_min = tape.minimum(q1, q2)?;
        let weighted = tape.scale(log_prob, R::of(alpha));
        let diff = tape.sub(weighted, q_min)?;
        let lp = tape.value(log_prob).data();
        let mean_lp = lp.iter().map(|x| x.as_f64()).sum::<f64>() / lp.len() as f64;
        Ok((tape.mean(diff), mean_lp))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn losses<R: Real>(
        &self,
        tape: &mut Tape<R>,
        z: Var,
        actions: &Tensor<R>,
        rewards: &[f64],
        discounts: &[f64],
        next_online: Var,
        next_target: Var,
        next_noise: &Tensor<R>,
        actor_noise: &Tensor<R>,
        alpha: f64,
    ) -> Result<SacLosses> {
        let critic = self.critic_loss(
            tape,
            z,
            actions,
            rewards,
            discounts,
            next_online,
            next_target,
            next_noise,
            alpha,
        )?;
        let (actor, mean_log_prob) = self.actor_loss(tape, z, actor_noise, alpha)?;
        Ok(SacLosses {
            critic,
            actor,
            mean_log_prob,
        })
    }
}
