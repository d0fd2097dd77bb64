use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{AgentKind, RunConfig};
use crate::agents::{ActMode, LossBreakdown, QHead, SacHead};
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nets::{Branch, Metric, Module, Representation};
use crate::replay::{NStepSample, ReplayBuffer, ReplayError, TransitionSegment};
use crate::rng::{self, StreamRng};
use crate::tensor::{Adam, AdamConfig, Gradients, Real, Tape, Tensor, Var};
use crate::virtual_loop::{
    backward_prediction_loss, cycle_loss, encode_segment_actions, encode_virtual_actions, prediction_loss,
    sample_action_sets, total_loss,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Head<R> {
    Q(QHead<R>),
    Sac(SacHead<R>),
}

/// One Adam instance per network so that a network absent from this step's
/// graph is simply not stepped.
#[derive(Clone, Debug)]
struct Optimizers<R> {
    encoder: Adam<R>,
    projector: Adam<R>,
    predictor: Adam<R>,
    dynamics: Adam<R>,
    backward_dynamics: Adam<R>,
    head: Vec<Adam<R>>,
}

/// Networks, optimizers and sampling streams of one training run.
#[derive(Clone, Debug)]
pub struct Learner<R> {
    pub config: RunConfig,
    pub space: ActionSpace,
    pub obs_dim: usize,
    pub repr: Representation<R>,
    pub head: Head<R>,
    optim: Optimizers<R>,
    rl_rng: StreamRng,
    aux_rng: StreamRng,
    virtual_rng: StreamRng,
    noise_rng: StreamRng,
    updates: u64,
}

fn batch_tensor<R: Real>(rows: &[&[f64]]) -> Result<Tensor<R>> {
    let d = rows.first().map_or(0, |r| r.len());
    let data = rows.iter().flat_map(|r| r.iter().map(|&x| R::of(x))).collect();
    Ok(Tensor::matrix(rows.len(), d, data)?)
}

fn normal_tensor<R: Real>(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor<R> {
    let data = (0..rows * cols)
        .map(|_| R::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// Steps `opt` on `params` when at least one of `vars` got a gradient.
fn step_group<R: Real>(
    opt: &mut Adam<R>,
    params: Vec<&mut Tensor<R>>,
    vars: &[Var],
    grads: &Gradients<R>,
) -> Result<bool> {
    if vars.iter().all(|&v| grads.get(v).is_none()) {
        return Ok(false);
    }
    let zeros: Vec<Vec<R>> = params.iter().map(|p| vec![R::zero(); p.numel()]).collect();
    let g: Vec<Option<&[R]>> = vars
        .iter()
        .zip(&zeros)
        .map(|(&v, z)| Some(grads.get(v).unwrap_or(z.as_slice())))
        .collect();
    let mut params = params;
    opt.step(&mut params, &g)?;
    Ok(true)
}

impl<R: Real> Learner<R> {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.make_env()?;
        let space = env.action_space();
        let obs_dim = env.observation_dim();
        let seed = config.seed;
        let repr = Representation::new(obs_dim, space.encoding_dim(), &config.nets, seed);
        let latent = config.nets.latent_dim;
        let hidden = config.nets.head_hidden;
        let head = match (config.agent, space) {
            (AgentKind::Q, ActionSpace::Discrete(n)) => Head::Q(QHead::new(latent, hidden, n, config.q.clone(), seed)),
            (AgentKind::Sac, ActionSpace::Continuous(d)) => {
                Head::Sac(SacHead::new(latent, hidden, d, config.sac.clone(), seed))
            }
            _ => return Err(Error::Config("agent does not match the action space".into())),
        };
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        let head_groups = match head {
            Head::Q(_) => 1,
            Head::Sac(_) => 3,
        };
        Ok(Self {
            optim: Optimizers {
                encoder: Adam::new(adam),
                projector: Adam::new(adam),
                predictor: Adam::new(adam),
                dynamics: Adam::new(adam),
                backward_dynamics: Adam::new(adam),
                head: (0..head_groups).map(|_| Adam::new(adam)).collect(),
            },
            rl_rng: rng::stream(seed, "replay.rl"),
            aux_rng: rng::stream(seed, "replay.aux"),
            virtual_rng: rng::stream(seed, "virtual"),
            noise_rng: rng::stream(seed, "sac.noise"),
            updates: 0,
            config,
            space,
            obs_dim,
            repr,
            head,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Current exploration knob: epsilon for Q, alpha for SAC.
    pub fn exploration(&self, step: u64) -> f64 {
        match &self.head {
            Head::Q(q) => q.config.epsilon(step, self.config.total_steps),
            Head::Sac(s) => s.alpha(),
        }
    }

    pub fn encode(&self, obs: &[f64]) -> Result<Tensor<R>> {
        let x = Tensor::vector(obs.iter().map(|&v| R::of(v)).collect());
        Ok(self.repr.encoder.infer(&x)?)
    }

    pub fn act<G: Rng>(&self, obs: &[f64], mode: ActMode, step: u64, rng: &mut G) -> Result<Action> {
        let z = self.encode(obs)?;
        Ok(match &self.head {
            Head::Q(q) => Action::Discrete(q.act(&z, mode, self.exploration(step), rng)?),
            Head::Sac(s) => Action::Continuous(s.act(&z, mode, rng)?),
        })
    }

    fn needs_segments(&self) -> bool {
        let aux = &self.config.aux;
        aux.prediction_active() || aux.cycle_active() || (self.config.backward_prediction && aux.k > 0)
    }

    /// One gradient step on `L_rl + lambda_pred L_pred + lambda_cyc L_cyc`
    /// followed by the momentum-target updates.
    pub fn update(&mut self, replay: &ReplayBuffer, step: u64) -> Result<LossBreakdown> {
        let cfg = self.config.clone();
        let batch = replay.sample_rl_batch(cfg.batch_size, cfg.n_step(), cfg.gamma(), &mut self.rl_rng)?;
        let segments = if self.needs_segments() {
            match replay.sample_segments(cfg.batch_size, cfg.aux.k, &mut self.aux_rng) {
                Ok(s) => Some(s),
                Err(ReplayError::NotEnoughData { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };

        let mut tape = Tape::<R>::new();
        let bound = self.repr.bind(&mut tape);

        let obs_rows: Vec<&[f64]> = batch.iter().map(|s| s.observation.as_slice()).collect();
        let next_rows: Vec<&[f64]> = batch.iter().map(|s| s.next_observation.as_slice()).collect();
        let obs = tape.constant(batch_tensor(&obs_rows)?);
        let next_obs = tape.constant(batch_tensor(&next_rows)?);
        let z = bound.encode(&mut tape, obs, Branch::Online)?;
        let next_online_tracked = bound.encode(&mut tape, next_obs, Branch::Online)?;
        let next_online = tape.detach(next_online_tracked);
        let next_target = bound.encode(&mut tape, next_obs, Branch::Target)?;

        let mut mean_log_prob = None;
        let (rl, head_vars) = match &self.head {
            Head::Q(q) => {
                let bq = q.bind(&mut tape);
                let actions: Vec<usize> = batch
                    .iter()
                    .map(|s| match s.action {
                        Action::Discrete(a) => a,
                        Action::Continuous(_) => unreachable!("q agent on a continuous space"),
                    })
                    .collect();
                let returns: Vec<f64> = batch.iter().map(|s| s.discounted_return).collect();
                let discounts: Vec<f64> = batch.iter().map(|s| s.bootstrap_discount(cfg.q.gamma)).collect();
                let loss = bq.loss(&mut tape, z, &actions, next_online, next_target, &returns, &discounts)?;
                (loss, vec![bq.online.vars()])
            }
            Head::Sac(s) => {
                let bs = s.bind(&mut tape);
                let d = s.action_dim();
                let action_rows: Vec<&[f64]> = batch
                    .iter()
                    .map(|t| match &t.action {
                        Action::Continuous(a) => a.as_slice(),
                        Action::Discrete(_) => unreachable!("sac agent on a discrete space"),
                    })
                    .collect();
                let actions = batch_tensor(&action_rows)?;
                let rewards: Vec<f64> = batch.iter().map(|t| t.discounted_return).collect();
                let discounts: Vec<f64> = batch.iter().map(|t| t.bootstrap_discount(cfg.sac.gamma)).collect();
                let next_noise = normal_tensor(batch.len(), d, &mut self.noise_rng);
                let actor_noise = normal_tensor(batch.len(), d, &mut self.noise_rng);
                let losses = bs.losses(
                    &mut tape,
                    z,
                    &actions,
                    &rewards,
                    &discounts,
                    next_online,
                    next_target,
                    &next_noise,
                    &actor_noise,
                    s.alpha(),
                )?;
                mean_log_prob = Some(losses.mean_log_prob);
                let rl = tape.add(losses.critic, losses.actor)?;
                (rl, vec![bs.actor.vars(), bs.critic1.vars(), bs.critic2.vars()])
            }
        };

        let (pred, cyc) = match &segments {
            Some(segs) => self.auxiliary_losses(&mut tape, &bound, segs)?,
            None => (None, None),
        };
        let (total, breakdown) = total_loss(&mut tape, rl, pred, cyc, &cfg.aux, step)?;
        let grads = tape.backward(total)?;

        let o = &mut self.optim;
        step_group(
            &mut o.encoder,
            self.repr.encoder.parameters_mut(),
            &bound.encoder.vars(),
            &grads,
        )?;
        step_group(
            &mut o.projector,
            self.repr.heads.projector.parameters_mut(),
            &bound.heads.projector.vars(),
            &grads,
        )?;
        step_group(
            &mut o.predictor,
            self.repr.heads.predictor.parameters_mut(),
            &bound.heads.predictor.vars(),
            &grads,
        )?;
        step_group(
            &mut o.dynamics,
            self.repr.dynamics.parameters_mut(),
            &bound.dynamics.vars(),
            &grads,
        )?;
        step_group(
            &mut o.backward_dynamics,
            self.repr.backward_dynamics.parameters_mut(),
            &bound.backward_dynamics.vars(),
            &grads,
        )?;
        match &mut self.head {
            Head::Q(q) => {
                step_group(&mut o.head[0], q.online.parameters_mut(), &head_vars[0], &grads)?;
                q.update_target(cfg.tau)?;
            }
            Head::Sac(s) => {
                step_group(&mut o.head[0], s.actor.parameters_mut(), &head_vars[0], &grads)?;
                step_group(&mut o.head[1], s.critic1.parameters_mut(), &head_vars[1], &grads)?;
                step_group(&mut o.head[2], s.critic2.parameters_mut(), &head_vars[2], &grads)?;
                s.update_targets(cfg.tau)?;
                if let Some(lp) = mean_log_prob {
                    s.update_alpha(lp, cfg.learning_rate);
                }
            }
        }
        self.repr.update_targets(cfg.tau)?;
        self.updates += 1;
        Ok(breakdown)
    }

    fn auxiliary_losses(
        &mut self,
        tape: &mut Tape<R>,
        bound: &crate::nets::BoundRepresentation,
        segs: &[TransitionSegment],
    ) -> Result<(Option<Var>, Option<Var>)> {
        let aux = self.config.aux.clone();
        let k = aux.k;
        let obs_at = |tape: &mut Tape<R>, j: usize| -> Result<Var> {
            let rows: Vec<&[f64]> = segs.iter().map(|s| s.observations[j].as_slice()).collect();
            Ok(tape.constant(batch_tensor(&rows)?))
        };
        let o0 = obs_at(tape, 0)?;
        let z_t = bound.encode(tape, o0, Branch::Online)?;
        let action_seqs: Vec<&[Action]> = segs.iter().map(|s| s.actions.as_slice()).collect();
        let actions: Vec<Var> = encode_segment_actions::<R>(self.space, &action_seqs)?
            .into_iter()
            .map(|t| tape.constant(t))
            .collect();
        let mut targets = Vec::with_capacity(k);
        let mut pred = None;
        if aux.prediction_active() || self.config.backward_prediction {
            for j in 1..=k {
                let o = obs_at(tape, j)?;
                targets.push(bound.encode(tape, o, Branch::Target)?);
            }
        }
        if aux.prediction_active() {
            pred = Some(prediction_loss(
                tape,
                &bound.heads,
                z_t,
                &actions,
                &targets,
                &bound.dynamics,
            )?);
        }
        if self.config.backward_prediction {
            let o_end = obs_at(tape, k)?;
            let z_end = bound.encode(tape, o_end, Branch::Online)?;
            let z0_target = bound.encode(tape, o0, Branch::Target)?;
            let mut back_targets = vec![z0_target];
            back_targets.extend_from_slice(&targets[..k - 1]);
            let back = backward_prediction_loss(
                tape,
                &bound.heads,
                z_end,
                &actions,
                &back_targets,
                &bound.backward_dynamics,
            )?;
            pred = Some(match pred {
                Some(p) => tape.add(p, back)?,
                None => back,
            });
        }
        let mut cyc = None;
        if aux.cycle_active() {
            let sets = sample_action_sets(self.space, segs.len(), aux.m, k, &mut self.virtual_rng);
            let virtual_actions: Vec<Var> = encode_virtual_actions::<R>(self.space, &sets)?
                .into_iter()
                .map(|t| tape.constant(t))
                .collect();
            let reference = match aux.metric {
                Metric::Projection => bound.encode(tape, o0, Branch::Target)?,
                Metric::Latent => z_t,
            };
            let dm = if aux.nd_mode {
                &bound.frozen_dynamics
            } else {
                &bound.dynamics
            };
            cyc = Some(cycle_loss(
                tape,
                &bound.heads,
                aux.metric,
                z_t,
                reference,
                &virtual_actions,
                aux.m,
                dm,
                &bound.backward_dynamics,
            )?);
        }
        Ok((pred, cyc))
    }

    /// Every parameter tensor under a stable name.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<R>)> {
        let mut out = self.repr.named_parameters();
        match &self.head {
            Head::Q(q) => out.extend(q.named_parameters()),
            Head::Sac(s) => out.extend(s.named_parameters()),
        }
        out
    }

    /// Overwrites parameters from `(name, tensor)` pairs; every name and
    /// shape must match exactly.
    pub fn load_parameters(&mut self, tensors: Vec<(String, Tensor<R>)>) -> Result<()> {
        let names: Vec<String> = self.named_parameters().into_iter().map(|(n, _)| n).collect();
        if names.len() != tensors.len() {
            return Err(Error::Load(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                names.len()
            )));
        }
        let mut params = self.repr.parameters_mut_named();
        let head_params = match &mut self.head {
            Head::Q(q) => q.parameters_mut_all(),
            Head::Sac(s) => s.parameters_mut_all(),
        };
        let offset = params.len();
        params.extend(names[offset..].iter().cloned().zip(head_params));
        for ((name, dst), (src_name, src)) in params.into_iter().zip(tensors) {
            if name != src_name || dst.shape() != src.shape() {
                return Err(Error::Load(format!(
                    "expected {name} {:?}, found {src_name} {:?}",
                    dst.shape(),
                    src.shape()
                )));
            }
            *dst = src;
        }
        Ok(())
    }

    pub fn sample_nstep(&mut self, replay: &ReplayBuffer) -> Result<Vec<NStepSample>> {
        let cfg = &self.config;
        Ok(replay.sample_rl_batch(cfg.batch_size, cfg.n_step(), cfg.gamma(), &mut self.rl_rng)?)
    }
}
