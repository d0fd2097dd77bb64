//! Encoder, latent dynamics models, projection heads and momentum targets.

mod dynamics;
mod mlp;
mod projection;

pub use dynamics::{BackwardDynamicsModel, BoundDynamics, DynamicsModel, LatentTransition, ResidualDynamics};
pub use mlp::{BoundMlp, Linear, Mlp, Module};
pub use projection::{distance_latent, distance_projection, BoundHeads, Metric, ProjectionHeads};

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

/// Network widths of the representation stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSizes {
    pub latent_dim: usize,
    pub projection_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: usize,
}

impl Default for NetSizes {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            projection_dim: 32,
            encoder_hidden: vec![128, 128],
            head_hidden: 128,
        }
    }
}

/// Which copy of the encoder to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Online,
    Target,
}

/// Encoder `f`, its momentum copy `f~`, the projection heads and both
/// dynamics models.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation<R> {
    pub encoder: Mlp<R>,
    pub target_encoder: Mlp<R>,
    pub heads: ProjectionHeads<R>,
    pub dynamics: DynamicsModel<R>,
    pub backward_dynamics: BackwardDynamicsModel<R>,
}

impl<R: Real> Representation<R> {
    /// Each network is initialised from its own stream of `seed`.
    pub fn new(obs_dim: usize, action_dim: usize, sizes: &NetSizes, seed: u64) -> Self {
        let mut widths = vec![obs_dim];
        widths.extend(&sizes.encoder_hidden);
        widths.push(sizes.latent_dim);
        let encoder = Mlp::new(&widths, &mut rng::stream(seed, "init.encoder"));
        let heads = ProjectionHeads::new(
            sizes.latent_dim,
            sizes.projection_dim,
            &mut rng::stream(seed, "init.heads"),
        );
        let dynamics = ResidualDynamics::new(sizes.latent_dim, action_dim, &mut rng::stream(seed, "init.dynamics"));
        let backward_dynamics = ResidualDynamics::new(
            sizes.latent_dim,
            action_dim,
            &mut rng::stream(seed, "init.backward_dynamics"),
        );
        Self {
            target_encoder: encoder.clone(),
            encoder,
            heads,
            dynamics,
            backward_dynamics,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Binds every network on `tape`; online networks are tracked.
    pub fn bind(&self, tape: &mut Tape<R>) -> BoundRepresentation {
        BoundRepresentation {
            encoder: self.encoder.bind(tape, true),
            target_encoder: self.target_encoder.bind(tape, false),
            heads: self.heads.bind(tape, true),
            dynamics: self.dynamics.bind(tape, true),
            frozen_dynamics: self.dynamics.bind(tape, false),
            backward_dynamics: self.backward_dynamics.bind(tape, true),
        }
    }

    /// Moves `f~` and `g~` toward their online counterparts.
    pub fn update_targets(&mut self, tau: f64) -> Result<()> {
        let online = self.encoder.parameters();
        ema_update(&online, &mut self.target_encoder.parameters_mut(), tau)?;
        let online = self.heads.projector.parameters();
        ema_update(&online, &mut self.heads.target_projector.parameters_mut(), tau)
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor<R>)> {
        let mut out = self.encoder.named_parameters("encoder");
        out.extend(self.target_encoder.named_parameters("target_encoder"));
        out.extend(self.heads.projector.named_parameters("projector"));
        out.extend(self.heads.predictor.named_parameters("predictor"));
        out.extend(self.heads.target_projector.named_parameters("target_projector"));
        out.extend(self.dynamics.net().named_parameters("dynamics"));
        out.extend(self.backward_dynamics.net().named_parameters("backward_dynamics"));
        out
    }

    pub fn parameters_mut_named(&mut self) -> Vec<(String, &mut Tensor<R>)> {
        let names: Vec<String> = self.named_parameters().into_iter().map(|(n, _)| n).collect();
        let mut params = self.encoder.parameters_mut();
        params.extend(self.target_encoder.parameters_mut());
        params.extend(self.heads.projector.parameters_mut());
        params.extend(self.heads.predictor.parameters_mut());
        params.extend(self.heads.target_projector.parameters_mut());
        params.extend(self.dynamics.parameters_mut());
        params.extend(self.backward_dynamics.parameters_mut());
        names.into_iter().zip(params).collect()
    }
}

/// A [`Representation`] living on one tape.
#[derive(Clone, Debug)]
pub struct BoundRepresentation {
    pub encoder: BoundMlp,
    pub target_encoder: BoundMlp,
    pub heads: BoundHeads,
    pub dynamics: BoundDynamics,
    /// The forward model with untracked parameters: gradient still flows
    /// through it to its inputs but never reaches its weights.
    pub frozen_dynamics: BoundDynamics,
    pub backward_dynamics: BoundDynamics,
}

impl BoundRepresentation {
    /// `z = f(obs)` or `z~ = f~(obs)`; the target result is untracked.
    pub fn encode<R: Real>(&self, tape: &mut Tape<R>, obs: Var, branch: Branch) -> Result<Var> {
        match branch {
            Branch::Online => self.encoder.forward(tape, obs),
            Branch::Target => {
                let obs = tape.detach(obs);
                self.target_encoder.forward(tape, obs)
            }
        }
    }
}

/// `target <- tau * target + (1 - tau) * online`, elementwise.
pub fn ema_update<R: Real>(online: &[&Tensor<R>], target: &mut [&mut Tensor<R>], tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(TensorError::Contract(format!("ema coefficient {tau} outside [0, 1]")));
    }
    if online.len() != target.len() {
        return Err(TensorError::Contract(format!(
            "ema over {} online and {} target parameters",
            online.len(),
            target.len()
        )));
    }
    for (o, t) in online.iter().zip(target.iter()) {
        if o.shape() != t.shape() {
            return Err(TensorError::Dimension {
                op: "ema_update",
                lhs: o.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let (keep, mix) = (R::of(tau), R::of(1.0 - tau));
    for (o, t) in online.iter().zip(target.iter_mut()) {
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = keep * *tv + mix * ov;
        }
    }
    Ok(())
}
