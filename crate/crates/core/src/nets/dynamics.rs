use rand::Rng;

use super::mlp::{BoundMlp, Mlp, Module};
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

/// One latent transition `(z, a) -> z_next` evaluated on a tape.
///
/// The forward model `h` and the backward model `b` share this shape; test
/// doubles implement it directly.
pub trait LatentTransition<R: Real> {
    fn step(&self, tape: &mut Tape<R>, z: Var, action: Var) -> Result<Var>;
}

/// `z + net([z, a])` with a two-hidden-layer relu network of width `2 d_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualDynamics<R> {
    net: Mlp<R>,
    latent_dim: usize,
    action_dim: usize,
}

/// Forward model `h`.
pub type DynamicsModel<R> = ResidualDynamics<R>;
/// Backward model `b`; same architecture as the forward one.
pub type BackwardDynamicsModel<R> = ResidualDynamics<R>;

impl<R: Real> ResidualDynamics<R> {
    pub fn new<G: Rng>(latent_dim: usize, action_dim: usize, rng: &mut G) -> Self {
        let hidden = 2 * latent_dim;
        Self {
            net: Mlp::new(&[latent_dim + action_dim, hidden, hidden, latent_dim], rng),
            latent_dim,
            action_dim,
        }
    }

    pub fn from_net(net: Mlp<R>, latent_dim: usize, action_dim: usize) -> Result<Self> {
        if net.input_dim() != latent_dim + action_dim || net.output_dim() != latent_dim {
            return Err(TensorError::Dimension {
                op: "dynamics",
                lhs: net.sizes(),
                rhs: vec![latent_dim, action_dim],
            });
        }
        Ok(Self {
            net,
            latent_dim,
            action_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn net(&self) -> &Mlp<R> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp<R> {
        &mut self.net
    }

    pub fn bind(&self, tape: &mut Tape<R>, trainable: bool) -> BoundDynamics {
        BoundDynamics {
            net: self.net.bind(tape, trainable),
            latent_dim: self.latent_dim,
            action_dim: self.action_dim,
        }
    }

    /// Binds the transition onto existing parameter handles.
    pub fn bind_vars(&self, vars: &[Var]) -> BoundDynamics {
        BoundDynamics {
            net: BoundMlp::from_vars(vars),
            latent_dim: self.latent_dim,
            action_dim: self.action_dim,
        }
    }

    /// Untracked transition for a batch of latents and encoded actions.
    pub fn infer(&self, z: &Tensor<R>, action: &Tensor<R>) -> Result<Tensor<R>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let (zv, av) = (tape.constant(z.clone()), tape.constant(action.clone()));
        let out = bound.step(&mut tape, zv, av)?;
        Ok(tape.value(out).clone())
    }
}

impl<R: Real> Module<R> for ResidualDynamics<R> {
    fn parameters(&self) -> Vec<&Tensor<R>> {
        self.net.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<R>> {
        self.net.parameters_mut()
    }
}

#[derive(Clone, Debug)]
pub struct BoundDynamics {
    net: BoundMlp,
    latent_dim: usize,
    action_dim: usize,
}

impl BoundDynamics {
    pub fn vars(&self) -> Vec<Var> {
        self.net.vars()
    }
}

impl<R: Real> LatentTransition<R> for BoundDynamics {
    fn step(&self, tape: &mut Tape<R>, z: Var, action: Var) -> Result<Var> {
        let (zs, a_s) = (tape.value(z).shape().to_vec(), tape.value(action).shape().to_vec());
        if zs.len() != 2 || a_s.len() != 2 || zs[1] != self.latent_dim || a_s[1] != self.action_dim || zs[0] != a_s[0] {
            return Err(TensorError::Dimension {
                op: "dynamics step",
                lhs: zs,
                rhs: a_s,
            });
        }
        let input = tape.concat_cols(z, action)?;
        let delta = self.net.forward(tape, input)?;
        tape.add(z, delta)
    }
}
