use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{BoundMlp, Mlp, Module};
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

/// Where latent distances are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `2 - 2 cos(q(g(z_pred)), g~(z_ref))`.
    #[default]
    Projection,
    /// `2 - 2 cos(z_pred, z_ref)` on raw latents.
    Latent,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "projection" => Ok(Self::Projection),
            "latent" => Ok(Self::Latent),
            other => Err(format!("unknown metric '{other}' (expected projection|latent)")),
        }
    }
}

/// Online projector `g`, online predictor `q` and momentum projector `g~`.
///
/// The predictor is residual, `q(p) = p + W p + c`, so predicted and target
/// projections start out positively aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHeads<R> {
    pub projector: Mlp<R>,
    pub predictor: Mlp<R>,
    pub target_projector: Mlp<R>,
}

impl<R: Real> ProjectionHeads<R> {
    pub fn new<G: Rng>(latent_dim: usize, projection_dim: usize, rng: &mut G) -> Self {
        let projector = Mlp::new(&[latent_dim, projection_dim], rng);
        let predictor = Mlp::new(&[projection_dim, projection_dim], rng);
        Self {
            target_projector: projector.clone(),
            projector,
            predictor,
        }
    }

    pub fn from_parts(projector: Mlp<R>, predictor: Mlp<R>, target_projector: Mlp<R>) -> Result<Self> {
        let p = projector.output_dim();
        if predictor.input_dim() != p || predictor.output_dim() != p || target_projector.sizes() != projector.sizes() {
            return Err(TensorError::Dimension {
                op: "projection heads",
                lhs: projector.sizes(),
                rhs: predictor.sizes(),
            });
        }
        Ok(Self {
            projector,
            predictor,
            target_projector,
        })
    }

    pub fn projection_dim(&self) -> usize {
        self.projector.output_dim()
    }

    /// Binds `g` and `q` (tracked when `trainable`) and `g~` (never tracked).
    pub fn bind(&self, tape: &mut Tape<R>, trainable: bool) -> BoundHeads {
        BoundHeads {
            projector: self.projector.bind(tape, trainable),
            predictor: self.predictor.bind(tape, trainable),
            target_projector: self.target_projector.bind(tape, false),
        }
    }

    /// Online parameters: projector then predictor.
    pub fn online_parameters_mut(&mut self) -> Vec<&mut Tensor<R>> {
        let mut p = self.projector.parameters_mut();
        p.extend(self.predictor.parameters_mut());
        p
    }
}

#[derive(Clone, Debug)]
pub struct BoundHeads {
    pub projector: BoundMlp,
    pub predictor: BoundMlp,
    pub target_projector: BoundMlp,
}

impl BoundHeads {
    /// `q(g(z))`, differentiable.
    pub fn project_predict<R: Real>(&self, tape: &mut Tape<R>, z: Var) -> Result<Var> {
        let p = self.projector.forward(tape, z)?;
        let delta = self.predictor.forward(tape, p)?;
        tape.add(p, delta)
    }

    /// `g~(z)` with the whole path cut from the gradient.
    pub fn project_target<R: Real>(&self, tape: &mut Tape<R>, z: Var) -> Result<Var> {
        let z = tape.detach(z);
        self.target_projector.forward(tape, z)
    }

    pub fn online_vars(&self) -> Vec<Var> {
        let mut v = self.projector.vars();
        v.extend(self.predictor.vars());
        v
    }
}

/// `2 - 2 cos` per row; shape `[n]` for batches, scalar for vectors.
fn cosine_distance<R: Real>(tape: &mut Tape<R>, a: Var, b: Var) -> Result<Var> {
    let cos = tape.cosine_similarity(a, b)?;
    let scaled = tape.scale(cos, R::of(-2.0));
    Ok(tape.offset(scaled, R::of(2.0)))
}

/// Projection-space distance; gradient reaches only `z_pred`'s path.
pub fn distance_projection<R: Real>(tape: &mut Tape<R>, heads: &BoundHeads, z_pred: Var, z_ref: Var) -> Result<Var> {
    let pred = heads.project_predict(tape, z_pred)?;
    let target = heads.project_target(tape, z_ref)?;
    cosine_distance(tape, pred, target)
}

/// Cosine distance on raw latents with `z_ref` stop-gradiented.
pub fn distance_latent<R: Real>(tape: &mut Tape<R>, z_pred: Var, z_ref: Var) -> Result<Var> {
    let reference = tape.detach(z_ref);
    cosine_distance(tape, z_pred, reference)
}

impl Metric {
    /// Per-row distance between predicted and reference latents.
    pub fn distance<R: Real>(self, tape: &mut Tape<R>, heads: &BoundHeads, z_pred: Var, z_ref: Var) -> Result<Var> {
        match self {
            Metric::Projection => distance_projection(tape, heads, z_pred, z_ref),
            Metric::Latent => distance_latent(tape, z_pred, z_ref),
        }
    }
}
