//! Forward prediction on real segments, action augmentation, backward
//! unrolls and the cycle-consistency loss over virtual trajectories.
//!
//! A virtual trajectory starts from a real latent `z_t`, is rolled forward
//! `K` steps by the dynamics model with sampled actions and then rolled back
//! by the backward model with the same actions in reverse order. The end
//! point `z'_t` is compared with `z_t`; no future observation is used.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::LossBreakdown;
use crate::envs::{Action, ActionSpace};
use crate::nets::{distance_projection, BoundHeads, LatentTransition, Metric};
use crate::rng;
use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxConfig {
    /// Prediction horizon; 0 disables both auxiliary losses.
    pub k: usize,
    /// Virtual trajectories per start state.
    pub m: usize,
    pub lambda_pred: f64,
    pub lambda_cyc: f64,
    pub metric: Metric,
    /// Keep the cycle loss from updating the forward dynamics model.
    pub nd_mode: bool,
}

impl AuxConfig {
    /// `K = 9`, `M = 2 |A|`.
    pub fn discrete(num_actions: usize) -> Self {
        Self {
            k: 9,
            m: 2 * num_actions,
            lambda_pred: 1.0,
            lambda_cyc: 1.0,
            metric: Metric::Projection,
            nd_mode: false,
        }
    }

    /// `K = 6`, `M = 10`.
    pub fn continuous() -> Self {
        Self {
            k: 6,
            m: 10,
            ..Self::discrete(5)
        }
    }

    pub fn for_space(space: ActionSpace) -> Self {
        match space {
            ActionSpace::Discrete(n) => Self::discrete(n),
            ActionSpace::Continuous(_) => Self::continuous(),
        }
    }

    pub fn prediction_active(&self) -> bool {
        self.k > 0 && self.lambda_pred != 0.0
    }

    pub fn cycle_active(&self) -> bool {
        self.k > 0 && self.lambda_cyc != 0.0 && self.m > 0
    }
}

/// `M` sequences of `K` actions drawn i.i.d. uniformly from a space.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualActionSet {
    pub sequences: Vec<Vec<Action>>,
    pub seed: u64,
}

impl VirtualActionSet {
    pub fn m(&self) -> usize {
        self.sequences.len()
    }

    pub fn k(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }
}

pub fn sample_virtual_actions(space: ActionSpace, m: usize, k: usize, seed: u64) -> VirtualActionSet {
    let mut g = rng::stream(seed, "virtual.actions");
    let sequences = (0..m).map(|_| (0..k).map(|_| space.sample(&mut g)).collect()).collect();
    VirtualActionSet { sequences, seed }
}

/// Per-step action batches for one set per start state. Step `j` gives a
/// `(B*M) x d_a` tensor whose row `b*M + m` is action `j` of sequence `m`
/// of start state `b`, matching [`Tape::repeat_rows`] on the latents.
pub fn encode_virtual_actions<R: Real>(space: ActionSpace, sets: &[VirtualActionSet]) -> Result<Vec<Tensor<R>>> {
    let Some(first) = sets.first() else {
        return Err(TensorError::Contract("no virtual action sets".into()));
    };
    let (m, k) = (first.m(), first.k());
    if sets
        .iter()
        .any(|s| s.m() != m || s.sequences.iter().any(|q| q.len() != k))
    {
        return Err(TensorError::Contract("virtual action sets differ in M or K".into()));
    }
    let d = space.encoding_dim();
    let rows = sets.len() * m;
    (0..k)
        .map(|j| {
            let mut data = vec![R::zero(); rows * d];
            for (b, set) in sets.iter().enumerate() {
                for (mi, seq) in set.sequences.iter().enumerate() {
                    let row = b * m + mi;
                    space.encode_into(&seq[j], &mut data[row * d..(row + 1) * d]);
                }
            }
            Tensor::matrix(rows, d, data)
        })
        .collect()
}

/// Real actions of a segment batch: `K` tensors of shape `B x d_a`.
pub fn encode_segment_actions<R: Real>(space: ActionSpace, actions: &[&[Action]]) -> Result<Vec<Tensor<R>>> {
    let k = actions.first().map_or(0, |a| a.len());
    let d = space.encoding_dim();
    (0..k)
        .map(|j| {
            let mut data = vec![R::zero(); actions.len() * d];
            for (b, seq) in actions.iter().enumerate() {
                space.encode_into(&seq[j], &mut data[b * d..(b + 1) * d]);
            }
            Tensor::matrix(actions.len(), d, data)
        })
        .collect()
}

/// `z^_{t+1} = h(z_t, a_t)`, `z^_{t+k+1} = h(z^_{t+k}, a_{t+k})`; returns
/// the `K` predictions in time order.
pub fn forward_unroll<R: Real>(
    tape: &mut Tape<R>,
    z_t: Var,
    actions: &[Var],
    dm: &dyn LatentTransition<R>,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(actions.len());
    let mut z = z_t;
    for &a in actions {
        z = dm.step(tape, z, a)?;
        out.push(z);
    }
    Ok(out)
}

/// Rolls `z_end = z^_{t+K}` back through `b` using `actions` (given in
/// forward order `a_t..a_{t+K-1}`) from last to first; returns `z'_t`.
pub fn backward_unroll<R: Real>(
    tape: &mut Tape<R>,
    z_end: Var,
    actions: &[Var],
    bdm: &dyn LatentTransition<R>,
) -> Result<Var> {
    let mut z = z_end;
    for &a in actions.iter().rev() {
        z = bdm.step(tape, z, a)?;
    }
    Ok(z)
}

/// `sum_k mean_batch d(z^_{t+k}, z~_{t+k})` in projection space.
///
/// `targets[k-1]` holds the momentum-encoder latents of `o_{t+k}`.
pub fn prediction_loss<R: Real>(
    tape: &mut Tape<R>,
    heads: &BoundHeads,
    z_t: Var,
    actions: &[Var],
    targets: &[Var],
    dm: &dyn LatentTransition<R>,
) -> Result<Var> {
    if actions.len() != targets.len() {
        return Err(TensorError::Contract(format!(
            "{} actions for {} prediction targets",
            actions.len(),
            targets.len()
        )));
    }
    let predicted = forward_unroll(tape, z_t, actions, dm)?;
    sum_of_mean_distances(tape, heads, &predicted, targets)
}

/// Backward-model prediction along a real segment, the mirror of
/// [`prediction_loss`]: start at the online latent of `o_{t+K}` and compare
/// every backward step with the momentum latents `targets[j]` of `o_{t+j}`.
pub fn backward_prediction_loss<R: Real>(
    tape: &mut Tape<R>,
    heads: &BoundHeads,
    z_end: Var,
    actions: &[Var],
    targets: &[Var],
    bdm: &dyn LatentTransition<R>,
) -> Result<Var> {
    if actions.len() != targets.len() {
        return Err(TensorError::Contract("backward targets must match actions".into()));
    }
    let mut predicted = vec![z_end; actions.len()];
    let mut z = z_end;
    for j in (0..actions.len()).rev() {
        z = bdm.step(tape, z, actions[j])?;
        predicted[j] = z;
    }
    sum_of_mean_distances(tape, heads, &predicted, targets)
}

fn sum_of_mean_distances<R: Real>(
    tape: &mut Tape<R>,
    heads: &BoundHeads,
    predicted: &[Var],
    targets: &[Var],
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (&p, &t) in predicted.iter().zip(targets) {
        let d = distance_projection(tape, heads, p, t)?;
        let m = tape.mean(d);
        total = Some(match total {
            None => m,
            Some(acc) => tape.add(acc, m)?,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => tape.scalar(R::zero()),
    })
}

/// `(1/(B M)) sum_b sum_m d_M(z'^{(b,m)}_t, z^{(b)}_t)`.
///
/// `z_t` (`B x d_z`) is the tracked online latent, `reference` the latent
/// the metric compares against (momentum latent for the projection metric,
/// `z_t` itself for the latent metric). `actions` come from
/// [`encode_virtual_actions`] and are bound on the tape; `m` is the number
/// of sequences per start state. Pass the frozen forward model as `dm` to
/// keep this loss from updating it.
#[allow(clippy::too_many_arguments)]
pub fn cycle_loss<R: Real>(
    tape: &mut Tape<R>,
    heads: &BoundHeads,
    metric: Metric,
    z_t: Var,
    reference: Var,
    actions: &[Var],
    m: usize,
    dm: &dyn LatentTransition<R>,
    bdm: &dyn LatentTransition<R>,
) -> Result<Var> {
    let z_rep = tape.repeat_rows(z_t, m)?;
    let ref_rep = tape.repeat_rows(reference, m)?;
    let forward = forward_unroll(tape, z_rep, actions, dm)?;
    let z_end = forward.last().copied().unwrap_or(z_rep);
    let z_back = backward_unroll(tape, z_end, actions, bdm)?;
    let d = metric.distance(tape, heads, z_back, ref_rep)?;
    Ok(tape.mean(d))
}

/// `L_rl + lambda_pred L_pred + lambda_cyc L_cyc`. Absent terms and terms
/// with a zero weight are left out of the sum entirely.
pub fn total_loss<R: Real>(
    tape: &mut Tape<R>,
    rl: Var,
    pred: Option<Var>,
    cyc: Option<Var>,
    cfg: &AuxConfig,
    step: u64,
) -> Result<(Var, LossBreakdown)> {
    let mut total = rl;
    let value = |tape: &Tape<R>, v: Option<Var>| -> Result<f64> {
        v.map_or(Ok(0.0), |v| tape.scalar_value(v).map(|x| x.as_f64()))
    };
    for (term, weight) in [(pred, cfg.lambda_pred), (cyc, cfg.lambda_cyc)] {
        if let Some(t) = term.filter(|_| weight != 0.0) {
            let weighted = tape.scale(t, R::of(weight));
            total = tape.add(total, weighted)?;
        }
    }
    let breakdown = LossBreakdown {
        rl: value(tape, Some(rl))?,
        pred: value(tape, pred)?,
        cyc: value(tape, cyc)?,
        total: value(tape, Some(total))?,
        step,
    };
    Ok((total, breakdown))
}

/// Draws one fresh action set per start state.
pub fn sample_action_sets<G: Rng>(
    space: ActionSpace,
    batch: usize,
    m: usize,
    k: usize,
    rng: &mut G,
) -> Vec<VirtualActionSet> {
    (0..batch)
        .map(|_| sample_virtual_actions(space, m, k, rng.gen()))
        .collect()
}
