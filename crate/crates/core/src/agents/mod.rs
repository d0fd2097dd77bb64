//! Policy heads that supply the reinforcement-learning term of the
//! objective: double Q-learning for discrete control and a soft
//! actor-critic for continuous control. Both read the shared latent.

mod q;
mod sac;

pub use q::{select_action, BoundQ, QConfig, QHead};
pub use sac::{tanh_gaussian_log_prob, BoundSac, SacConfig, SacHead, SacLosses};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

/// Values of the three objective terms and their weighted sum at one
/// update step.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rl: f64,
    pub pred: f64,
    pub cyc: f64,
    pub total: f64,
    pub step: u64,
}

impl LossBreakdown {
    /// Relative deviation of `total` from `rl + lp * pred + lc * cyc`.
    pub fn identity_error(&self, lambda_pred: f64, lambda_cyc: f64) -> f64 {
        let expected = self.rl + lambda_pred * self.pred + lambda_cyc * self.cyc;
        (self.total - expected).abs() / expected.abs().max(f64::MIN_POSITIVE)
    }
}
