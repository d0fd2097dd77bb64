use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Discrete `{0..n-1}` or the box `[-1, 1]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the action encoding fed to the dynamics models.
    pub fn encoding_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionSpace::Discrete(n), Action::Discrete(a)) => a < n,
            (ActionSpace::Continuous(d), Action::Continuous(v)) => {
                v.len() == *d && v.iter().all(|x| (-1.0..=1.0).contains(x))
            }
            _ => false,
        }
    }

    /// Uniform over the space.
    pub fn sample<G: Rng>(&self, rng: &mut G) -> Action {
        match *self {
            ActionSpace::Discrete(n) => Action::Discrete(rng.gen_range(0..n)),
            ActionSpace::Continuous(d) => Action::Continuous((0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect()),
        }
    }

    /// One-hot for discrete actions, the raw vector for continuous ones.
    pub fn encode_into<R: Real>(&self, action: &Action, out: &mut [R]) {
        debug_assert_eq!(out.len(), self.encoding_dim());
        match action {
            Action::Discrete(a) => {
                out.iter_mut().for_each(|v| *v = R::zero());
                out[*a] = R::one();
            }
            Action::Continuous(v) => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = R::of(x);
                }
            }
        }
    }

    pub fn encode<R: Real>(&self, action: &Action) -> Vec<R> {
        let mut out = vec![R::zero(); self.encoding_dim()];
        self.encode_into(action, &mut out);
        out
    }
}
