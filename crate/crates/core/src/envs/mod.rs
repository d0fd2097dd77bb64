//! Deterministic in-repo control tasks.

mod gridworld;
mod pointmass;
mod space;

pub use gridworld::{optimal_return_oracle, GridConfig, GridWorld, OptimalReturn, GRID_ACTIONS};
pub use pointmass::{PointMass, PointMassConfig};
pub use space::{Action, ActionSpace};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action:?} is outside the action space {space:?}")]
    InvalidAction { action: Action, space: ActionSpace },
    #[error("step called on a finished episode; call reset first")]
    EpisodeOver,
    #[error("invalid environment configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The task ended (no bootstrapping past this transition).
    pub terminal: bool,
    /// The episode hit its step limit without terminating.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError>;
}
