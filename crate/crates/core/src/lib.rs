//! Representation learning for reinforcement learning with cycle-consistent
//! virtual trajectories.
//!
//! A shared encoder feeds a policy head (double Q-learning or soft
//! actor-critic). Two auxiliary objectives shape the encoder: multi-step
//! latent prediction along real replay segments, and a cycle-consistency
//! loss over virtual trajectories built from sampled actions with a forward
//! and a backward latent dynamics model. Everything runs on the
//! reverse-mode autodiff core in [`tensor`].

pub mod agents;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nets;
pub mod replay;
pub mod rng;
pub mod tensor;
pub mod verify;
pub mod virtual_loop;

pub use error::{Error, Result};
