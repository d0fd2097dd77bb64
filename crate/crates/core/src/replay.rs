//! Episode-aware ring buffer.
//!
//! Transitions carry their episode id and step index, so window validity is
//! decided from the stored data alone: a window is usable only when every
//! element comes from one episode with contiguous step indices, nothing but
//! its last element ends the episode, and the observation following the
//! window is known (either the next stored transition of the same episode or
//! the saved final observation of a finished episode).

use rand::Rng;
use thiserror::Error;

use crate::envs::Action;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("no valid window of {needed} transitions in a buffer of {size}")]
    NotEnoughData { needed: usize, size: usize },
    #[error("replay capacity must be at least 1")]
    ZeroCapacity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
    pub episode: u64,
    pub step: u64,
    /// Observation after the action; kept only for the last transition of
    /// an episode; otherwise it is the next transition's observation.
    pub final_observation: Option<Vec<f64>>,
}

impl Transition {
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// `K + 1` observations with the `K` actions and rewards between them.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSegment {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// The last transition of the window was terminal.
    pub terminal: bool,
    pub episode: u64,
    pub start_step: u64,
}

impl TransitionSegment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// One n-step training tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct NStepSample {
    pub observation: Vec<f64>,
    pub action: Action,
    /// `sum_i gamma^i r_{t+i}` over the (possibly truncated) window.
    pub discounted_return: f64,
    pub next_observation: Vec<f64>,
    /// A terminal transition lies inside the window; no bootstrapping.
    pub terminal: bool,
    /// Number of rewards summed (`<= n`).
    pub steps: usize,
}

impl NStepSample {
    /// Multiplier on the bootstrapped value: `gamma^steps`, or 0 after a
    /// terminal.
    pub fn bootstrap_discount(&self, gamma: f64) -> f64 {
        if self.terminal {
            0.0
        } else {
            gamma.powi(self.steps as i32)
        }
    }
}

const REJECTION_TRIES: usize = 64;

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Physical index of the oldest element once the ring is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.head] = transition;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transition by logical index, 0 being the oldest.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + i) % self.items.len()])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).map(move |i| self.get(i).expect("in range"))
    }

    /// `o_{i+len}`, the observation after the window `i..i+len`, provided
    /// that window is in-episode.
    fn observation_after(&self, i: usize, len: usize) -> Option<&[f64]> {
        let last = self.get(i + len - 1)?;
        if last.ends_episode() {
            return last.final_observation.as_deref();
        }
        let next = self.get(i + len)?;
        (next.episode == last.episode && next.step == last.step + 1).then_some(next.observation.as_slice())
    }

    /// Window `i..i+len` stays in one episode with contiguous steps and
    /// only its last element may end the episode.
    fn window_is_contiguous(&self, i: usize, len: usize) -> bool {
        let Some(first) = self.get(i) else { return false };
        for j in 1..len {
            let (prev, cur) = match (self.get(i + j - 1), self.get(i + j)) {
                (Some(p), Some(c)) => (p, c),
                _ => return false,
            };
            if prev.ends_episode() || cur.episode != first.episode || cur.step != prev.step + 1 {
                return false;
            }
        }
        true
    }

    /// The segment starting at logical index `i`, if valid.
    pub fn segment_at(&self, i: usize, k: usize) -> Option<TransitionSegment> {
        let first = self.get(i)?;
        if k == 0 {
            return Some(TransitionSegment {
                observations: vec![first.observation.clone()],
                actions: Vec::new(),
                rewards: Vec::new(),
                terminal: false,
                episode: first.episode,
                start_step: first.step,
            });
        }
        if !self.window_is_contiguous(i, k) {
            return None;
        }
        let after = self.observation_after(i, k)?;
        let mut observations = Vec::with_capacity(k + 1);
        let mut actions = Vec::with_capacity(k);
        let mut rewards = Vec::with_capacity(k);
        for j in 0..k {
            let t = self.get(i + j).expect("checked");
            observations.push(t.observation.clone());
            actions.push(t.action.clone());
            rewards.push(t.reward);
        }
        observations.push(after.to_vec());
        Some(TransitionSegment {
            observations,
            actions,
            rewards,
            terminal: self.get(i + k - 1).expect("checked").terminal,
            episode: first.episode,
            start_step: first.step,
        })
    }

    /// The n-step tuple starting at logical index `i`, if valid. The window
    /// is cut short at the end of the episode.
    pub fn nstep_at(&self, i: usize, n: usize, gamma: f64) -> Option<NStepSample> {
        let first = self.get(i)?;
        let mut len = 0;
        let mut ret = 0.0;
        let mut discount = 1.0;
        while len < n.max(1) {
            let t = self.get(i + len)?;
            if len > 0 {
                let prev = self.get(i + len - 1).expect("visited");
                if t.episode != first.episode || t.step != prev.step + 1 {
                    return None;
                }
            }
            ret += discount * t.reward;
            discount *= gamma;
            len += 1;
            if t.ends_episode() {
                break;
            }
        }
        let last = self.get(i + len - 1).expect("visited");
        let next = self.observation_after(i, len)?;
        Some(NStepSample {
            observation: first.observation.clone(),
            action: first.action.clone(),
            discounted_return: ret,
            next_observation: next.to_vec(),
            terminal: last.terminal,
            steps: len,
        })
    }

    /// Draws `batch` independent uniform picks from the valid starts, by
    /// rejection first and from an explicit list if rejection keeps failing.
    fn sample_with<T, G: Rng>(
        &self,
        batch: usize,
        needed: usize,
        rng: &mut G,
        at: impl Fn(usize) -> Option<T>,
    ) -> Result<Vec<T>, ReplayError> {
        let err = ReplayError::NotEnoughData {
            needed,
            size: self.len(),
        };
        if self.is_empty() {
            return Err(err);
        }
        let mut out = Vec::with_capacity(batch);
        let mut valid: Option<Vec<usize>> = None;
        'items: for _ in 0..batch {
            if valid.is_none() {
                for _ in 0..REJECTION_TRIES {
                    if let Some(item) = at(rng.gen_range(0..self.len())) {
                        out.push(item);
                        continue 'items;
                    }
                }
                valid = Some((0..self.len()).filter(|&i| at(i).is_some()).collect());
            }
            let starts = valid.as_ref().expect("filled above");
            if starts.is_empty() {
                return Err(err);
            }
            let i = starts[rng.gen_range(0..starts.len())];
            out.push(at(i).expect("valid start"));
        }
        Ok(out)
    }

    pub fn sample_segments<G: Rng>(
        &self,
        batch: usize,
        k: usize,
        rng: &mut G,
    ) -> Result<Vec<TransitionSegment>, ReplayError> {
        self.sample_with(batch, k + 1, rng, |i| self.segment_at(i, k))
    }

    pub fn sample_rl_batch<G: Rng>(
        &self,
        batch: usize,
        n_step: usize,
        gamma: f64,
        rng: &mut G,
    ) -> Result<Vec<NStepSample>, ReplayError> {
        self.sample_with(batch, n_step, rng, |i| self.nstep_at(i, n_step, gamma))
    }
}
