use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvError, Environment, StepOutcome};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    pub dt: f64,
    pub damping: f64,
    pub max_speed: f64,
    pub horizon: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            damping: 0.1,
            max_speed: 1.0,
            horizon: 200,
        }
    }
}

/// Damped 2-D point mass in `[-1, 1]^2` pushed toward the origin.
///
/// `v' = (1 - damping) v + dt a`, `p' = clip(p + dt v')`; hitting a wall
/// zeroes that velocity component. Reward is `-|p'|`. Observation is
/// `(p, v)`.
#[derive(Clone, Debug)]
pub struct PointMass {
    config: PointMassConfig,
    position: [f64; 2],
    velocity: [f64; 2],
    steps: usize,
}

impl PointMass {
    pub fn new(config: PointMassConfig) -> Result<Self, EnvError> {
        if !(config.dt > 0.0)
            || !(0.0..1.0).contains(&config.damping)
            || !(config.max_speed > 0.0)
            || config.horizon == 0
        {
            return Err(EnvError::Config(format!("{config:?}")));
        }
        Ok(Self {
            config,
            position: [0.0; 2],
            velocity: [0.0; 2],
            steps: 0,
        })
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.config
    }

    pub fn state(&self) -> ([f64; 2], [f64; 2]) {
        (self.position, self.velocity)
    }

    /// Places the mass at an explicit state.
    pub fn set_state(&mut self, position: [f64; 2], velocity: [f64; 2]) {
        self.position = position;
        self.velocity = velocity;
        self.steps = 0;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }
}

impl Environment for PointMass {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut g = rng::stream(seed, "pointmass.reset");
        self.position = [g.gen_range(-1.0..=1.0), g.gen_range(-1.0..=1.0)];
        self.velocity = [0.0; 2];
        self.steps = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if !self.action_space().contains(action) {
            return Err(EnvError::InvalidAction {
                action: action.clone(),
                space: self.action_space(),
            });
        }
        if self.steps >= self.config.horizon {
            return Err(EnvError::EpisodeOver);
        }
        let Action::Continuous(a) = action else { unreachable!() };
        let c = &self.config;
        for i in 0..2 {
            let v = ((1.0 - c.damping) * self.velocity[i] + c.dt * a[i]).clamp(-c.max_speed, c.max_speed);
            let p = self.position[i] + c.dt * v;
            if p.abs() > 1.0 {
                self.position[i] = p.clamp(-1.0, 1.0);
                self.velocity[i] = 0.0;
            } else {
                self.position[i] = p;
                self.velocity[i] = v;
            }
        }
        self.steps += 1;
        let reward = -(self.position[0].powi(2) + self.position[1].powi(2)).sqrt();
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminal: false,
            truncated: self.steps >= self.config.horizon,
        })
    }
}
