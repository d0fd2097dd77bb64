use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{QConfig, SacConfig};
use crate::envs::{ActionSpace, Environment, GridConfig, GridWorld, PointMass, PointMassConfig, GRID_ACTIONS};
use crate::error::{Error, Result};
use crate::nets::NetSizes;
use crate::virtual_loop::AuxConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Gridworld,
    Pointmass,
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gridworld" => Ok(Self::Gridworld),
            "pointmass" => Ok(Self::Pointmass),
            other => Err(format!("unknown env '{other}' (expected gridworld|pointmass)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Q,
    Sac,
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "q" => Ok(Self::Q),
            "sac" => Ok(Self::Sac),
            other => Err(format!("unknown agent '{other}' (expected q|sac)")),
        }
    }
}

/// Numeric precision of a run, chosen through `VLRL_PRECISION`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub const ENV_VAR: &'static str = "VLRL_PRECISION";

    /// Reads `VLRL_PRECISION`; unset means 64-bit.
    pub fn from_env() -> Result<Self> {
        match std::env::var(Self::ENV_VAR) {
            Err(_) => Ok(Self::F64),
            Ok(v) => match v.as_str() {
                "f32" => Ok(Self::F32),
                "f64" => Ok(Self::F64),
                other => Err(Error::Config(format!("{}={other} (expected f32|f64)", Self::ENV_VAR))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub updates_per_step: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub aux: AuxConfig,
    /// Train the backward model on real segments (the "baseline+bdm"
    /// variant); its loss joins the prediction term.
    pub backward_prediction: bool,
    pub learning_rate: f64,
    pub tau: f64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Loss records are written every this many environment steps.
    pub log_every: u64,
    pub replay_capacity: usize,
    pub nets: NetSizes,
    pub q: QConfig,
    pub sac: SacConfig,
    pub grid: GridConfig,
    pub pointmass: PointMassConfig,
}

impl RunConfig {
    pub fn gridworld() -> Self {
        Self {
            env: EnvKind::Gridworld,
            agent: AgentKind::Q,
            total_steps: 50_000,
            warmup_steps: 1_000,
            updates_per_step: 1,
            batch_size: 64,
            seed: 0,
            aux: AuxConfig::discrete(GRID_ACTIONS),
            backward_prediction: false,
            learning_rate: 3e-4,
            tau: 0.99,
            eval_every: 2_500,
            eval_episodes: 20,
            log_every: 100,
            replay_capacity: 100_000,
            nets: NetSizes::default(),
            q: QConfig::default(),
            sac: SacConfig::default(),
            grid: GridConfig::default(),
            pointmass: PointMassConfig::default(),
        }
    }

    pub fn pointmass() -> Self {
        Self {
            env: EnvKind::Pointmass,
            agent: AgentKind::Sac,
            aux: AuxConfig::continuous(),
            ..Self::gridworld()
        }
    }

    /// Narrow networks and small batches: 16-wide latents, one 32-unit
    /// encoder layer, 32-unit heads, batch 16. A 50k-step run takes a few
    /// minutes on one core.
    pub fn compact(mut self) -> Self {
        self.nets = NetSizes {
            latent_dim: 16,
            projection_dim: 8,
            encoder_hidden: vec![32],
            head_hidden: 32,
        };
        self.batch_size = 16;
        self
    }

    pub fn for_env(env: EnvKind) -> Self {
        match env {
            EnvKind::Gridworld => Self::gridworld(),
            EnvKind::Pointmass => Self::pointmass(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        match (self.env, self.agent) {
            (EnvKind::Gridworld, AgentKind::Q) | (EnvKind::Pointmass, AgentKind::Sac) => {}
            _ => return bad("env/agent pairing must be gridworld+q or pointmass+sac"),
        }
        if self.total_steps == 0 || self.warmup_steps == 0 || self.warmup_steps > self.total_steps {
            return bad("need 0 < warmup_steps <= total_steps");
        }
        if self.updates_per_step == 0 || self.batch_size == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("updates_per_step, batch_size, eval_every and eval_episodes must be positive");
        }
        if self.log_every == 0 || self.replay_capacity == 0 {
            return bad("log_every and replay_capacity must be positive");
        }
        if self.aux.m == 0 {
            return bad("M must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.tau) {
            return bad("learning rate must be positive and tau in [0, 1]");
        }
        if self.q.n_step == 0 || !(0.0..=1.0).contains(&self.q.gamma) || !(0.0..=1.0).contains(&self.sac.gamma) {
            return bad("n_step must be positive and gamma in [0, 1]");
        }
        if self.nets.latent_dim == 0 || self.nets.projection_dim == 0 || self.nets.head_hidden == 0 {
            return bad("network widths must be positive");
        }
        self.make_env()?;
        Ok(())
    }

    pub fn make_env(&self) -> Result<Box<dyn Environment>> {
        Ok(match self.env {
            EnvKind::Gridworld => Box::new(GridWorld::new(self.grid.clone())?),
            EnvKind::Pointmass => Box::new(PointMass::new(self.pointmass.clone())?),
        })
    }

    pub fn action_space(&self) -> ActionSpace {
        match self.env {
            EnvKind::Gridworld => ActionSpace::Discrete(GRID_ACTIONS),
            EnvKind::Pointmass => ActionSpace::Continuous(2),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self.agent {
            AgentKind::Q => self.q.gamma,
            AgentKind::Sac => self.sac.gamma,
        }
    }

    /// Bootstrapping horizon of the RL batch.
    pub fn n_step(&self) -> usize {
        match self.agent {
            AgentKind::Q => self.q.n_step,
            AgentKind::Sac => 1,
        }
    }
}
