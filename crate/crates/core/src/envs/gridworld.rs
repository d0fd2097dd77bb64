use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvError, Environment, StepOutcome};
use crate::rng;

/// up, down, left, right, noop.
pub const GRID_ACTIONS: usize = 5;
const MOVES: [(isize, isize); GRID_ACTIONS] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub size: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub walls: BTreeSet<(usize, usize)>,
    pub step_penalty: f64,
    pub goal_reward: f64,
    pub max_steps: usize,
    /// Draw the start cell uniformly from free cells on every reset.
    pub randomize_start: bool,
}

impl Default for GridConfig {
    /// 8x8 with a barrier across row 3 and a shorter one across row 5.
    fn default() -> Self {
        let mut walls: BTreeSet<_> = (1..=6).map(|c| (3, c)).collect();
        walls.extend((2..=5).map(|c| (5, c)));
        Self {
            size: 8,
            start: (0, 0),
            goal: (7, 7),
            walls,
            step_penalty: -0.01,
            goal_reward: 1.0,
            max_steps: 100,
            randomize_start: false,
        }
    }
}

impl GridConfig {
    pub fn open(size: usize, start: (usize, usize), goal: (usize, usize)) -> Self {
        Self {
            size,
            start,
            goal,
            walls: BTreeSet::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let inside = |(r, c): (usize, usize)| r < self.size && c < self.size;
        if self.size < 2 {
            return Err(EnvError::Config("grid size must be at least 2".into()));
        }
        if !inside(self.start) || !inside(self.goal) || self.walls.iter().any(|&w| !inside(w)) {
            return Err(EnvError::Config("cell outside the grid".into()));
        }
        if self.walls.contains(&self.start) || self.walls.contains(&self.goal) {
            return Err(EnvError::Config("start or goal on a wall".into()));
        }
        if self.start == self.goal {
            return Err(EnvError::Config("start equals goal".into()));
        }
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Cell reached from `cell` with action `a`; walls and edges block.
    pub fn next_cell(&self, cell: (usize, usize), a: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[a];
        let r = cell.0 as isize + dr;
        let c = cell.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.size as isize || c >= self.size as isize {
            return cell;
        }
        let next = (r as usize, c as usize);
        if self.walls.contains(&next) {
            cell
        } else {
            next
        }
    }
}

/// N x N grid observed as three flattened one-hot planes (agent, goal,
/// walls).
#[derive(Clone, Debug)]
pub struct GridWorld {
    config: GridConfig,
    agent: (usize, usize),
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self {
            agent: config.start,
            config,
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    fn observe(&self) -> Vec<f64> {
        let n = self.config.size;
        let mut obs = vec![0.0; 3 * n * n];
        obs[self.agent.0 * n + self.agent.1] = 1.0;
        obs[n * n + self.config.goal.0 * n + self.config.goal.1] = 1.0;
        for &(r, c) in &self.config.walls {
            obs[2 * n * n + r * n + c] = 1.0;
        }
        obs
    }

    /// `#` wall, `A` agent, `G` goal, `.` empty; one line per row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in 0..self.config.size {
            for c in 0..self.config.size {
                let ch = if (r, c) == self.agent {
                    'A'
                } else if (r, c) == self.config.goal {
                    'G'
                } else if self.config.walls.contains(&(r, c)) {
                    '#'
                } else {
                    '.'
                };
                out.push(ch);
            }
            let _ = writeln!(out);
        }
        out
    }
}

impl Environment for GridWorld {
    fn observation_dim(&self) -> usize {
        3 * self.config.size * self.config.size
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(GRID_ACTIONS)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.steps = 0;
        self.done = false;
        self.agent = if self.config.randomize_start {
            let free: Vec<_> = (0..self.config.size)
                .flat_map(|r| (0..self.config.size).map(move |c| (r, c)))
                .filter(|cell| !self.config.walls.contains(cell) && *cell != self.config.goal)
                .collect();
            let mut g = rng::stream(seed, "gridworld.start");
            free[g.gen_range(0..free.len())]
        } else {
            self.config.start
        };
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        let a = match action {
            Action::Discrete(a) if *a < GRID_ACTIONS => *a,
            _ => {
                return Err(EnvError::InvalidAction {
                    action: action.clone(),
                    space: self.action_space(),
                })
            }
        };
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        self.agent = self.config.next_cell(self.agent, a);
        self.steps += 1;
        let terminal = self.agent == self.config.goal;
        let truncated = !terminal && self.steps >= self.config.max_steps;
        self.done = terminal || truncated;
        let reward = if terminal {
            self.config.goal_reward
        } else {
            self.config.step_penalty
        };
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimalReturn {
    Reachable { steps: usize, value: f64 },
    Unreachable,
}

impl OptimalReturn {
    pub fn value(&self) -> Option<f64> {
        match self {
            OptimalReturn::Reachable { value, .. } => Some(*value),
            OptimalReturn::Unreachable => None,
        }
    }
}

/// Best undiscounted return from the configured start, by breadth-first
/// search over cells. Paths longer than the step limit count as
/// unreachable.
pub fn optimal_return_oracle(config: &GridConfig) -> OptimalReturn {
    let n = config.size;
    let mut dist = vec![usize::MAX; n * n];
    let idx = |(r, c): (usize, usize)| r * n + c;
    let mut queue = VecDeque::from([config.start]);
    dist[idx(config.start)] = 0;
    while let Some(cell) = queue.pop_front() {
        if cell == config.goal {
            break;
        }
        for a in 0..GRID_ACTIONS {
            let next = config.next_cell(cell, a);
            if dist[idx(next)] == usize::MAX {
                dist[idx(next)] = dist[idx(cell)] + 1;
                queue.push_back(next);
            }
        }
    }
    match dist[idx(config.goal)] {
        d if d == usize::MAX || d > config.max_steps => OptimalReturn::Unreachable,
        d => OptimalReturn::Reachable {
            steps: d,
            value: config.goal_reward + (d - 1) as f64 * config.step_penalty,
        },
    }
}
