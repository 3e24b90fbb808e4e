//! Environments, trajectories and rollouts.

mod config;
mod gridworld;
mod point_mass;
mod rollout;
mod tabular;
mod trajectory;
mod wrappers;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub use config::{EnvKindSpec, EnvSpec, GridworldSpec, PointMassSpec, WrapperSpec};
pub use gridworld::{make_gridworld, Cell, GridAction, GridLayout, Gridworld};
pub use point_mass::{Bounds, PointMassEnv, PointState};
pub use rollout::{rollout, rollout_batch};
pub use tabular::{TabularMdp, TabularView};
pub use trajectory::Trajectory;
pub use wrappers::{
    sample_dynamics_variant, DynamicsVariant, Perturbation, TrembleWrapper,
};

/// An environment state: a cell index for tabular MDPs, or a continuous
/// point-mass state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Cell(usize),
    Point(PointState),
}

impl State {
    pub fn cell(&self) -> Option<usize> {
        match self {
            State::Cell(s) => Some(*s),
            State::Point(_) => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Cell(s) => write!(f, "{s}"),
            State::Point(p) => write!(
                f,
                "{};{};{};{}",
                p.position[0], p.position[1], p.velocity[0], p.velocity[1]
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous([f64; 2]),
}

impl Action {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(u) => write!(f, "{};{}", u[0], u[1]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^dim`.
    Continuous(usize),
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => *n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub next: State,
    pub done: bool,
}

/// A finite-horizon environment. Implementations are immutable; all
/// randomness comes from the generator passed in, so rollouts can run
/// concurrently.
pub trait Environment: Send + Sync + fmt::Debug {
    fn action_space(&self) -> ActionSpace;
    fn horizon(&self) -> usize;
    /// Number of states for tabular environments.
    fn num_states(&self) -> Option<usize> {
        None
    }
    fn feature_dim(&self) -> usize;
    fn features(&self, state: &State) -> Vec<f64>;
    fn reset(&self, rng: &mut Rng) -> State;
    fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Step;
    /// Ground-truth reward `r(s, a)`.
    fn reward(&self, state: &State, action: &Action) -> f64;
    /// Action actually executed when the agent picks `action`. Wrappers use
    /// `rng`, a stream reserved for them.
    fn perturb_action(&self, action: &Action, _rng: &mut Rng) -> Action {
        *action
    }
    /// Seed mixed into the wrapper stream of a rollout.
    fn wrapper_seed(&self) -> u64 {
        0
    }
    /// Exact tabular description, when one exists.
    fn tabular(&self) -> Option<TabularView<'_>> {
        None
    }
}

/// The concrete base environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvModel {
    Tabular(TabularMdp),
    PointMass(PointMassEnv),
}

impl EnvModel {
    fn inner(&self) -> &dyn Environment {
        match self {
            EnvModel::Tabular(m) => m,
            EnvModel::PointMass(p) => p,
        }
    }
}

impl Environment for EnvModel {
    fn action_space(&self) -> ActionSpace {
        self.inner().action_space()
    }
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn num_states(&self) -> Option<usize> {
        self.inner().num_states()
    }
    fn feature_dim(&self) -> usize {
        self.inner().feature_dim()
    }
    fn features(&self, state: &State) -> Vec<f64> {
        self.inner().features(state)
    }
    fn reset(&self, rng: &mut Rng) -> State {
        self.inner().reset(rng)
    }
    fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Step {
        self.inner().step(state, action, rng)
    }
    fn reward(&self, state: &State, action: &Action) -> f64 {
        self.inner().reward(state, action)
    }
    fn tabular(&self) -> Option<TabularView<'_>> {
        self.inner().tabular()
    }
}
