use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, Environment, GridLayout, State, Step};
use crate::rng::{sample_categorical, Rng};
use crate::{Error, Result};

const ROW_TOL: f64 = 1e-9;

/// A finite-horizon tabular MDP with state-action rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `transition[(s * A + a) * S + s']`.
    transition: Vec<f64>,
    /// `reward[s * A + a]`.
    reward: Vec<f64>,
    horizon: usize,
    initial_dist: Vec<f64>,
    layout: Option<GridLayout>,
}

/// Exact view of a tabular environment as seen by a policy: the underlying
/// MDP plus the probability that the chosen action is replaced by a
/// uniformly random one.
#[derive(Clone, Copy, Debug)]
pub struct TabularView<'a> {
    pub mdp: &'a TabularMdp,
    pub tremble: f64,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        horizon: usize,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::config("num_states/num_actions", "must be positive"));
        }
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::config("transition", "wrong tensor size"));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::config("reward", "wrong table size"));
        }
        if initial_dist.len() != num_states {
            return Err(Error::config("initial_dist", "wrong length"));
        }
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            reward,
            horizon,
            initial_dist,
            layout: None,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub(crate) fn with_layout(mut self, layout: GridLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if row.iter().any(|p| !(0.0..=1.0 + ROW_TOL).contains(p)) {
                    return Err(Error::config("transition", format!("row ({s}, {a}) has an invalid entry")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL {
                    return Err(Error::config("transition", format!("row ({s}, {a}) sums to {sum}")));
                }
            }
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL || self.initial_dist.iter().any(|p| *p < 0.0) {
            return Err(Error::config("initial_dist", format!("not a distribution (sum {sum})")));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward table".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn set_horizon(&mut self, horizon: usize) -> Result<()> {
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        self.horizon = horizon;
        Ok(())
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Builds a copy with a replaced transition tensor (validated).
    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.transition = transition;
        out.validate()?;
        Ok(out)
    }

    /// The unique successor of `(s, a)` when the row is a point mass.
    pub fn deterministic_next(&self, s: usize, a: usize) -> Option<usize> {
        let row = self.row(s, a);
        let idx = row.iter().position(|&p| p > 0.0)?;
        (row[idx] == 1.0).then_some(idx)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.num_states)
            .all(|s| (0..self.num_actions).all(|a| self.deterministic_next(s, a).is_some()))
    }

    /// The same MDP with the timestep folded into the state: index
    /// `t * S + s` for `t < H`, plus a final zero-reward sink entered after
    /// the last step. Its optimal values are stationary, so they form a
    /// state-only potential.
    pub fn time_augmented(&self) -> Result<Self> {
        let (ns, na, h) = (self.num_states, self.num_actions, self.horizon);
        let n = ns * h + 1;
        let sink = n - 1;
        let mut transition = vec![0.0; n * na * n];
        let mut reward = vec![0.0; n * na];
        for t in 0..h {
            for s in 0..ns {
                for a in 0..na {
                    let row = ((t * ns + s) * na + a) * n;
                    if t + 1 < h {
                        for (s2, p) in self.row(s, a).iter().enumerate() {
                            transition[row + (t + 1) * ns + s2] = *p;
                        }
                    } else {
                        transition[row + sink] = 1.0;
                    }
                    reward[(t * ns + s) * na + a] = self.r(s, a);
                }
            }
        }
        for a in 0..na {
            transition[(sink * na + a) * n + sink] = 1.0;
        }
        let mut initial = vec![0.0; n];
        initial[..ns].copy_from_slice(&self.initial_dist);
        TabularMdp::new(n, na, transition, reward, h, initial)
    }

    /// Expected value of `values` at the successor of `(s, a)`.
    pub fn expected_next(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        self.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

impl Environment for TabularMdp {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.num_actions)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_states(&self) -> Option<usize> {
        Some(self.num_states)
    }

    fn feature_dim(&self) -> usize {
        self.num_states
    }

    fn features(&self, state: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.num_states];
        if let Some(s) = state.cell() {
            x[s] = 1.0;
        }
        x
    }

    fn reset(&self, rng: &mut Rng) -> State {
        State::Cell(sample_categorical(&self.initial_dist, rng))
    }

    fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Step {
        let s = state.cell().expect("tabular state");
        let a = action.discrete().expect("discrete action");
        let next = match self.deterministic_next(s, a) {
            Some(n) => n,
            None => sample_categorical(self.row(s, a), rng),
        };
        Step {
            next: State::Cell(next),
            done: false,
        }
    }

    fn reward(&self, state: &State, action: &Action) -> f64 {
        self.r(
            state.cell().expect("tabular state"),
            action.discrete().expect("discrete action"),
        )
    }

    fn tabular(&self) -> Option<TabularView<'_>> {
        Some(TabularView { mdp: self, tremble: 0.0 })
    }
}
