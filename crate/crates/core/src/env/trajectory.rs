use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Action, State};
use crate::Result;

/// One episode: `(s_1, a_1, r_1, ..., s_H, a_H, r_H)`.
///
/// `actions` holds the actions the environment executed; `intended` holds
/// what the policy chose (they differ only under action-perturbing
/// wrappers). `rewards[h]` is the reward source evaluated at step `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub intended: Vec<Action>,
    pub rewards: Vec<f64>,
    /// `true` at the step where the episode terminated early.
    pub done_mask: Vec<bool>,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            states: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
            intended: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            done_mask: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn terminated_early(&self) -> bool {
        self.done_mask.last().copied().unwrap_or(false)
    }

    /// Writes `step,state,action,reward` rows. Continuous states and actions
    /// are `;`-separated vectors.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "state", "action", "reward"])?;
        for h in 0..self.len() {
            w.write_record([
                h.to_string(),
                self.states[h].to_string(),
                self.actions[h].to_string(),
                self.rewards[h].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
