//! Reward sources a rollout can be scored against.

use std::fmt;
use std::sync::Arc;

use crate::env::{Environment, State, Trajectory};
use crate::shaping::{shape, Potential};
use crate::Result;

/// A reward that depends on the state only, such as a learned
/// discriminator.
pub trait StateReward: Send + Sync + fmt::Debug {
    fn state_reward(&self, env: &dyn Environment, state: &State) -> f64;
}

#[derive(Clone, Debug)]
pub enum RewardSource {
    /// The environment's own `r(s, a)`.
    GroundTruth,
    Learned(Arc<dyn StateReward>),
    /// `base` plus the potential-based term, with the terminal step wrapped
    /// back to the episode's first state.
    Shaped {
        base: Box<RewardSource>,
        potential: Arc<Potential>,
    },
}

impl RewardSource {
    pub fn learned(model: impl StateReward + 'static) -> Self {
        RewardSource::Learned(Arc::new(model))
    }

    pub fn shaped(base: RewardSource, potential: Potential) -> Self {
        RewardSource::Shaped {
            base: Box::new(base),
            potential: Arc::new(potential),
        }
    }

    pub fn name(&self) -> String {
        match self {
            RewardSource::GroundTruth => "ground-truth".into(),
            RewardSource::Learned(_) => "learned".into(),
            RewardSource::Shaped { base, .. } => format!("shaped-{}", base.name()),
        }
    }

    /// The unshaped reward at the bottom of any shaping stack.
    pub fn unshaped(&self) -> &RewardSource {
        match self {
            RewardSource::Shaped { base, .. } => base.unshaped(),
            other => other,
        }
    }

    /// Per-step reward of this source along `traj`.
    pub fn rewards(&self, env: &dyn Environment, traj: &Trajectory) -> Result<Vec<f64>> {
        match self {
            RewardSource::GroundTruth => Ok(traj
                .states
                .iter()
                .zip(&traj.actions)
                .map(|(s, a)| env.reward(s, a))
                .collect()),
            RewardSource::Learned(model) => Ok(traj
                .states
                .iter()
                .map(|s| model.state_reward(env, s))
                .collect()),
            RewardSource::Shaped { base, potential } => {
                let base_rewards = base.rewards(env, traj)?;
                Ok(shape(&base_rewards, potential, env, traj))
            }
        }
    }
}
