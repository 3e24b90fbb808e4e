//! Moment-matching IRL with discriminator/policy ensembles, trajectory
//! buffers and random policy resets, and its composition with evolved
//! shaping.

mod buffer;
mod loss;
mod model;
mod train;

pub use buffer::{ResetSchedule, TrajectoryBuffer};
pub use loss::{discriminator_gradient, discriminator_loss, interpolated_points, Regularisation};
pub use model::{DiscriminatorEnsemble, RewardModel, RewardModelKind};
pub use train::{
    irl_step, run_evil, run_irl, write_diagnostics_csv, EvilOutcome, IrlConfig, IrlDiagnostic, IrlMember, IrlOutcome,
    IrlState,
};

use crate::env::{Action, ActionSpace, Environment, State};
use crate::reward::StateReward;
use crate::{Error, Result};

/// State-only view of the ground-truth reward: the mean over actions for
/// discrete environments, the zero action for continuous ones.
pub fn true_state_reward(env: &dyn Environment, state: &State) -> f64 {
    match env.action_space() {
        ActionSpace::Discrete(n) => {
            (0..n).map(|a| env.reward(state, &Action::Discrete(a))).sum::<f64>() / n as f64
        }
        ActionSpace::Continuous(_) => env.reward(state, &Action::Continuous([0.0; 2])),
    }
}

/// Pearson correlation between a recovered reward and the ground truth
/// over `states`.
pub fn reward_correlation(reward: &dyn StateReward, env: &dyn Environment, states: &[State]) -> Result<f64> {
    let distinct = states.iter().skip(1).any(|s| s != &states[0]);
    if states.len() < 2 || !distinct {
        return Err(Error::Degenerate("correlation needs at least two distinct states".into()));
    }
    let xs: Vec<f64> = states.iter().map(|s| reward.state_reward(env, s)).collect();
    let ys: Vec<f64> = states.iter().map(|s| true_state_reward(env, s)).collect();
    crate::stats::pearson(&xs, &ys)
}
