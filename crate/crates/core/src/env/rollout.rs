use super::{Environment, Trajectory};
use crate::policy::Policy;
use crate::reward::RewardSource;
use crate::rng::{derive_seed, seeded};
use crate::Result;

const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const WRAPPER_STREAM: u64 = 2;

/// Runs one episode of `policy` in `env` and fills the reward column from
/// `reward`. The trajectory is a pure function of the inputs and `seed`:
/// environment, agent and wrapper randomness use separate derived streams.
pub fn rollout(
    env: &dyn Environment,
    policy: &Policy,
    reward: &RewardSource,
    seed: u64,
) -> Result<Trajectory> {
    policy.check_compatible(env)?;
    let mut traj = rollout_unrewarded(env, policy, seed);
    traj.rewards = reward.rewards(env, &traj)?;
    Ok(traj)
}

pub(crate) fn rollout_unrewarded(env: &dyn Environment, policy: &Policy, seed: u64) -> Trajectory {
    let mut env_rng = seeded(seed, &[ENV_STREAM]);
    let mut agent_rng = seeded(seed, &[AGENT_STREAM]);
    let mut wrapper_rng = seeded(seed, &[WRAPPER_STREAM, env.wrapper_seed()]);
    let horizon = env.horizon();
    let mut traj = Trajectory::with_capacity(horizon);
    let mut state = env.reset(&mut env_rng);
    for _ in 0..horizon {
        let intended = policy.sample(env, &state, &mut agent_rng);
        let executed = env.perturb_action(&intended, &mut wrapper_rng);
        let step = env.step(&state, &executed, &mut env_rng);
        traj.states.push(state);
        traj.actions.push(executed);
        traj.intended.push(intended);
        traj.done_mask.push(step.done);
        state = step.next;
        if step.done {
            break;
        }
    }
    traj
}

/// `n` episodes with per-episode seeds derived from `seed`.
pub fn rollout_batch(
    env: &dyn Environment,
    policy: &Policy,
    reward: &RewardSource,
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|i| rollout(env, policy, reward, derive_seed(seed, &[i as u64])))
        .collect()
}
