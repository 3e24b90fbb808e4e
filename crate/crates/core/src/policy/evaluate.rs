use super::Policy;
use crate::env::{rollout_batch, Environment, State};
use crate::reward::RewardSource;
use crate::{Error, Result};

/// Monte Carlo estimate of `J(pi, reward)` over `n_episodes` rollouts.
pub fn evaluate(
    policy: &Policy,
    env: &dyn Environment,
    reward: &RewardSource,
    n_episodes: usize,
    seed: u64,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::config("n_episodes", "must be at least 1"));
    }
    let batch = rollout_batch(env, policy, reward, n_episodes, seed)?;
    let returns: Vec<f64> = batch.iter().map(|t| t.total_reward()).collect();
    Ok(crate::stats::mean(&returns))
}

/// Effective action distribution at tabular state `s`, including any
/// trembling-hand replacement.
fn effective_probs(policy: &Policy, env: &dyn Environment, s: usize, tremble: f64, na: usize) -> Result<Vec<f64>> {
    let probs = policy
        .probs(env, &State::Cell(s))
        .ok_or_else(|| Error::Unsupported("exact evaluation needs a discrete policy".into()))?;
    Ok(probs
        .iter()
        .map(|p| (1.0 - tremble) * p + tremble / na as f64)
        .collect())
}

/// Per-timestep state occupancy `d_h(s)` of `policy` in a tabular
/// environment.
pub fn state_visitation(policy: &Policy, env: &dyn Environment) -> Result<Vec<Vec<f64>>> {
    let view = env
        .tabular()
        .ok_or_else(|| Error::Unsupported("occupancy needs a tabular environment".into()))?;
    policy.check_compatible(env)?;
    let mdp = view.mdp;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let probs: Vec<Vec<f64>> = (0..ns)
        .map(|s| effective_probs(policy, env, s, view.tremble, na))
        .collect::<Result<_>>()?;
    let mut d = mdp.initial_dist().to_vec();
    let mut out = Vec::with_capacity(mdp.horizon());
    for _ in 0..mdp.horizon() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = d[s] * probs[s][a];
                if w == 0.0 {
                    continue;
                }
                for (n, p) in next.iter_mut().zip(mdp.row(s, a)) {
                    *n += w * p;
                }
            }
        }
        out.push(std::mem::replace(&mut d, next));
    }
    Ok(out)
}

/// Exact `J(pi, reward)` in a tabular environment via forward occupancy.
///
/// Shaped rewards evaluate to their unshaped base: with the terminal wrap the
/// shaping terms cancel within every episode.
pub fn exact_return(policy: &Policy, env: &dyn Environment, reward: &RewardSource) -> Result<f64> {
    let view = env
        .tabular()
        .ok_or_else(|| Error::Unsupported("exact evaluation needs a tabular environment".into()))?;
    let mdp = view.mdp;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let occupancy = state_visitation(policy, env)?;
    let per_state: Vec<f64> = match reward.unshaped() {
        RewardSource::GroundTruth => (0..ns)
            .map(|s| {
                let probs = effective_probs(policy, env, s, view.tremble, na)?;
                Ok((0..na).map(|a| probs[a] * mdp.r(s, a)).sum())
            })
            .collect::<Result<_>>()?,
        RewardSource::Learned(model) => (0..ns)
            .map(|s| model.state_reward(env, &State::Cell(s)))
            .collect(),
        RewardSource::Shaped { .. } => unreachable!("unshaped() strips shaping"),
    };
    Ok(occupancy
        .iter()
        .map(|d| d.iter().zip(&per_state).map(|(p, r)| p * r).sum::<f64>())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, sample_dynamics_variant, EnvModel, Gridworld, TrembleWrapper};
    use crate::policy::{value_iteration, PolicyClass, TabularSoftmaxPolicy};
    use crate::rng::seeded;
    use std::sync::Arc;

    #[test]
    fn deterministic_case_matches_single_rollout() {
        let mdp = Gridworld::five_by_five().build().unwrap();
        let policy = Policy::Deterministic(value_iteration(&mdp).policy());
        let single = rollout(&mdp, &policy, &RewardSource::GroundTruth, 5).unwrap().total_reward();
        let mc = evaluate(&policy, &mdp, &RewardSource::GroundTruth, 17, 3).unwrap();
        assert_eq!(mc, single);
    }

    #[test]
    fn expert_matches_optimal_value() {
        let mdp = Gridworld::five_by_five().build().unwrap();
        let sol = value_iteration(&mdp);
        let policy = Policy::Deterministic(sol.policy());
        let j = exact_return(&policy, &mdp, &RewardSource::GroundTruth).unwrap();
        assert!((j - sol.optimal_return()).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_within_three_sigma_of_exact() {
        let base = EnvModel::Tabular(Gridworld::five_by_five().build().unwrap());
        let variant = sample_dynamics_variant(&base, 0.6, 4).unwrap();
        let env = TrembleWrapper::new(Arc::new(variant), 0.1, 2).unwrap();
        let mut policy = Policy::init(&env, &PolicyClass::Tabular, &mut seeded(0, &[])).unwrap();
        if let Policy::Tabular(TabularSoftmaxPolicy { logits, .. }) = &mut policy {
            for (i, l) in logits.iter_mut().enumerate() {
                *l = if i % 4 == 2 || i % 4 == 1 { 1.5 } else { 0.0 };
            }
        }
        let exact = exact_return(&policy, &env, &RewardSource::GroundTruth).unwrap();
        let n = 4000;
        let batch = rollout_batch(&env, &policy, &RewardSource::GroundTruth, n, 99).unwrap();
        let returns: Vec<f64> = batch.iter().map(|t| t.total_reward()).collect();
        let mean = crate::stats::mean(&returns);
        let se = crate::stats::std_error(&returns);
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} exact {exact} se {se}");
    }
}
