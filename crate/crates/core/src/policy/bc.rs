use serde::{Deserialize, Serialize};

use super::{Policy, PolicyClass};
use crate::env::{Environment, Trajectory};
use crate::nn::Adam;
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    /// Full-batch gradient steps on the demo log-likelihood.
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            learning_rate: 0.05,
        }
    }
}

/// Fits a policy by maximising the log-likelihood of the demonstrated
/// actions. Demonstrations record the action the expert intended, so
/// trembles in the demo environment do not corrupt the labels.
pub fn behavioural_cloning(
    demos: &[Trajectory],
    env: &dyn Environment,
    class: &PolicyClass,
    config: &BcConfig,
    seed: u64,
) -> Result<Policy> {
    let pairs: Vec<_> = demos
        .iter()
        .flat_map(|t| t.states.iter().zip(&t.intended))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::config("learning_rate", "must be positive"));
    }
    let mut policy = Policy::init(env, class, &mut seeded(seed, &[0xbc]))?;
    let mut opt = Adam::new(policy.num_params());
    let inv = 1.0 / pairs.len() as f64;
    for _ in 0..config.steps {
        let mut grad = vec![0.0; policy.num_params()];
        for (s, a) in &pairs {
            policy.accumulate_grad(env, s, a, &mut grad, |_, _| (-inv, 0.0));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("behavioural cloning gradient".into()));
        }
        let mut params = policy.params();
        opt.step(&mut params, &grad, config.learning_rate);
        policy.set_params(&params);
    }
    Ok(policy)
}
