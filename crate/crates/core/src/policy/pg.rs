use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Critic, Policy, PolicyClass, TrainingCurve};
use crate::env::{rollout_batch, Environment, Trajectory};
use crate::nn::{clip_grad_norm, Adam, LinearSchedule};
use crate::reward::RewardSource;
use crate::rng::{derive_seed, seeded, Rng};
use crate::{Error, Result};

/// Clipped-surrogate policy-gradient settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgConfig {
    /// Actor learning rate, decayed linearly over `updates`.
    pub learning_rate: LinearSchedule,
    pub critic_learning_rate: LinearSchedule,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub discount: f64,
    /// Number of policy updates `M`.
    pub updates: usize,
    /// Trajectories collected per update.
    pub batch_trajectories: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    /// Learn a critic for GAE; without one, advantages are discounted
    /// returns-to-go.
    pub use_critic: bool,
    /// Global gradient-norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
    pub policy: PolicyClass,
}

impl Default for PgConfig {
    /// Inner-loop settings: learning rate 4e-3 with linear decay, one
    /// gradient epoch per update, ten trajectories per update.
    fn default() -> Self {
        Self {
            learning_rate: LinearSchedule::new(4e-3, 4e-5),
            critic_learning_rate: LinearSchedule::new(4e-3, 4e-5),
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            discount: 1.0,
            updates: 100,
            batch_trajectories: 10,
            epochs: 1,
            minibatches: 1,
            entropy_coef: 0.0,
            normalize_advantages: true,
            use_critic: true,
            max_grad_norm: 0.5,
            policy: PolicyClass::Tabular,
        }
    }
}

impl PgConfig {
    /// Settings for the tabular gridworlds. Softmax logits need much larger
    /// steps than network weights to move within a few dozen updates. The
    /// short GAE horizon keeps credit assignment bootstrapped, as in long
    /// episodes; with `gae_lambda` near 1 on a 20-step episode a potential
    /// only acts as a state baseline.
    pub fn tabular() -> Self {
        Self {
            learning_rate: LinearSchedule::new(0.1, 0.01),
            critic_learning_rate: LinearSchedule::new(0.1, 0.01),
            gae_lambda: 0.2,
            updates: 40,
            batch_trajectories: 10,
            epochs: 4,
            minibatches: 2,
            entropy_coef: 0.01,
            max_grad_norm: 0.0,
            ..Self::default()
        }
    }

    /// Settings for the point-mass controller.
    pub fn point_mass() -> Self {
        Self {
            learning_rate: LinearSchedule::new(3e-3, 3e-4),
            critic_learning_rate: LinearSchedule::new(3e-3, 3e-4),
            gae_lambda: 0.95,
            discount: 0.99,
            updates: 150,
            batch_trajectories: 16,
            epochs: 6,
            minibatches: 4,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            policy: PolicyClass::Mlp {
                hidden: vec![32, 32],
                init_log_std: -0.5,
            },
            ..Self::default()
        }
    }

    pub fn with_updates(mut self, updates: usize) -> Self {
        self.updates = updates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_grad_norm >= 0.0) {
            return Err(Error::config("max_grad_norm", "must be non-negative"));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::config("clip_epsilon", "must lie in (0, 1)"));
        }
        for (name, s) in [
            ("learning_rate", &self.learning_rate),
            ("critic_learning_rate", &self.critic_learning_rate),
        ] {
            if !(s.start > 0.0 && s.end > 0.0) {
                return Err(Error::config(name, "schedule endpoints must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gae_lambda", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::config("discount", "must lie in [0, 1]"));
        }
        if self.batch_trajectories == 0 || self.epochs == 0 || self.minibatches == 0 {
            return Err(Error::config(
                "batch_trajectories/epochs/minibatches",
                "must be at least 1",
            ));
        }
        if self.entropy_coef < 0.0 {
            return Err(Error::config("entropy_coef", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// A policy, its critic and their optimiser state.
#[derive(Clone, Debug)]
pub struct PgLearner {
    pub policy: Policy,
    pub critic: Critic,
    config: PgConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    step: usize,
    schedule_len: usize,
}

struct Sample<'a> {
    traj: &'a Trajectory,
    h: usize,
    advantage: f64,
    target: f64,
    old_log_prob: f64,
}

impl PgLearner {
    /// `schedule_len` is the number of updates over which learning rates
    /// decay.
    pub fn new(policy: Policy, critic: Critic, config: PgConfig, schedule_len: usize) -> Result<Self> {
        config.validate()?;
        let actor_opt = Adam::new(policy.num_params());
        let critic_opt = Adam::new(critic.params().len());
        Ok(Self {
            policy,
            critic,
            config,
            actor_opt,
            critic_opt,
            step: 0,
            schedule_len,
        })
    }

    /// Fresh policy and critic drawn from `rng`.
    pub fn fresh(env: &dyn Environment, config: PgConfig, schedule_len: usize, rng: &mut Rng) -> Result<Self> {
        let policy = Policy::init(env, &config.policy, rng)?;
        let critic = Critic::init(env, &config.policy, rng);
        Self::new(policy, critic, config, schedule_len)
    }

    pub fn config(&self) -> &PgConfig {
        &self.config
    }

    pub fn updates_done(&self) -> usize {
        self.step
    }

    /// Moves the learning-rate schedule to `step`.
    pub fn set_updates_done(&mut self, step: usize) {
        self.step = step;
    }

    /// One clipped-surrogate update on `batch`, whose `rewards` columns
    /// hold the reward being optimised.
    pub fn update(&mut self, env: &dyn Environment, batch: &[Trajectory], rng: &mut Rng) -> Result<UpdateStats> {
        let cfg = &self.config;
        let mut samples = Vec::with_capacity(batch.iter().map(Trajectory::len).sum());
        for traj in batch {
            let n = traj.len();
            let values: Vec<f64> = if cfg.use_critic {
                traj.states.iter().map(|s| self.critic.value(env, s)).collect()
            } else {
                vec![0.0; n]
            };
            let mut adv = vec![0.0; n];
            let mut running = 0.0;
            for h in (0..n).rev() {
                let next_v = if h + 1 < n { values[h + 1] } else { 0.0 };
                let delta = traj.rewards[h] + cfg.discount * next_v - values[h];
                running = delta + cfg.discount * cfg.gae_lambda * running;
                adv[h] = running;
            }
            for h in 0..n {
                let old_log_prob = self.policy.log_prob(env, &traj.states[h], &traj.intended[h]);
                samples.push(Sample {
                    traj,
                    h,
                    advantage: adv[h],
                    target: adv[h] + values[h],
                    old_log_prob,
                });
            }
        }
        if samples.is_empty() {
            return Err(Error::Empty("policy-gradient batch"));
        }
        if cfg.normalize_advantages && samples.len() > 1 {
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt() + 1e-8;
            for s in &mut samples {
                s.advantage = (s.advantage - mean) / std;
            }
        }

        let lr = cfg.learning_rate.at(self.step, self.schedule_len);
        let critic_lr = cfg.critic_learning_rate.at(self.step, self.schedule_len);
        let eps = cfg.clip_epsilon;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats::default();
        let mut n_stats = 0usize;
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            let mb_size = order.len().div_ceil(cfg.minibatches);
            for chunk in order.chunks(mb_size) {
                let inv = 1.0 / chunk.len() as f64;
                let mut grad = vec![0.0; self.policy.num_params()];
                let mut critic_grad = vec![0.0; self.critic.params().len()];
                let (mut loss, mut vloss, mut ent_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
                for &i in chunk {
                    let sample = &samples[i];
                    let state = &sample.traj.states[sample.h];
                    let action = &sample.traj.intended[sample.h];
                    let a = sample.advantage;
                    let ent_coef = cfg.entropy_coef;
                    let (logp, ent) = self.policy.accumulate_grad(env, state, action, &mut grad, |logp, _| {
                        let ratio = (logp - sample.old_log_prob).exp();
                        let inactive = (a >= 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
                        let c = if inactive { 0.0 } else { -a * ratio * inv };
                        (c, -ent_coef * inv)
                    });
                    let ratio = (logp - sample.old_log_prob).exp();
                    loss -= (ratio * a).min(ratio.clamp(1.0 - eps, 1.0 + eps) * a) * inv;
                    ent_sum += ent * inv;
                    if (ratio - 1.0).abs() > eps {
                        clipped += 1;
                    }
                    if cfg.use_critic {
                        let v = self.critic.value(env, state);
                        let err = v - sample.target;
                        vloss += 0.5 * err * err * inv;
                        self.critic.accumulate_grad(env, state, err * inv, &mut critic_grad);
                    }
                }
                if !loss.is_finite() || !vloss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "policy-gradient loss at update {} (policy {loss}, value {vloss})",
                        self.step
                    )));
                }
                if cfg.max_grad_norm > 0.0 {
                    clip_grad_norm(&mut grad, cfg.max_grad_norm);
                    clip_grad_norm(&mut critic_grad, cfg.max_grad_norm);
                }
                let mut params = self.policy.params();
                self.actor_opt.step(&mut params, &grad, lr);
                self.policy.set_params(&params);
                if cfg.use_critic {
                    self.critic_opt.step(self.critic.params_mut(), &critic_grad, critic_lr);
                }
                stats.policy_loss += loss;
                stats.value_loss += vloss;
                stats.entropy += ent_sum;
                stats.clip_fraction += clipped as f64 * inv;
                n_stats += 1;
            }
        }
        let k = n_stats.max(1) as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
        self.step += 1;
        Ok(stats)
    }
}

/// Result of [`pg_train`]. `curve` tracks the training reward; `true_curve`
/// tracks the environment's ground-truth reward on the same episodes.
#[derive(Clone, Debug)]
pub struct PgOutcome {
    pub policy: Policy,
    pub critic: Critic,
    pub curve: TrainingCurve,
    pub true_curve: TrainingCurve,
}

const INIT_STREAM: u64 = 0x1217;
const ROLLOUT_STREAM: u64 = 0x2011;
const SHUFFLE_STREAM: u64 = 0x5401;

/// Trains for `config.updates` updates. After each update the curves get
/// the mean return of the episodes that update was computed from.
pub fn pg_train(
    env: &dyn Environment,
    reward: &RewardSource,
    config: &PgConfig,
    seed: u64,
    init: Option<Policy>,
) -> Result<PgOutcome> {
    pg_train_truncated(env, reward, config, seed, init, config.updates)
}

/// Runs only the first `stop_after` updates of the `config.updates`-long
/// schedule. The result is a prefix of the full run with the same seed.
pub fn pg_train_truncated(
    env: &dyn Environment,
    reward: &RewardSource,
    config: &PgConfig,
    seed: u64,
    init: Option<Policy>,
    stop_after: usize,
) -> Result<PgOutcome> {
    config.validate()?;
    let mut init_rng = seeded(seed, &[INIT_STREAM]);
    let policy = match init {
        Some(p) => {
            p.check_compatible(env)?;
            p
        }
        None => Policy::init(env, &config.policy, &mut init_rng)?,
    };
    let critic = Critic::init(env, &config.policy, &mut init_rng);
    let mut learner = PgLearner::new(policy, critic, config.clone(), config.updates)?;
    let mut shuffle_rng = seeded(seed, &[SHUFFLE_STREAM]);
    let mut curve = TrainingCurve::new(reward.name());
    let mut true_curve = TrainingCurve::new(RewardSource::GroundTruth.name());
    let mut interactions = 0u64;
    for u in 0..stop_after.min(config.updates) {
        let batch = rollout_batch(
            env,
            &learner.policy,
            reward,
            config.batch_trajectories,
            derive_seed(seed, &[ROLLOUT_STREAM, u as u64]),
        )?;
        interactions += batch.iter().map(|t| t.len() as u64).sum::<u64>();
        let n = batch.len() as f64;
        let perf = batch.iter().map(Trajectory::total_reward).sum::<f64>() / n;
        let true_perf = batch
            .iter()
            .map(|t| {
                t.states
                    .iter()
                    .zip(&t.actions)
                    .map(|(s, a)| env.reward(s, a))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n;
        learner.update(env, &batch, &mut shuffle_rng)?;
        curve.push(interactions, perf)?;
        true_curve.push(interactions, true_perf)?;
    }
    Ok(PgOutcome {
        policy: learner.policy,
        critic: learner.critic,
        curve,
        true_curve,
    })
}
