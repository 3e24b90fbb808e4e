use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    discriminator_gradient, interpolated_points, DiscriminatorEnsemble, Regularisation, ResetSchedule, RewardModel,
    RewardModelKind, TrajectoryBuffer,
};
use crate::env::{rollout_batch, Environment, Trajectory};
use crate::evo::{evolve_shaping, EsConfig, Evolution};
use crate::nn::LinearSchedule;
use crate::policy::{exact_return, PgConfig, PgLearner, Policy};
use crate::reward::RewardSource;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlConfig {
    pub outer_iterations: usize,
    /// Discriminators `K`, each paired with one learner.
    pub ensemble_size: usize,
    pub disc_learning_rate: LinearSchedule,
    pub regularisation: Regularisation,
    /// Learner trajectories collected per policy update.
    pub trajectories_per_update: usize,
    /// Buffer and expert trajectories per discriminator step.
    pub disc_batch: usize,
    /// Iterations of learner data kept; `None` keeps all of it.
    pub buffer_capacity: Option<usize>,
    pub reset: ResetSchedule,
    /// `None` picks a table for tabular environments, a network otherwise.
    pub reward_model: Option<RewardModelKind>,
    pub inner: PgConfig,
    /// Learners maximise `-mean f` instead of `mean f`.
    pub literal_sign: bool,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 2441,
            ensemble_size: 5,
            disc_learning_rate: LinearSchedule::new(1e-2, 1e-5),
            regularisation: Regularisation::default(),
            trajectories_per_update: 10,
            disc_batch: 10,
            buffer_capacity: None,
            reset: ResetSchedule { initial: 0.05 },
            reward_model: None,
            inner: PgConfig::default(),
            literal_sign: false,
        }
    }
}

impl IrlConfig {
    /// Desk-scale settings for the tabular gridworld.
    pub fn gridworld() -> Self {
        Self {
            inner: PgConfig::tabular(),
            ..Self::default()
        }
    }

    /// Desk-scale settings for the point mass.
    pub fn point_mass() -> Self {
        Self {
            outer_iterations: 150,
            disc_batch: 16,
            trajectories_per_update: 16,
            reward_model: Some(RewardModelKind::Net { hidden: vec![32, 32] }),
            inner: PgConfig::point_mass(),
            ..Self::default()
        }
    }

    /// The single-discriminator baseline: one learner, only the latest
    /// batch in the buffer, no resets.
    pub fn vanilla(self) -> Self {
        Self {
            ensemble_size: 1,
            buffer_capacity: Some(1),
            reset: ResetSchedule::NEVER,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::config("ensemble_size", "must be at least 1"));
        }
        if self.trajectories_per_update == 0 || self.disc_batch == 0 {
            return Err(Error::config("trajectories_per_update/disc_batch", "must be at least 1"));
        }
        if self.buffer_capacity == Some(0) {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if !(self.disc_learning_rate.start > 0.0 && self.disc_learning_rate.end > 0.0) {
            return Err(Error::config("disc_learning_rate", "schedule endpoints must be positive"));
        }
        ResetSchedule::new(self.reset.initial)?;
        let r = &self.regularisation;
        if r.l2 < 0.0 || r.gradient_penalty < 0.0 {
            return Err(Error::config("regularisation", "coefficients must be non-negative"));
        }
        self.inner.validate()
    }
}

/// One discriminator, its paired learner and that learner's buffer.
#[derive(Clone, Debug)]
pub struct IrlMember {
    pub discriminator: RewardModel,
    pub learner: PgLearner,
    pub buffer: TrajectoryBuffer,
}

#[derive(Clone, Debug)]
pub struct IrlState {
    pub members: Vec<IrlMember>,
    pub iteration: usize,
    pub interactions: u64,
    /// States the learners visited: each distinct tabular state once, or
    /// the first trajectory of every member batch for continuous states.
    pub visited: Vec<crate::env::State>,
    seen_cells: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrlDiagnostic {
    pub iteration: usize,
    pub member: usize,
    pub disc_loss: f64,
    /// Ground-truth return of the learner before this iteration's update.
    pub learner_j_true: f64,
    pub reset: bool,
}

/// Writes `iteration,member,disc_loss,learner_J_true,reset_flag`.
pub fn write_diagnostics_csv<W: Write>(diagnostics: &[IrlDiagnostic], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "member", "disc_loss", "learner_J_true", "reset_flag"])?;
    for d in diagnostics {
        w.write_record([
            d.iteration.to_string(),
            d.member.to_string(),
            d.disc_loss.to_string(),
            d.learner_j_true.to_string(),
            u8::from(d.reset).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const INIT_STREAM: u64 = 0x1a1;
const ROLLOUT_STREAM: u64 = 0x1a2;
const DISC_STREAM: u64 = 0x1a3;
const POLICY_STREAM: u64 = 0x1a4;
const RESET_STREAM: u64 = 0x1a5;

impl IrlState {
    pub fn new(env: &dyn Environment, config: &IrlConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let kind = config
            .reward_model
            .clone()
            .unwrap_or_else(|| RewardModelKind::for_env(env));
        let members = (0..config.ensemble_size)
            .map(|k| {
                let mut rng = seeded(seed, &[INIT_STREAM, k as u64]);
                let discriminator = RewardModel::init(env, &kind, &mut rng)?;
                let learner = PgLearner::fresh(env, config.inner.clone(), config.outer_iterations, &mut rng)?;
                let buffer = match config.buffer_capacity {
                    Some(c) => TrajectoryBuffer::with_capacity(c)?,
                    None => TrajectoryBuffer::unbounded(),
                };
                Ok(IrlMember {
                    discriminator,
                    learner,
                    buffer,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            iteration: 0,
            interactions: 0,
            visited: Vec::new(),
            seen_cells: vec![false; env.num_states().unwrap_or(0)],
        })
    }

    pub fn ensemble(&self, literal_sign: bool) -> DiscriminatorEnsemble {
        DiscriminatorEnsemble {
            members: self.members.iter().map(|m| m.discriminator.clone()).collect(),
            literal_sign,
        }
    }

    fn record_visits(&mut self, batch: &[Trajectory]) {
        if self.seen_cells.is_empty() {
            if let Some(t) = batch.first() {
                self.visited.extend(t.states.iter().copied());
            }
            return;
        }
        for s in batch.iter().flat_map(|t| &t.states) {
            if let Some(c) = s.cell() {
                if !self.seen_cells[c] {
                    self.seen_cells[c] = true;
                    self.visited.push(*s);
                }
            }
        }
    }

    pub fn policies(&self) -> Vec<Policy> {
        self.members.iter().map(|m| m.learner.policy.clone()).collect()
    }
}

fn ground_truth_return(env: &dyn Environment, policy: &Policy, batch: &[Trajectory]) -> Result<f64> {
    if env.tabular().is_some() && policy.probs(env, &crate::env::State::Cell(0)).is_some() {
        return exact_return(policy, env, &RewardSource::GroundTruth);
    }
    let totals: Vec<f64> = batch
        .iter()
        .map(|t| t.states.iter().zip(&t.actions).map(|(s, a)| env.reward(s, a)).sum())
        .collect();
    Ok(crate::stats::mean(&totals))
}

/// One outer iteration: every member collects a batch, adds it to its
/// buffer and takes a discriminator step; then every learner takes a
/// policy step on the ensemble-mean reward and may be reset.
pub fn irl_step(
    state: &mut IrlState,
    env: &dyn Environment,
    demos: &[Trajectory],
    config: &IrlConfig,
    seed: u64,
) -> Result<Vec<IrlDiagnostic>> {
    if demos.is_empty() {
        return Err(Error::Empty("expert demonstrations"));
    }
    let current = state.iteration;
    let it = current as u64;
    let total = config.outer_iterations;
    let disc_lr = config.disc_learning_rate.at(state.iteration, total);
    let phase1 = crate::par::map_mut(&mut state.members, |k, m| -> Result<(Vec<Trajectory>, f64, f64)> {
        let k = k as u64;
        let batch = rollout_batch(
            env,
            &m.learner.policy,
            &RewardSource::GroundTruth,
            config.trajectories_per_update,
            derive_seed(seed, &[ROLLOUT_STREAM, it, k]),
        )?;
        let j_true = ground_truth_return(env, &m.learner.policy, &batch)?;
        m.buffer.push_batch(current, batch.iter().cloned());
        let mut rng = seeded(seed, &[DISC_STREAM, it, k]);
        let learner = m.buffer.sample(config.disc_batch, &mut rng);
        let expert: Vec<&Trajectory> = (0..config.disc_batch)
            .map(|_| &demos[rng.random_range(0..demos.len())])
            .collect();
        let pts = interpolated_points(env, &learner, &expert, config.regularisation.gp_samples, &mut rng);
        let (loss, grad) =
            discriminator_gradient(&m.discriminator, env, &learner, &expert, &config.regularisation, &pts)?;
        for (p, g) in m.discriminator.params_mut().iter_mut().zip(&grad) {
            *p -= disc_lr * g;
        }
        Ok((batch, loss, j_true))
    });
    let mut batches = Vec::with_capacity(phase1.len());
    let mut stats = Vec::with_capacity(phase1.len());
    for (k, r) in phase1.into_iter().enumerate() {
        let (b, loss, j) = r.map_err(|e| Error::member(k, e))?;
        state.interactions += b.iter().map(|t| t.len() as u64).sum::<u64>();
        state.record_visits(&b);
        batches.push(b);
        stats.push((loss, j));
    }
    let ensemble = state.ensemble(config.literal_sign);
    let reset_p = config.reset.probability(state.iteration, total);
    let next_iteration = state.iteration + 1;
    let phase2 = crate::par::map_mut(&mut state.members, |k, m| -> Result<bool> {
        let kk = k as u64;
        let mut batch = batches[k].clone();
        for t in &mut batch {
            t.rewards = t.states.iter().map(|s| crate::reward::StateReward::state_reward(&ensemble, env, s)).collect();
        }
        let mut rng = seeded(seed, &[POLICY_STREAM, it, kk]);
        m.learner.update(env, &batch, &mut rng)?;
        let mut reset_rng = seeded(seed, &[RESET_STREAM, it, kk]);
        let reset = reset_p > 0.0 && reset_rng.random::<f64>() < reset_p;
        if reset {
            let mut learner = PgLearner::fresh(env, config.inner.clone(), total, &mut reset_rng)?;
            learner.set_updates_done(next_iteration);
            m.learner = learner;
        }
        Ok(reset)
    });
    let mut diags = Vec::with_capacity(phase2.len());
    for (k, r) in phase2.into_iter().enumerate() {
        let reset = r.map_err(|e| Error::member(k, e))?;
        diags.push(IrlDiagnostic {
            iteration: state.iteration,
            member: k,
            disc_loss: stats[k].0,
            learner_j_true: stats[k].1,
            reset,
        });
    }
    state.iteration = next_iteration;
    Ok(diags)
}

/// Recovered reward, final learners and per-iteration diagnostics.
#[derive(Clone, Debug)]
pub struct IrlOutcome {
    pub ensemble: DiscriminatorEnsemble,
    pub policies: Vec<Policy>,
    pub diagnostics: Vec<IrlDiagnostic>,
    pub interactions: u64,
    /// See [`IrlState::visited`].
    pub visited: Vec<crate::env::State>,
}

impl IrlOutcome {
    /// `r_hat(s)`, the ensemble mean.
    pub fn reward(&self) -> RewardSource {
        RewardSource::Learned(Arc::new(self.ensemble.clone()))
    }
}

/// Runs `config.outer_iterations` iterations of [`irl_step`] from a fresh
/// state.
pub fn run_irl(env: &dyn Environment, demos: &[Trajectory], config: &IrlConfig, seed: u64) -> Result<IrlOutcome> {
    if demos.is_empty() {
        return Err(Error::Empty("expert demonstrations"));
    }
    let mut state = IrlState::new(env, config, seed)?;
    let mut diagnostics = Vec::with_capacity(config.outer_iterations * config.ensemble_size);
    for _ in 0..config.outer_iterations {
        diagnostics.extend(irl_step(&mut state, env, demos, config, seed)?);
    }
    Ok(IrlOutcome {
        ensemble: state.ensemble(config.literal_sign),
        policies: state.policies(),
        diagnostics,
        interactions: state.interactions,
        visited: state.visited,
    })
}

/// IRL followed by shaping evolution on the recovered reward.
#[derive(Clone, Debug)]
pub struct EvilOutcome {
    pub irl: IrlOutcome,
    pub evolution: Evolution,
}

impl EvilOutcome {
    /// `r_hat + F_phi`.
    pub fn shaped_reward(&self) -> RewardSource {
        RewardSource::shaped(self.irl.reward(), self.evolution.potential.clone())
    }
}

pub fn run_evil(
    env: &dyn Environment,
    demos: &[Trajectory],
    irl_config: &IrlConfig,
    es_config: &EsConfig,
    seed: u64,
) -> Result<EvilOutcome> {
    let irl = run_irl(env, demos, irl_config, derive_seed(seed, &[1]))?;
    let evolution = evolve_shaping(env, &irl.reward(), es_config, derive_seed(seed, &[2]))?;
    Ok(EvilOutcome { irl, evolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Gridworld, State, TabularMdp};
    use crate::irl::reward_correlation;
    use crate::policy::value_iteration;

    fn setup() -> (TabularMdp, Vec<Trajectory>) {
        let env = Gridworld::five_by_five().build().unwrap();
        let expert = Policy::Deterministic(value_iteration(&env).policy());
        let demos = rollout_batch(&env, &expert, &RewardSource::GroundTruth, 20, 3).unwrap();
        (env, demos)
    }

    fn small(iterations: usize) -> IrlConfig {
        let mut c = IrlConfig::gridworld();
        c.outer_iterations = iterations;
        c.ensemble_size = 2;
        c
    }

    #[test]
    fn zero_iterations_returns_initial_ensemble() {
        let (env, demos) = setup();
        let config = small(0);
        let out = run_irl(&env, &demos, &config, 4).unwrap();
        let init = IrlState::new(&env, &config, 4).unwrap();
        assert_eq!(out.ensemble.table(&env).unwrap(), init.ensemble(false).table(&env).unwrap());
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.interactions, 0);
    }

    #[test]
    fn empty_demos_rejected() {
        let (env, _) = setup();
        assert!(run_irl(&env, &[], &small(2), 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let (env, demos) = setup();
        let a = run_irl(&env, &demos, &small(5), 9).unwrap();
        let b = run_irl(&env, &demos, &small(5), 9).unwrap();
        assert_eq!(a.ensemble.table(&env).unwrap(), b.ensemble.table(&env).unwrap());
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.interactions, 5 * 2 * 10 * 20);
    }

    #[test]
    fn certain_reset_gives_fresh_policies() {
        let (env, demos) = setup();
        let mut config = small(1);
        config.reset = ResetSchedule::new(1.0).unwrap();
        let mut state = IrlState::new(&env, &config, 2).unwrap();
        let diags = irl_step(&mut state, &env, &demos, &config, 2).unwrap();
        assert!(diags.iter().all(|d| d.reset));
        let uniform = vec![0.25; 4];
        for m in &state.members {
            for s in 0..25 {
                let p = m.learner.policy.probs(&env, &State::Cell(s)).unwrap();
                assert_eq!(p, uniform);
            }
        }
    }

    #[test]
    fn vanilla_toggles() {
        let v = IrlConfig::gridworld().vanilla();
        assert_eq!(v.ensemble_size, 1);
        assert_eq!(v.buffer_capacity, Some(1));
        assert_eq!(v.reset, ResetSchedule::NEVER);
        assert_eq!(v.outer_iterations, IrlConfig::gridworld().outer_iterations);
    }

    #[test]
    fn invalid_config_names_field() {
        let mut c = IrlConfig::gridworld();
        c.ensemble_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("ensemble_size"));
    }

    #[test]
    fn diagnostics_csv_header() {
        let (env, demos) = setup();
        let out = run_irl(&env, &demos, &small(2), 1).unwrap();
        let mut buf = Vec::new();
        write_diagnostics_csv(&out.diagnostics, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,member,disc_loss,learner_J_true,reset_flag\n"));
        assert_eq!(text.lines().count(), 1 + 4);
    }

    #[derive(Debug)]
    struct Affine(f64, f64);

    impl crate::reward::StateReward for Affine {
        fn state_reward(&self, env: &dyn Environment, state: &State) -> f64 {
            self.0 * crate::irl::true_state_reward(env, state) + self.1
        }
    }

    #[test]
    fn correlation_of_affine_rewards() {
        let (env, _) = setup();
        let states: Vec<State> = (0..25).map(State::Cell).collect();
        assert!((reward_correlation(&Affine(2.0, 3.0), &env, &states).unwrap() - 1.0).abs() < 1e-12);
        assert!((reward_correlation(&Affine(-1.0, 0.0), &env, &states).unwrap() + 1.0).abs() < 1e-12);
        assert!(reward_correlation(&Affine(0.0, 1.0), &env, &states).is_err());
        assert!(reward_correlation(&Affine(1.0, 0.0), &env, &states[..1]).is_err());
    }
}
