use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, GridLayout, State};
use crate::nn::Mlp;
use crate::reward::StateReward;
use crate::rng::{standard_normal, Rng};
use crate::{Error, Result};

/// How reward models are initialised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardModelKind {
    /// Per-state values drawn from `N(0, init_scale^2)`.
    Table { init_scale: f64 },
    /// States-only tanh network.
    Net { hidden: Vec<usize> },
}

impl RewardModelKind {
    pub fn for_env(env: &dyn Environment) -> Self {
        if env.num_states().is_some() {
            RewardModelKind::Table { init_scale: 0.5 }
        } else {
            RewardModelKind::Net {
                hidden: crate::shaping::DEFAULT_HIDDEN.to_vec(),
            }
        }
    }
}

/// A states-only reward `f(s)`. A table is the linear model `w . onehot(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RewardModel {
    Table(Vec<f64>),
    Net(Mlp),
}

impl RewardModel {
    pub fn init(env: &dyn Environment, kind: &RewardModelKind, rng: &mut Rng) -> Result<Self> {
        match kind {
            RewardModelKind::Table { init_scale } => {
                let n = env
                    .num_states()
                    .ok_or_else(|| Error::Unsupported("table reward on a continuous environment".into()))?;
                Ok(RewardModel::Table((0..n).map(|_| init_scale * standard_normal(rng)).collect()))
            }
            RewardModelKind::Net { hidden } => {
                let mut sizes = vec![env.feature_dim()];
                sizes.extend(hidden);
                sizes.push(1);
                Ok(RewardModel::Net(Mlp::new(&sizes, 1.0, rng)))
            }
        }
    }

    pub fn value(&self, env: &dyn Environment, state: &State) -> f64 {
        match self {
            RewardModel::Table(w) => w[state.cell().expect("tabular state")],
            RewardModel::Net(net) => net.forward(&env.features(state))[0],
        }
    }

    /// `f` on a feature vector (possibly an interpolation of two states).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self {
            RewardModel::Table(w) => w.iter().zip(x).map(|(a, b)| a * b).sum(),
            RewardModel::Net(net) => net.forward(x)[0],
        }
    }

    /// `df/dx` at features `x`.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            RewardModel::Table(w) => w.clone(),
            RewardModel::Net(net) => net.input_gradient(x),
        }
    }

    /// Adds `scale * df/dparams` at features `x` into `grad`.
    pub fn accumulate_grad_at(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        match self {
            RewardModel::Table(_) => {
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += scale * xi;
                }
            }
            RewardModel::Net(net) => {
                let trace = net.forward_trace(x);
                net.backward(&trace, &[scale], Some(grad));
            }
        }
    }

    /// Adds `scale * df/dparams` at `state` into `grad`.
    pub fn accumulate_grad(&self, env: &dyn Environment, state: &State, scale: f64, grad: &mut [f64]) {
        match self {
            RewardModel::Table(_) => grad[state.cell().expect("tabular state")] += scale,
            RewardModel::Net(_) => self.accumulate_grad_at(&env.features(state), scale, grad),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            RewardModel::Table(w) => w,
            RewardModel::Net(net) => net.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            RewardModel::Table(w) => w,
            RewardModel::Net(net) => net.params_mut(),
        }
    }
}

/// `K` reward models whose arithmetic mean is the recovered reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorEnsemble {
    pub members: Vec<RewardModel>,
    /// Negate the mean, as a literal reading of the learner's objective.
    pub literal_sign: bool,
}

impl DiscriminatorEnsemble {
    pub fn new(members: Vec<RewardModel>, literal_sign: bool) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("discriminator ensemble"));
        }
        Ok(Self { members, literal_sign })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mean(&self, env: &dyn Environment, state: &State) -> f64 {
        let sum: f64 = self.members.iter().map(|m| m.value(env, state)).sum();
        sum / self.members.len() as f64
    }

    /// Recovered reward at every tabular state.
    pub fn table(&self, env: &dyn Environment) -> Result<Vec<f64>> {
        let n = env
            .num_states()
            .ok_or_else(|| Error::Unsupported("reward table of a continuous environment".into()))?;
        Ok((0..n).map(|s| self.state_reward(env, &State::Cell(s))).collect())
    }

    /// Writes the recovered reward over a grid (`row,col_0,..` header).
    pub fn write_grid_csv<W: Write>(&self, env: &dyn Environment, layout: &GridLayout, out: W) -> Result<()> {
        crate::shaping::write_grid_csv(&self.table(env)?, layout, out)
    }
}

impl StateReward for DiscriminatorEnsemble {
    fn state_reward(&self, env: &dyn Environment, state: &State) -> f64 {
        let m = self.mean(env, state);
        if self.literal_sign {
            -m
        } else {
            m
        }
    }
}
