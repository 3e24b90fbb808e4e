use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvModel, Environment, State, Step, TabularView};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Replaces the agent's action by a uniformly random one with probability
/// `p_tremble`.
#[derive(Clone, Debug)]
pub struct TrembleWrapper {
    inner: Arc<dyn Environment>,
    p_tremble: f64,
    rng_seed: u64,
}

impl TrembleWrapper {
    pub fn new(inner: Arc<dyn Environment>, p_tremble: f64, rng_seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_tremble) {
            return Err(Error::config("p_tremble", "must lie in [0, 1]"));
        }
        Ok(Self {
            inner,
            p_tremble,
            rng_seed,
        })
    }

    pub fn p_tremble(&self) -> f64 {
        self.p_tremble
    }

    pub fn inner(&self) -> &Arc<dyn Environment> {
        &self.inner
    }
}

fn random_action(space: ActionSpace, rng: &mut Rng) -> Action {
    match space {
        ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..n)),
        ActionSpace::Continuous(_) => Action::Continuous([rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]),
    }
}

impl Environment for TrembleWrapper {
    fn action_space(&self) -> ActionSpace {
        self.inner.action_space()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn num_states(&self) -> Option<usize> {
        self.inner.num_states()
    }
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }
    fn features(&self, state: &State) -> Vec<f64> {
        self.inner.features(state)
    }
    fn reset(&self, rng: &mut Rng) -> State {
        self.inner.reset(rng)
    }
    fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Step {
        self.inner.step(state, action, rng)
    }
    fn reward(&self, state: &State, action: &Action) -> f64 {
        self.inner.reward(state, action)
    }
    fn perturb_action(&self, action: &Action, rng: &mut Rng) -> Action {
        let action = self.inner.perturb_action(action, rng);
        if self.p_tremble > 0.0 && rng.random::<f64>() < self.p_tremble {
            random_action(self.action_space(), rng)
        } else {
            action
        }
    }
    fn wrapper_seed(&self) -> u64 {
        self.inner.wrapper_seed() ^ self.rng_seed.rotate_left(17)
    }
    fn tabular(&self) -> Option<TabularView<'_>> {
        self.inner.tabular().map(|v| TabularView {
            mdp: v.mdp,
            tremble: 1.0 - (1.0 - v.tremble) * (1.0 - self.p_tremble),
        })
    }
}

/// Named parameter overrides of a base environment's dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Action `a` slips to a uniformly random action with probability
    /// `slip[a]`; `action_permutation` optionally relabels action effects.
    Tabular {
        slip: Vec<f64>,
        action_permutation: Option<Vec<usize>>,
    },
    PointMass {
        action_scale_factor: f64,
        dt_factor: f64,
    },
}

impl Perturbation {
    pub fn apply(&self, base: &EnvModel) -> Result<EnvModel> {
        match (self, base) {
            (
                Perturbation::Tabular {
                    slip,
                    action_permutation,
                },
                EnvModel::Tabular(mdp),
            ) => {
                let (ns, na) = (mdp.num_states(), mdp.num_actions());
                if slip.len() != na {
                    return Err(Error::config("slip", "one probability per action"));
                }
                if slip.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::config("slip", "probabilities must lie in [0, 1]"));
                }
                let perm: Vec<usize> = match action_permutation {
                    Some(p) => {
                        let mut sorted = p.clone();
                        sorted.sort_unstable();
                        if sorted != (0..na).collect::<Vec<_>>() {
                            return Err(Error::config("action_permutation", "not a permutation"));
                        }
                        p.clone()
                    }
                    None => (0..na).collect(),
                };
                let mut transition = vec![0.0; ns * na * ns];
                for s in 0..ns {
                    let mut mean_row = vec![0.0; ns];
                    for b in 0..na {
                        for (m, p) in mean_row.iter_mut().zip(mdp.row(s, b)) {
                            *m += p / na as f64;
                        }
                    }
                    for a in 0..na {
                        let own = mdp.row(s, perm[a]);
                        let out = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                        for j in 0..ns {
                            out[j] = (1.0 - slip[a]) * own[j] + slip[a] * mean_row[j];
                        }
                    }
                }
                Ok(EnvModel::Tabular(mdp.with_transition(transition)?))
            }
            (
                Perturbation::PointMass {
                    action_scale_factor,
                    dt_factor,
                },
                EnvModel::PointMass(pm),
            ) => {
                if *action_scale_factor <= 0.0 || *dt_factor <= 0.0 {
                    return Err(Error::config("perturbation", "factors must be positive"));
                }
                let mut out = pm.clone();
                out.action_scale *= action_scale_factor;
                out.dt *= dt_factor;
                Ok(EnvModel::PointMass(out))
            }
            _ => Err(Error::SpaceMismatch(
                "perturbation kind does not match environment kind".into(),
            )),
        }
    }
}

/// A base environment with perturbed dynamics. State and action spaces are
/// those of the base; only the transition kernel changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsVariant {
    pub base: EnvModel,
    pub perturbation: Perturbation,
    pub sample_seed: u64,
    variant: EnvModel,
}

impl DynamicsVariant {
    pub fn new(base: EnvModel, perturbation: Perturbation, sample_seed: u64) -> Result<Self> {
        let variant = perturbation.apply(&base)?;
        Ok(Self {
            base,
            perturbation,
            sample_seed,
            variant,
        })
    }

    pub fn model(&self) -> &EnvModel {
        &self.variant
    }

    pub fn into_model(self) -> EnvModel {
        self.variant
    }
}

/// Samples a dynamics perturbation of strength `magnitude`.
///
/// Tabular: action `a` slips with probability `magnitude * u_a`,
/// `u_a ~ U[0.5, 1]`. Point mass: `action_scale` is multiplied by a factor
/// drawn from `U[1 - magnitude, 1 + magnitude]`.
pub fn sample_dynamics_variant(base: &EnvModel, magnitude: f64, seed: u64) -> Result<DynamicsVariant> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::config("magnitude", "must lie in [0, 1]"));
    }
    let mut rng = seeded(seed, &[0xD1CE]);
    let perturbation = match base {
        EnvModel::Tabular(mdp) => Perturbation::Tabular {
            slip: (0..mdp.num_actions())
                .map(|_| magnitude * rng.random_range(0.5..=1.0))
                .collect(),
            action_permutation: None,
        },
        EnvModel::PointMass(_) => Perturbation::PointMass {
            action_scale_factor: 1.0 + magnitude * rng.random_range(-1.0..=1.0),
            dt_factor: 1.0,
        },
    };
    DynamicsVariant::new(base.clone(), perturbation, seed)
}

impl Environment for DynamicsVariant {
    fn action_space(&self) -> ActionSpace {
        self.variant.action_space()
    }
    fn horizon(&self) -> usize {
        self.variant.horizon()
    }
    fn num_states(&self) -> Option<usize> {
        self.variant.num_states()
    }
    fn feature_dim(&self) -> usize {
        self.variant.feature_dim()
    }
    fn features(&self, state: &State) -> Vec<f64> {
        self.variant.features(state)
    }
    fn reset(&self, rng: &mut Rng) -> State {
        self.variant.reset(rng)
    }
    fn step(&self, state: &State, action: &Action, rng: &mut Rng) -> Step {
        self.variant.step(state, action, rng)
    }
    fn reward(&self, state: &State, action: &Action) -> f64 {
        self.variant.reward(state, action)
    }
    fn tabular(&self) -> Option<TabularView<'_>> {
        self.variant.tabular()
    }
}
