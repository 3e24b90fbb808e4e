use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    sample_dynamics_variant, Bounds, Cell, EnvModel, Environment, Gridworld, PointMassEnv,
    TrembleWrapper,
};
use crate::rng::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKindSpec {
    Gridworld,
    PointMass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    /// `[col, row]`, row 0 at the top.
    pub goal: [usize; 2],
    /// Defaults to the top-right corner.
    pub start: Option<[usize; 2]>,
    pub step_penalty: f64,
    pub goal_reward: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            goal: [0, 4],
            start: None,
            step_penalty: -0.01,
            goal_reward: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassSpec {
    pub start: [f64; 2],
    pub start_jitter: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub action_scale: f64,
    pub dt: f64,
    pub friction: f64,
    pub control_cost: f64,
    pub bounds_min: [f64; 2],
    pub bounds_max: [f64; 2],
    pub terminate_at_goal: bool,
}

impl Default for PointMassSpec {
    fn default() -> Self {
        let d = PointMassEnv::default();
        Self {
            start: d.start,
            start_jitter: d.start_jitter,
            goal: d.goal,
            goal_radius: d.goal_radius,
            action_scale: d.action_scale,
            dt: d.dt,
            friction: d.friction,
            control_cost: d.control_cost,
            bounds_min: d.bounds.min,
            bounds_max: d.bounds.max,
            terminate_at_goal: d.terminate_at_goal,
        }
    }
}

/// A wrapper layer. Dynamics perturbations are applied to the base model
/// first (in listed order), then trembling-hand layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WrapperSpec {
    Tremble {
        p: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Dynamics {
        magnitude: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Serializable environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKindSpec,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gridworld: Option<GridworldSpec>,
    #[serde(default)]
    pub point_mass: Option<PointMassSpec>,
    #[serde(default)]
    pub wrappers: Vec<WrapperSpec>,
}

impl EnvSpec {
    pub fn gridworld(spec: GridworldSpec, horizon: usize) -> Self {
        Self {
            kind: EnvKindSpec::Gridworld,
            horizon: Some(horizon),
            seed: 0,
            gridworld: Some(spec),
            point_mass: None,
            wrappers: Vec::new(),
        }
    }

    pub fn point_mass(spec: PointMassSpec, horizon: usize) -> Self {
        Self {
            kind: EnvKindSpec::PointMass,
            horizon: Some(horizon),
            seed: 0,
            gridworld: None,
            point_mass: Some(spec),
            wrappers: Vec::new(),
        }
    }

    pub fn with_wrapper(mut self, wrapper: WrapperSpec) -> Self {
        self.wrappers.push(wrapper);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The unwrapped base environment.
    pub fn build_base(&self) -> Result<EnvModel> {
        match self.kind {
            EnvKindSpec::Gridworld => {
                let g = self.gridworld.clone().unwrap_or_default();
                let mut world = Gridworld::new(
                    g.width,
                    g.height,
                    Cell::new(g.goal[0], g.goal[1]),
                    g.step_penalty,
                    g.goal_reward,
                )
                .with_horizon(self.horizon.unwrap_or(Gridworld::DEFAULT_HORIZON));
                if let Some([c, r]) = g.start {
                    world = world.with_start(Cell::new(c, r));
                }
                Ok(EnvModel::Tabular(world.build()?))
            }
            EnvKindSpec::PointMass => {
                let p = self.point_mass.clone().unwrap_or_default();
                let d = PointMassEnv::default();
                let env = PointMassEnv {
                    start: p.start,
                    start_jitter: p.start_jitter,
                    goal: p.goal,
                    goal_radius: p.goal_radius,
                    action_scale: p.action_scale,
                    dt: p.dt,
                    friction: p.friction,
                    control_cost: p.control_cost,
                    horizon: self.horizon.unwrap_or(d.horizon),
                    bounds: Bounds {
                        min: p.bounds_min,
                        max: p.bounds_max,
                    },
                    terminate_at_goal: p.terminate_at_goal,
                };
                if env.horizon == 0 {
                    return Err(Error::config("horizon", "must be at least 1"));
                }
                if !env.bounds.contains(env.start) || !env.bounds.contains(env.goal) {
                    return Err(Error::config("point_mass", "start and goal must lie inside bounds"));
                }
                Ok(EnvModel::PointMass(env))
            }
        }
    }

    /// The base environment with every dynamics layer applied, ignoring
    /// trembling-hand layers.
    pub fn build_dynamics(&self) -> Result<EnvModel> {
        let mut model = self.build_base()?;
        for (i, w) in self.wrappers.iter().enumerate() {
            if let WrapperSpec::Dynamics { magnitude, seed } = w {
                let seed = seed.unwrap_or_else(|| derive_seed(self.seed, &[i as u64]));
                model = sample_dynamics_variant(&model, *magnitude, seed)?.into_model();
            }
        }
        Ok(model)
    }

    pub fn build(&self) -> Result<Arc<dyn Environment>> {
        let mut env: Arc<dyn Environment> = Arc::new(self.build_dynamics()?);
        for (i, w) in self.wrappers.iter().enumerate() {
            if let WrapperSpec::Tremble { p, seed } = w {
                let seed = seed.unwrap_or_else(|| derive_seed(self.seed, &[i as u64]));
                env = Arc::new(TrembleWrapper::new(env, *p, seed)?);
            }
        }
        Ok(env)
    }
}
