use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvKindSpec, EnvSpec};
use crate::evo::EsConfig;
use crate::irl::IrlConfig;
use crate::policy::{BcConfig, PgConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RlShaping,
    IrlRetrain,
    EvilRetrain,
    TransferTremble,
    TransferDynamics,
    GridworldHeatmap,
    Ablation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::RlShaping,
        ExperimentKind::IrlRetrain,
        ExperimentKind::EvilRetrain,
        ExperimentKind::TransferTremble,
        ExperimentKind::TransferDynamics,
        ExperimentKind::GridworldHeatmap,
        ExperimentKind::Ablation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::RlShaping => "rl-shaping",
            ExperimentKind::IrlRetrain => "irl-retrain",
            ExperimentKind::EvilRetrain => "evil-retrain",
            ExperimentKind::TransferTremble => "transfer-tremble",
            ExperimentKind::TransferDynamics => "transfer-dynamics",
            ExperimentKind::GridworldHeatmap => "gridworld-heatmap",
            ExperimentKind::Ablation => "ablation",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == text)
            .ok_or_else(|| Error::config("kind", format!("unrecognised experiment kind `{text}`")))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// IRL variants compared by the ablation experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoEnsemble,
    NoBuffer,
    NoResets,
    NoGradientPenalty,
    Vanilla,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Full,
        Ablation::NoEnsemble,
        Ablation::NoBuffer,
        Ablation::NoResets,
        Ablation::NoGradientPenalty,
        Ablation::Vanilla,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoEnsemble => "no-ensemble",
            Ablation::NoBuffer => "no-buffer",
            Ablation::NoResets => "no-resets",
            Ablation::NoGradientPenalty => "no-gradient-penalty",
            Ablation::Vanilla => "vanilla",
        }
    }

    pub fn apply(&self, config: &IrlConfig) -> IrlConfig {
        let mut c = config.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoEnsemble => c.ensemble_size = 1,
            Ablation::NoBuffer => c.buffer_capacity = Some(1),
            Ablation::NoResets => c.reset = crate::irl::ResetSchedule::NEVER,
            Ablation::NoGradientPenalty => c.regularisation.gradient_penalty = 0.0,
            Ablation::Vanilla => c = c.vanilla(),
        }
        c
    }
}

/// Optional comparison arms. Arms a kind does not use are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodToggles {
    /// Plain retraining on the base reward (rl-shaping).
    pub unshaped: bool,
    /// Oracle `V*` potential, tabular only (rl-shaping).
    pub v_star: bool,
    /// The critic of a ground-truth training run as potential (rl-shaping).
    pub expert_critic: bool,
    /// Single-discriminator IRL (irl-retrain, evil-retrain).
    pub vanilla_irl: bool,
    /// Behavioural cloning (evil-retrain and transfer kinds).
    pub bc: bool,
    pub ablations: Vec<Ablation>,
}

impl Default for MethodToggles {
    fn default() -> Self {
        Self {
            unshaped: true,
            v_star: true,
            expert_critic: false,
            vanilla_irl: true,
            bc: true,
            ablations: Ablation::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSpec {
    pub count: usize,
    /// Ground-truth training run for the expert when no exact oracle
    /// exists. `None` uses the environment's preset with 300 updates.
    pub expert_training: Option<PgConfig>,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self {
            count: 100,
            expert_training: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSpec {
    pub tremble: f64,
    pub dynamics_magnitude: f64,
    pub variants: usize,
}

impl Default for TransferSpec {
    fn default() -> Self {
        Self {
            tremble: 0.05,
            dynamics_magnitude: 0.3,
            variants: 10,
        }
    }
}

/// One experiment: what to run, on which environment, for which seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub env: EnvSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub methods: MethodToggles,
    /// Retraining runs per seed and target; their curves are averaged.
    #[serde(default = "one")]
    pub retrain_repeats: usize,
    #[serde(default)]
    pub demos: DemoSpec,
    #[serde(default)]
    pub transfer: TransferSpec,
    #[serde(default)]
    pub retrain: Option<PgConfig>,
    #[serde(default)]
    pub es: Option<EsConfig>,
    #[serde(default)]
    pub irl: Option<IrlConfig>,
    #[serde(default)]
    pub bc: BcConfig,
}

fn one() -> usize {
    1
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, env: EnvSpec, seeds: Vec<u64>) -> Self {
        Self {
            kind,
            env,
            seeds,
            out: None,
            methods: MethodToggles::default(),
            retrain_repeats: 1,
            demos: DemoSpec::default(),
            transfer: TransferSpec::default(),
            retrain: None,
            es: None,
            irl: None,
            bc: BcConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML rendering, as lowercase hex.
    pub fn config_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn retrain_config(&self) -> PgConfig {
        self.retrain.clone().unwrap_or_else(|| match self.env.kind {
            EnvKindSpec::Gridworld => PgConfig::tabular(),
            EnvKindSpec::PointMass => PgConfig::point_mass(),
        })
    }

    pub fn es_config(&self) -> EsConfig {
        self.es.clone().unwrap_or_else(|| match self.env.kind {
            EnvKindSpec::Gridworld => EsConfig::gridworld(),
            EnvKindSpec::PointMass => EsConfig::point_mass(),
        })
    }

    pub fn irl_config(&self) -> IrlConfig {
        self.irl.clone().unwrap_or_else(|| match self.env.kind {
            EnvKindSpec::Gridworld => IrlConfig::gridworld(),
            EnvKindSpec::PointMass => IrlConfig::point_mass(),
        })
    }

    pub fn expert_config(&self) -> PgConfig {
        self.demos
            .expert_training
            .clone()
            .unwrap_or_else(|| self.retrain_config().with_updates(300))
    }

    /// The same spec with every preset written out, so the stored copy
    /// does not depend on this version's defaults.
    pub fn resolved(&self) -> Self {
        let mut spec = self.clone();
        spec.retrain = Some(self.retrain_config());
        spec.es = Some(self.es_config());
        spec.irl = Some(self.irl_config());
        spec.demos.expert_training = Some(self.expert_config());
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "must not repeat"));
        }
        if self.retrain_repeats == 0 {
            return Err(Error::config("retrain_repeats", "must be at least 1"));
        }
        if self.demos.count == 0 {
            return Err(Error::config("demos.count", "must be at least 1"));
        }
        let t = &self.transfer;
        if !(0.0..=1.0).contains(&t.tremble) {
            return Err(Error::config("transfer.tremble", "must lie in [0, 1]"));
        }
        if !(t.dynamics_magnitude >= 0.0) {
            return Err(Error::config("transfer.dynamics_magnitude", "must be non-negative"));
        }
        if t.variants == 0 {
            return Err(Error::config("transfer.variants", "must be at least 1"));
        }
        if self.kind == ExperimentKind::GridworldHeatmap && self.env.kind != EnvKindSpec::Gridworld {
            return Err(Error::config("env.kind", "gridworld-heatmap needs a gridworld"));
        }
        if self.kind == ExperimentKind::Ablation && self.methods.ablations.is_empty() {
            return Err(Error::config("methods.ablations", "must list at least one variant"));
        }
        self.retrain_config().validate().map_err(|e| prefix("retrain", e))?;
        self.es_config().validate().map_err(|e| prefix("es", e))?;
        self.irl_config().validate().map_err(|e| prefix("irl", e))?;
        if self.bc.steps == 0 || !(self.bc.learning_rate > 0.0) {
            return Err(Error::config("bc", "steps and learning_rate must be positive"));
        }
        self.env.build().map_err(|e| prefix("env", e))?;
        Ok(())
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}
