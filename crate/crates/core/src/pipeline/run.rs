use std::sync::Arc;

use super::{ExperimentKind, ExperimentSpec, RunRecord};
use crate::env::{rollout_batch, sample_dynamics_variant, Environment, GridLayout, TrembleWrapper, Trajectory};
use crate::evo::{evolve_shaping, Evolution};
use crate::irl::{reward_correlation, run_irl, write_diagnostics_csv, IrlOutcome};
use crate::policy::{
    auc, behavioural_cloning, evaluate, exact_return, pg_train, value_iteration, Critic, ParameterFile, Policy,
    TrainingCurve,
};
use crate::reward::RewardSource;
use crate::rng::derive_seed;
use crate::shaping::Potential;
use crate::stats::{mean, pearson};
use crate::{Error, Result};

pub const UNSHAPED: &str = "unshaped";
pub const EVOLVED: &str = "evolved";
pub const V_STAR: &str = "v-star";
pub const EXPERT_CRITIC: &str = "expert-critic";
pub const IRL_PP: &str = "irl++";
pub const VANILLA_IRL: &str = "vanilla-irl";
pub const EVIL: &str = "evil";
pub const BC: &str = "bc";

const EXPERT_STREAM: u64 = 0xe1;
const DEMO_STREAM: u64 = 0xe2;
const EVOLVE_STREAM: u64 = 0xe3;
const IRL_STREAM: u64 = 0xe4;
const VANILLA_STREAM: u64 = 0xe5;
const RETRAIN_STREAM: u64 = 0xe6;
const EVAL_STREAM: u64 = 0xe7;
const TREMBLE_STREAM: u64 = 0xe8;
const DYNAMICS_STREAM: u64 = 0xe9;
const BC_STREAM: u64 = 0xea;

/// Monte Carlo episodes for returns that have no exact evaluation.
pub const EVAL_EPISODES: usize = 32;

/// One comparison arm for one seed.
#[derive(Clone, Debug)]
pub struct MethodResult {
    pub record: RunRecord,
    /// Ground-truth retraining curve averaged over targets and repeats.
    pub curve: Option<TrainingCurve>,
}

/// Named grid of per-cell values.
#[derive(Clone, Debug)]
pub struct Grid {
    pub name: String,
    pub values: Vec<f64>,
    pub layout: GridLayout,
}

#[derive(Clone, Debug)]
pub struct SeedOutput {
    pub seed: u64,
    pub methods: Vec<MethodResult>,
    pub grids: Vec<Grid>,
    /// `(file name, JSON)` parameter files.
    pub models: Vec<(String, String)>,
    /// `(file name, CSV)` per-seed diagnostic tables.
    pub tables: Vec<(String, String)>,
}

impl SeedOutput {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            methods: Vec::new(),
            grids: Vec::new(),
            models: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.record.method == name)
    }
}

/// An environment a policy is retrained or evaluated in.
struct Target {
    env: Arc<dyn Environment>,
    expert_return: f64,
}

/// Lowest return counted as reaching `fraction` of `reference`; also
/// meaningful for negative references.
pub fn threshold(reference: f64, fraction: f64) -> f64 {
    reference - (1.0 - fraction) * reference.abs()
}

fn policy_return(policy: &Policy, env: &dyn Environment, seed: u64) -> Result<f64> {
    if env.tabular().is_some() {
        exact_return(policy, env, &RewardSource::GroundTruth)
    } else {
        evaluate(policy, env, &RewardSource::GroundTruth, EVAL_EPISODES, derive_seed(seed, &[EVAL_STREAM]))
    }
}

/// Pointwise mean of curves with the same number of updates.
pub fn average_curves(name: &str, curves: &[TrainingCurve]) -> Result<TrainingCurve> {
    let first = curves.first().ok_or(Error::Empty("curves"))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Degenerate("curves differ in length".into()));
    }
    let points = (0..first.len()).map(|i| {
        let xs: Vec<f64> = curves.iter().map(|c| c.points()[i].interactions as f64).collect();
        let ys: Vec<f64> = curves.iter().map(|c| c.points()[i].performance).collect();
        (mean(&xs).round() as u64, mean(&ys))
    });
    TrainingCurve::from_points(name, points)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    source: Arc<dyn Environment>,
    expert: Policy,
}

impl Context<'_> {
    fn stream(&self, path: &[u64]) -> u64 {
        derive_seed(self.seed, path)
    }

    fn demos(&self) -> Result<Vec<Trajectory>> {
        rollout_batch(
            self.source.as_ref(),
            &self.expert,
            &RewardSource::GroundTruth,
            self.spec.demos.count,
            self.stream(&[DEMO_STREAM]),
        )
    }

    fn target(&self, env: Arc<dyn Environment>) -> Result<Target> {
        let expert_return = match env.tabular() {
            Some(view) => {
                let best = Policy::Deterministic(value_iteration(view.mdp).policy());
                exact_return(&best, env.as_ref(), &RewardSource::GroundTruth)?
            }
            None => policy_return(&self.expert, env.as_ref(), self.seed)?,
        };
        Ok(Target { env, expert_return })
    }

    fn targets(&self) -> Result<Vec<Target>> {
        let spec = self.spec;
        match spec.kind {
            ExperimentKind::TransferTremble => {
                let env = TrembleWrapper::new(
                    self.source.clone(),
                    spec.transfer.tremble,
                    self.stream(&[TREMBLE_STREAM]),
                )?;
                Ok(vec![self.target(Arc::new(env))?])
            }
            ExperimentKind::TransferDynamics => {
                let base = spec.env.build_dynamics()?;
                (0..spec.transfer.variants as u64)
                    .map(|v| {
                        let seed = self.stream(&[DYNAMICS_STREAM, v]);
                        let variant = sample_dynamics_variant(&base, spec.transfer.dynamics_magnitude, seed)?;
                        self.target(Arc::new(variant.into_model()))
                    })
                    .collect()
            }
            _ => Ok(vec![self.target(self.source.clone())?]),
        }
    }

    /// Retrains from scratch on `reward` in every target, `retrain_repeats`
    /// times each. Every method of a seed uses the same retraining seeds.
    fn retrain(&self, method: &str, reward: &RewardSource, targets: &[Target]) -> Result<MethodResult> {
        let config = self.spec.retrain_config();
        let repeats = self.spec.retrain_repeats;
        let runs = crate::par::map_indexed(targets.len() * repeats, |i| -> Result<(TrainingCurve, f64)> {
            let (v, r) = (i / repeats, i % repeats);
            let t = &targets[v];
            let seed = self.stream(&[RETRAIN_STREAM, v as u64, r as u64]);
            let out = pg_train(t.env.as_ref(), reward, &config, seed, None)?;
            let final_return = policy_return(&out.policy, t.env.as_ref(), seed)?;
            Ok((out.true_curve, final_return))
        });
        let mut curves = Vec::with_capacity(runs.len());
        let mut finals = Vec::with_capacity(runs.len());
        for run in runs {
            let (c, f) = run?;
            curves.push(c);
            finals.push(f);
        }
        let curve = average_curves(method, &curves)?;
        let final_return = mean(&finals);
        let expert_return = mean(&targets.iter().map(|t| t.expert_return).collect::<Vec<_>>());
        let record = RunRecord {
            method: method.to_string(),
            seed: self.seed,
            final_return: Some(final_return),
            expert_return: Some(expert_return),
            auc: Some(auc(&curve)?),
            interactions_to_threshold: curve.interactions_to(threshold(expert_return, 0.9)),
            interactions_to_own_final: curve.interactions_to(threshold(final_return, 0.9)),
            correlation: None,
        };
        Ok(MethodResult {
            record,
            curve: Some(curve),
        })
    }

    fn clone_expert(&self, demos: &[Trajectory], targets: &[Target]) -> Result<MethodResult> {
        let class = self.spec.retrain_config().policy;
        let policy = behavioural_cloning(demos, self.source.as_ref(), &class, &self.spec.bc, self.stream(&[BC_STREAM]))?;
        let finals = targets
            .iter()
            .map(|t| policy_return(&policy, t.env.as_ref(), self.seed))
            .collect::<Result<Vec<_>>>()?;
        let expert = mean(&targets.iter().map(|t| t.expert_return).collect::<Vec<_>>());
        Ok(MethodResult {
            record: RunRecord {
                final_return: Some(mean(&finals)),
                expert_return: Some(expert),
                ..RunRecord::empty(BC, self.seed)
            },
            curve: None,
        })
    }

    fn evolve(&self, base: &RewardSource) -> Result<Evolution> {
        evolve_shaping(self.source.as_ref(), base, &self.spec.es_config(), self.stream(&[EVOLVE_STREAM]))
    }

    fn v_star(&self) -> Option<Vec<f64>> {
        self.source.tabular().map(|v| value_iteration(v.mdp).potential_table())
    }

    fn layout(&self) -> Option<GridLayout> {
        self.source.tabular().and_then(|v| v.mdp.layout().cloned())
    }

    fn irl(&self, demos: &[Trajectory], config: &crate::irl::IrlConfig, stream: u64) -> Result<IrlOutcome> {
        run_irl(self.source.as_ref(), demos, config, self.stream(&[stream]))
    }

    fn irl_correlation(&self, irl: &IrlOutcome) -> Option<f64> {
        reward_correlation(&irl.ensemble, self.source.as_ref(), &irl.visited).ok()
    }
}

fn potential_correlation(potential: &Potential, env: &dyn Environment, v_star: &[f64]) -> Option<f64> {
    pearson(&potential.table(env).ok()?, v_star).ok()
}

fn critic_potential(critic: Critic) -> Potential {
    match critic {
        Critic::Table(v) => Potential::Table(v),
        Critic::Net(net) => Potential::Net(net),
    }
}

fn model_json<T: serde::Serialize + serde::de::DeserializeOwned>(model: T) -> Result<String> {
    ParameterFile::new(model).to_json()
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Degenerate(e.to_string()))
}

fn record_irl(out: &mut SeedOutput, name: &str, irl: &IrlOutcome) -> Result<()> {
    let seed = out.seed;
    out.models
        .push((format!("reward_{}_seed{seed}.json", slug(name)), model_json(irl.ensemble.clone())?));
    out.tables.push((
        format!("irl_diagnostics_{}_seed{seed}.csv", slug(name)),
        csv_text(|b| write_diagnostics_csv(&irl.diagnostics, b))?,
    ));
    Ok(())
}

fn record_evolution(out: &mut SeedOutput, name: &str, evo: &Evolution) -> Result<()> {
    let seed = out.seed;
    out.models
        .push((format!("potential_{}_seed{seed}.json", slug(name)), model_json(evo.potential.clone())?));
    out.tables.push((
        format!("es_history_{}_seed{seed}.csv", slug(name)),
        csv_text(|b| evo.state.write_history_csv(b))?,
    ));
    Ok(())
}

/// File-name form of a method name.
pub fn slug(method: &str) -> String {
    method.replace("++", "-pp").replace(|c: char| !c.is_ascii_alphanumeric() && c != '-', "_")
}

/// Runs every arm of `spec.kind` for one seed.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedOutput> {
    let source = spec.env.build()?;
    let expert = match source.tabular() {
        Some(view) => Policy::Deterministic(value_iteration(view.mdp).policy()),
        None => {
            let s = derive_seed(seed, &[EXPERT_STREAM]);
            pg_train(source.as_ref(), &RewardSource::GroundTruth, &spec.expert_config(), s, None)?.policy
        }
    };
    let cx = Context {
        spec,
        seed,
        source,
        expert,
    };
    let mut out = SeedOutput::new(seed);
    let gt = RewardSource::GroundTruth;
    match spec.kind {
        ExperimentKind::RlShaping => {
            let targets = cx.targets()?;
            let evo = cx.evolve(&gt)?;
            record_evolution(&mut out, EVOLVED, &evo)?;
            let v_star = cx.v_star();
            if spec.methods.unshaped {
                out.methods.push(cx.retrain(UNSHAPED, &gt, &targets)?);
            }
            let mut evolved = cx.retrain(EVOLVED, &RewardSource::shaped(gt.clone(), evo.potential.clone()), &targets)?;
            evolved.record.correlation = v_star
                .as_deref()
                .and_then(|v| potential_correlation(&evo.potential, cx.source.as_ref(), v));
            out.methods.push(evolved);
            if let (true, Some(v)) = (spec.methods.v_star, v_star) {
                let shaped = RewardSource::shaped(gt.clone(), Potential::Table(v));
                out.methods.push(cx.retrain(V_STAR, &shaped, &targets)?);
            }
            if spec.methods.expert_critic {
                let s = cx.stream(&[EXPERT_STREAM]);
                let run = pg_train(cx.source.as_ref(), &gt, &spec.expert_config(), s, None)?;
                let shaped = RewardSource::shaped(gt.clone(), critic_potential(run.critic));
                out.methods.push(cx.retrain(EXPERT_CRITIC, &shaped, &targets)?);
            }
        }
        ExperimentKind::GridworldHeatmap => {
            let layout = cx
                .layout()
                .ok_or_else(|| Error::config("env.kind", "gridworld-heatmap needs a gridworld"))?;
            let evo = cx.evolve(&gt)?;
            record_evolution(&mut out, EVOLVED, &evo)?;
            let v_star = cx.v_star().expect("gridworlds are tabular");
            let table = evo.potential.table(cx.source.as_ref())?;
            out.methods.push(MethodResult {
                record: RunRecord {
                    correlation: pearson(&table, &v_star).ok(),
                    ..RunRecord::empty(EVOLVED, seed)
                },
                curve: None,
            });
            out.grids.push(Grid {
                name: format!("evolved_potential_seed{seed}"),
                values: table,
                layout,
            });
            out.grids.push(Grid {
                name: "v_star".into(),
                values: v_star,
                layout,
            });
        }
        ExperimentKind::IrlRetrain | ExperimentKind::EvilRetrain => {
            let demos = cx.demos()?;
            let targets = cx.targets()?;
            let irl_config = spec.irl_config();
            let irl = cx.irl(&demos, &irl_config, IRL_STREAM)?;
            record_irl(&mut out, IRL_PP, &irl)?;
            let mut arm = cx.retrain(IRL_PP, &irl.reward(), &targets)?;
            arm.record.correlation = cx.irl_correlation(&irl);
            out.methods.push(arm);
            if spec.kind == ExperimentKind::EvilRetrain {
                let evo = cx.evolve(&irl.reward())?;
                record_evolution(&mut out, EVIL, &evo)?;
                let shaped = RewardSource::shaped(irl.reward(), evo.potential.clone());
                out.methods.push(cx.retrain(EVIL, &shaped, &targets)?);
            }
            if spec.methods.vanilla_irl {
                let vanilla = cx.irl(&demos, &irl_config.clone().vanilla(), VANILLA_STREAM)?;
                record_irl(&mut out, VANILLA_IRL, &vanilla)?;
                let mut arm = cx.retrain(VANILLA_IRL, &vanilla.reward(), &targets)?;
                arm.record.correlation = cx.irl_correlation(&vanilla);
                out.methods.push(arm);
            }
            if spec.kind == ExperimentKind::EvilRetrain && spec.methods.bc {
                out.methods.push(cx.clone_expert(&demos, &targets)?);
            }
        }
        ExperimentKind::TransferTremble | ExperimentKind::TransferDynamics => {
            let demos = cx.demos()?;
            let targets = cx.targets()?;
            let irl = cx.irl(&demos, &spec.irl_config(), IRL_STREAM)?;
            record_irl(&mut out, IRL_PP, &irl)?;
            let evo = cx.evolve(&irl.reward())?;
            record_evolution(&mut out, EVIL, &evo)?;
            let shaped = RewardSource::shaped(irl.reward(), evo.potential.clone());
            out.methods.push(cx.retrain(EVIL, &shaped, &targets)?);
            let mut arm = cx.retrain(IRL_PP, &irl.reward(), &targets)?;
            arm.record.correlation = cx.irl_correlation(&irl);
            out.methods.push(arm);
            if spec.methods.bc {
                out.methods.push(cx.clone_expert(&demos, &targets)?);
            }
        }
        ExperimentKind::Ablation => {
            let demos = cx.demos()?;
            let targets = cx.targets()?;
            let base = spec.irl_config();
            for variant in &spec.methods.ablations {
                let name = variant.as_str();
                let irl = cx.irl(&demos, &variant.apply(&base), IRL_STREAM)?;
                record_irl(&mut out, name, &irl)?;
                let mut arm = cx.retrain(name, &irl.reward(), &targets)?;
                arm.record.correlation = cx.irl_correlation(&irl);
                out.methods.push(arm);
            }
        }
    }
    Ok(out)
}

/// Runs every seed of `spec`, fanning seeds out across workers. Results
/// come back in seed-list order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Result<SeedOutput>>> {
    spec.validate()?;
    Ok(crate::par::map_indexed(spec.seeds.len(), |i| run_seed(spec, spec.seeds[i])))
}
