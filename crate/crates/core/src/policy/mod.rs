//! Policies, critics, the policy-gradient trainer and exact tabular oracles.

mod bc;
mod curve;
mod evaluate;
mod oracle;
mod pg;

use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace, Environment, State};
use crate::nn::Mlp;
use crate::rng::{sample_categorical, standard_normal, Rng};
use crate::{Error, Result};

pub use bc::{behavioural_cloning, BcConfig};
pub use curve::{auc, CurvePoint, TrainingCurve};
pub use evaluate::{evaluate, exact_return, state_visitation};
pub use oracle::{soft_value_iteration, value_iteration, OptimalSolution, SoftSolution};
pub use pg::{pg_train, pg_train_truncated, PgConfig, PgLearner, PgOutcome, UpdateStats};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log_prob`, `entropy` of a categorical distribution and the gradients of
/// both with respect to the logits.
fn categorical_terms(logits: &[f64], action: usize) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let probs = softmax(logits);
    let log_probs: Vec<f64> = probs.iter().map(|p| p.max(1e-300).ln()).collect();
    let entropy: f64 = -probs.iter().zip(&log_probs).map(|(p, l)| p * l).sum::<f64>();
    let d_logp: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, p)| if i == action { 1.0 - p } else { -p })
        .collect();
    let d_ent: Vec<f64> = probs
        .iter()
        .zip(&log_probs)
        .map(|(p, l)| -p * (l + entropy))
        .collect();
    (log_probs[action], entropy, d_logp, d_ent)
}

/// Softmax over a per-state logit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularSoftmaxPolicy {
    pub num_states: usize,
    pub num_actions: usize,
    /// `logits[s * A + a]`.
    pub logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            logits: vec![0.0; num_states * num_actions],
        }
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        softmax(&self.logits[s * self.num_actions..(s + 1) * self.num_actions])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub num_actions: usize,
    pub actions: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpHead {
    /// Logits over `n` actions.
    Categorical(usize),
    /// Mean of a diagonal Gaussian with state-independent log-std.
    Gaussian(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub net: Mlp,
    pub head: MlpHead,
    pub log_std: Vec<f64>,
}

/// Which policy family to initialise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyClass {
    Tabular,
    Mlp { hidden: Vec<usize>, init_log_std: f64 },
}

impl Default for PolicyClass {
    fn default() -> Self {
        PolicyClass::Tabular
    }
}

impl PolicyClass {
    /// Tabular for environments with enumerable states, otherwise a small
    /// tanh MLP.
    pub fn for_env(env: &dyn Environment) -> Self {
        if env.num_states().is_some() {
            PolicyClass::Tabular
        } else {
            PolicyClass::Mlp {
                hidden: vec![64, 64],
                init_log_std: -0.5,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Tabular(TabularSoftmaxPolicy),
    Deterministic(DeterministicPolicy),
    Mlp(MlpPolicy),
}

impl Policy {
    pub fn init(env: &dyn Environment, class: &PolicyClass, rng: &mut Rng) -> Result<Self> {
        match class {
            PolicyClass::Tabular => {
                let ns = env
                    .num_states()
                    .ok_or_else(|| Error::Unsupported("tabular policy on a continuous environment".into()))?;
                let ActionSpace::Discrete(na) = env.action_space() else {
                    return Err(Error::Unsupported("tabular policy needs discrete actions".into()));
                };
                Ok(Policy::Tabular(TabularSoftmaxPolicy::uniform(ns, na)))
            }
            PolicyClass::Mlp { hidden, init_log_std } => {
                let mut sizes = vec![env.feature_dim()];
                sizes.extend(hidden);
                let (head, out) = match env.action_space() {
                    ActionSpace::Discrete(n) => (MlpHead::Categorical(n), n),
                    ActionSpace::Continuous(d) => (MlpHead::Gaussian(d), d),
                };
                sizes.push(out);
                let log_std = match head {
                    MlpHead::Gaussian(d) => vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); d],
                    MlpHead::Categorical(_) => Vec::new(),
                };
                Ok(Policy::Mlp(MlpPolicy {
                    net: Mlp::new(&sizes, 0.01, rng),
                    head,
                    log_std,
                }))
            }
        }
    }

    pub fn check_compatible(&self, env: &dyn Environment) -> Result<()> {
        let space = env.action_space();
        let ok = match self {
            Policy::Tabular(p) => {
                env.num_states() == Some(p.num_states) && space == ActionSpace::Discrete(p.num_actions)
            }
            Policy::Deterministic(p) => {
                env.num_states() == Some(p.actions.len()) && space == ActionSpace::Discrete(p.num_actions)
            }
            Policy::Mlp(p) => {
                let head_ok = match p.head {
                    MlpHead::Categorical(n) => space == ActionSpace::Discrete(n),
                    MlpHead::Gaussian(d) => space == ActionSpace::Continuous(d),
                };
                head_ok && p.net.input_dim() == env.feature_dim()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!(
                "policy does not fit environment with action space {space:?}"
            )))
        }
    }

    /// Action probabilities at a tabular state (discrete policies only).
    pub fn probs(&self, env: &dyn Environment, state: &State) -> Option<Vec<f64>> {
        match self {
            Policy::Tabular(p) => Some(p.probs(state.cell()?)),
            Policy::Deterministic(p) => {
                let mut probs = vec![0.0; p.num_actions];
                probs[p.actions[state.cell()?]] = 1.0;
                Some(probs)
            }
            Policy::Mlp(p) => match p.head {
                MlpHead::Categorical(_) => Some(softmax(&p.net.forward(&env.features(state)))),
                MlpHead::Gaussian(_) => None,
            },
        }
    }

    pub fn sample(&self, env: &dyn Environment, state: &State, rng: &mut Rng) -> Action {
        match self {
            Policy::Deterministic(p) => Action::Discrete(p.actions[state.cell().expect("tabular state")]),
            Policy::Mlp(MlpPolicy {
                net,
                head: MlpHead::Gaussian(_),
                log_std,
            }) => {
                let mean = net.forward(&env.features(state));
                let mut u = [0.0; 2];
                for (i, ui) in u.iter_mut().enumerate().take(mean.len()) {
                    *ui = mean[i] + log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp() * standard_normal(rng);
                }
                Action::Continuous(u)
            }
            _ => {
                let probs = self.probs(env, state).expect("discrete policy");
                Action::Discrete(sample_categorical(&probs, rng))
            }
        }
    }

    /// Most likely action (the mean for Gaussian policies).
    pub fn greedy(&self, env: &dyn Environment, state: &State) -> Action {
        match self {
            Policy::Deterministic(p) => Action::Discrete(p.actions[state.cell().expect("tabular state")]),
            Policy::Mlp(MlpPolicy {
                net,
                head: MlpHead::Gaussian(_),
                ..
            }) => {
                let mean = net.forward(&env.features(state));
                Action::Continuous([mean[0], mean.get(1).copied().unwrap_or(0.0)])
            }
            _ => {
                let probs = self.probs(env, state).expect("discrete policy");
                let mut best = 0;
                for (a, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = a;
                    }
                }
                Action::Discrete(best)
            }
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Policy::Tabular(p) => p.logits.len(),
            Policy::Deterministic(_) => 0,
            Policy::Mlp(p) => p.net.params().len() + p.log_std.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Policy::Tabular(p) => p.logits.clone(),
            Policy::Deterministic(_) => Vec::new(),
            Policy::Mlp(p) => {
                let mut v = p.net.params().to_vec();
                v.extend(&p.log_std);
                v
            }
        }
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        match self {
            Policy::Tabular(p) => p.logits.copy_from_slice(params),
            Policy::Deterministic(_) => {}
            Policy::Mlp(p) => {
                let n = p.net.params().len();
                p.net.params_mut().copy_from_slice(&params[..n]);
                for (l, v) in p.log_std.iter_mut().zip(&params[n..]) {
                    *l = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }
            }
        }
    }

    /// Computes `log pi(action | state)` and the entropy at `state`, asks
    /// `coefs` for weights `(c_logp, c_entropy)` and accumulates
    /// `c_logp * grad log pi + c_entropy * grad H` into `grad`.
    pub fn accumulate_grad<F>(
        &self,
        env: &dyn Environment,
        state: &State,
        action: &Action,
        grad: &mut [f64],
        coefs: F,
    ) -> (f64, f64)
    where
        F: FnOnce(f64, f64) -> (f64, f64),
    {
        match self {
            Policy::Deterministic(_) => panic!("deterministic policies are not trainable"),
            Policy::Tabular(p) => {
                let s = state.cell().expect("tabular state");
                let a = action.discrete().expect("discrete action");
                let na = p.num_actions;
                let (logp, ent, d_logp, d_ent) = categorical_terms(&p.logits[s * na..(s + 1) * na], a);
                let (c_logp, c_ent) = coefs(logp, ent);
                for i in 0..na {
                    grad[s * na + i] += c_logp * d_logp[i] + c_ent * d_ent[i];
                }
                (logp, ent)
            }
            Policy::Mlp(p) => {
                let x = env.features(state);
                let trace = p.net.forward_trace(&x);
                let out = trace.output();
                let n_net = p.net.params().len();
                match p.head {
                    MlpHead::Categorical(_) => {
                        let a = action.discrete().expect("discrete action");
                        let (logp, ent, d_logp, d_ent) = categorical_terms(out, a);
                        let (c_logp, c_ent) = coefs(logp, ent);
                        let d_out: Vec<f64> = d_logp
                            .iter()
                            .zip(&d_ent)
                            .map(|(l, e)| c_logp * l + c_ent * e)
                            .collect();
                        p.net.backward(&trace, &d_out, Some(&mut grad[..n_net]));
                        (logp, ent)
                    }
                    MlpHead::Gaussian(d) => {
                        let Action::Continuous(u) = action else {
                            panic!("continuous action expected")
                        };
                        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
                        let mut logp = 0.0;
                        let mut ent = 0.0;
                        let mut z2 = vec![0.0; d];
                        let mut d_mean = vec![0.0; d];
                        for i in 0..d {
                            let ls = p.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                            let std = ls.exp();
                            let z = (u[i] - out[i]) / std;
                            z2[i] = z * z;
                            logp += -0.5 * z * z - ls - half_log_2pi;
                            ent += ls + 0.5 + half_log_2pi;
                            d_mean[i] = z / std;
                        }
                        let (c_logp, c_ent) = coefs(logp, ent);
                        let d_out: Vec<f64> = d_mean.iter().map(|g| c_logp * g).collect();
                        p.net.backward(&trace, &d_out, Some(&mut grad[..n_net]));
                        for i in 0..d {
                            grad[n_net + i] += c_logp * (z2[i] - 1.0) + c_ent;
                        }
                        (logp, ent)
                    }
                }
            }
        }
    }

    pub fn log_prob(&self, env: &dyn Environment, state: &State, action: &Action) -> f64 {
        match self {
            Policy::Deterministic(p) => {
                if Some(p.actions[state.cell().expect("tabular state")]) == action.discrete() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            _ => {
                let mut scratch = vec![0.0; self.num_params()];
                self.accumulate_grad(env, state, action, &mut scratch, |_, _| (0.0, 0.0)).0
            }
        }
    }
}

/// State-value approximator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Critic {
    Table(Vec<f64>),
    Net(Mlp),
}

impl Critic {
    pub fn init(env: &dyn Environment, class: &PolicyClass, rng: &mut Rng) -> Self {
        match (class, env.num_states()) {
            (PolicyClass::Tabular, Some(n)) => Critic::Table(vec![0.0; n]),
            (PolicyClass::Mlp { hidden, .. }, _) => {
                let mut sizes = vec![env.feature_dim()];
                sizes.extend(hidden);
                sizes.push(1);
                Critic::Net(Mlp::new(&sizes, 1.0, rng))
            }
            (PolicyClass::Tabular, None) => {
                Critic::Net(Mlp::new(&[env.feature_dim(), 64, 64, 1], 1.0, rng))
            }
        }
    }

    pub fn value(&self, env: &dyn Environment, state: &State) -> f64 {
        match self {
            Critic::Table(v) => v[state.cell().expect("tabular state")],
            Critic::Net(net) => net.forward(&env.features(state))[0],
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Critic::Table(v) => v,
            Critic::Net(net) => net.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Critic::Table(v) => v,
            Critic::Net(net) => net.params_mut(),
        }
    }

    /// Adds `scale * dV/dparams` at `state` into `grad`.
    pub fn accumulate_grad(&self, env: &dyn Environment, state: &State, scale: f64, grad: &mut [f64]) {
        match self {
            Critic::Table(_) => grad[state.cell().expect("tabular state")] += scale,
            Critic::Net(net) => {
                let trace = net.forward_trace(&env.features(state));
                net.backward(&trace, &[scale], Some(grad));
            }
        }
    }
}

/// Versioned parameter file for policies and critics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterFile<T> {
    pub format_version: u32,
    pub model: T,
}

impl<T: Serialize + serde::de::DeserializeOwned> ParameterFile<T> {
    pub const VERSION: u32 = 1;

    pub fn new(model: T) -> Self {
        Self {
            format_version: Self::VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.format_version != Self::VERSION {
            return Err(Error::Unsupported(format!(
                "parameter file version {}",
                file.format_version
            )));
        }
        Ok(file)
    }
}
