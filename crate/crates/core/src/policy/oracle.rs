use super::{DeterministicPolicy, TabularSoftmaxPolicy};
use crate::env::TabularMdp;
use crate::{Error, Result};

const TIE_TOL: f64 = 1e-12;

/// Finite-horizon optimal values by backward induction.
///
/// `values[h][s]` is the optimal return with `H - h` steps remaining, so
/// `values[H]` is all zeros; `q[h][s * A + a]` likewise.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSolution {
    pub values: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub greedy: Vec<Vec<usize>>,
    num_actions: usize,
    initial_dist: Vec<f64>,
}

impl OptimalSolution {
    /// Stationary state-only table `V*_0` used as a potential.
    pub fn potential_table(&self) -> Vec<f64> {
        self.values[0].clone()
    }

    pub fn optimal_return(&self) -> f64 {
        self.initial_dist
            .iter()
            .zip(&self.values[0])
            .map(|(p, v)| p * v)
            .sum()
    }

    /// The greedy policy at the first timestep, used as a stationary policy.
    pub fn policy(&self) -> DeterministicPolicy {
        DeterministicPolicy {
            num_actions: self.num_actions,
            actions: self.greedy[0].clone(),
        }
    }

    pub fn q_value(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[h][s * self.num_actions + a]
    }

    /// `A*_h(s, a) = Q*_h(s, a) - V*_h(s)`.
    pub fn advantage(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q_value(h, s, a) - self.values[h][s]
    }
}

pub fn value_iteration(mdp: &TabularMdp) -> OptimalSolution {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![vec![0.0; ns * na]; horizon];
    let mut greedy = vec![vec![0; ns]; horizon];
    for h in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(h + 1);
        let next = &tail[0];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let qa = mdp.r(s, a) + mdp.expected_next(s, a, next);
                q[h][s * na + a] = qa;
                best = best.max(qa);
            }
            head[h][s] = best;
            greedy[h][s] = (0..na)
                .find(|&a| q[h][s * na + a] >= best - TIE_TOL)
                .unwrap_or(0);
        }
    }
    OptimalSolution {
        values,
        q,
        greedy,
        num_actions: na,
        initial_dist: mdp.initial_dist().to_vec(),
    }
}

/// Finite-horizon soft (log-sum-exp) backups at a fixed temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftSolution {
    pub temperature: f64,
    pub values: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    num_states: usize,
    num_actions: usize,
}

impl SoftSolution {
    /// Softmax over `Q_h / temperature` at timestep `h`.
    pub fn policy_at(&self, h: usize) -> TabularSoftmaxPolicy {
        TabularSoftmaxPolicy {
            num_states: self.num_states,
            num_actions: self.num_actions,
            logits: self.q[h].iter().map(|q| q / self.temperature).collect(),
        }
    }

    /// The first-timestep policy used as a stationary policy.
    pub fn policy(&self) -> TabularSoftmaxPolicy {
        self.policy_at(0)
    }
}

pub fn soft_value_iteration(mdp: &TabularMdp, temperature: f64) -> Result<SoftSolution> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::config("temperature", "must be positive"));
    }
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    let mut q = vec![vec![0.0; ns * na]; horizon];
    for h in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(h + 1);
        let next = &tail[0];
        for s in 0..ns {
            for a in 0..na {
                q[h][s * na + a] = mdp.r(s, a) + mdp.expected_next(s, a, next);
            }
            let row = &q[h][s * na..(s + 1) * na];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| ((x - max) / temperature).exp()).sum::<f64>().ln();
            head[h][s] = max + temperature * lse;
        }
    }
    Ok(SoftSolution {
        temperature,
        values,
        q,
        num_states: ns,
        num_actions: na,
    })
}
