//! Potentials and potential-based reward shaping.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, GridLayout, State, TabularMdp, Trajectory};
use crate::nn::Mlp;
use crate::policy::DeterministicPolicy;
use crate::rng::Rng;
use crate::{Error, Result};

/// Hidden widths of network potentials and reward models.
pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

/// A state potential `phi: S -> R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// One value per tabular state.
    Table(Vec<f64>),
    /// Network on the environment's state features.
    Net(Mlp),
}

impl Potential {
    /// Zero table for tabular environments, otherwise a freshly initialised
    /// network with the given hidden widths.
    pub fn init(env: &dyn Environment, hidden: &[usize], rng: &mut Rng) -> Self {
        match env.num_states() {
            Some(n) => Potential::Table(vec![0.0; n]),
            None => {
                let mut sizes = vec![env.feature_dim()];
                sizes.extend(hidden);
                sizes.push(1);
                Potential::Net(Mlp::new(&sizes, 1.0, rng))
            }
        }
    }

    pub fn value(&self, env: &dyn Environment, state: &State) -> f64 {
        match self {
            Potential::Table(t) => t[state.cell().expect("tabular state")],
            Potential::Net(net) => net.forward(&env.features(state))[0],
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Potential::Table(t) => t,
            Potential::Net(net) => net.params(),
        }
    }

    /// Same representation with new parameters.
    pub fn with_params(&self, params: &[f64]) -> Self {
        let mut out = self.clone();
        let dst = match &mut out {
            Potential::Table(t) => t.as_mut_slice(),
            Potential::Net(net) => net.params_mut(),
        };
        assert_eq!(dst.len(), params.len(), "parameter count mismatch");
        dst.copy_from_slice(params);
        out
    }

    /// Tabular potential plus a constant.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        match self {
            Potential::Table(t) => Ok(Potential::Table(t.iter().map(|v| v + c).collect())),
            Potential::Net(_) => Err(Error::Unsupported("shifting a network potential".into())),
        }
    }

    /// Values at every tabular state of `env`.
    pub fn table(&self, env: &dyn Environment) -> Result<Vec<f64>> {
        let n = env
            .num_states()
            .ok_or_else(|| Error::Unsupported("potential table of a continuous environment".into()))?;
        Ok((0..n).map(|s| self.value(env, &State::Cell(s))).collect())
    }

    /// Writes the potential over a grid: header `row,col_0,..`, then one row
    /// per grid row, top row first.
    pub fn write_grid_csv<W: Write>(&self, env: &dyn Environment, layout: &GridLayout, out: W) -> Result<()> {
        write_grid_csv(&self.table(env)?, layout, out)
    }
}

/// Writes one value per grid cell as CSV with a `row,col_0,..` header.
pub fn write_grid_csv<W: Write>(values: &[f64], layout: &GridLayout, out: W) -> Result<()> {
    if values.len() != layout.width * layout.height {
        return Err(Error::SpaceMismatch(format!(
            "{} values for a {}x{} grid",
            values.len(),
            layout.width,
            layout.height
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend((0..layout.width).map(|c| format!("col_{c}")));
    w.write_record(&header)?;
    for row in 0..layout.height {
        let mut rec = vec![row.to_string()];
        rec.extend((0..layout.width).map(|col| values[row * layout.width + col].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `F(s, s') = phi(s') - phi(s)`.
pub fn potential_diff(potential: &Potential, env: &dyn Environment, s: &State, s_next: &State) -> f64 {
    potential.value(env, s_next) - potential.value(env, s)
}

/// Shaped rewards along `traj`: `r_h + phi(s_{h+1}) - phi(s_h)` before the
/// last step, and `r_H + phi(s_1) - phi(s_H)` at the last step, so the
/// shaping terms cancel over the episode. Early-terminated episodes wrap at
/// their last visited state.
pub fn shape(base_rewards: &[f64], potential: &Potential, env: &dyn Environment, traj: &Trajectory) -> Vec<f64> {
    let n = traj.len();
    debug_assert_eq!(base_rewards.len(), n);
    if n == 0 {
        return Vec::new();
    }
    let phi: Vec<f64> = traj.states.iter().map(|s| potential.value(env, s)).collect();
    (0..n)
        .map(|h| {
            let next = if h + 1 < n { phi[h + 1] } else { phi[0] };
            base_rewards[h] + (next - phi[h])
        })
        .collect()
}

/// One-step lookahead under the shaped reward:
/// `argmax_a r(s, a) + phi(T(s, a)) - phi(s)`, ties to the lowest action.
pub fn greedy_under_shaping(mdp: &TabularMdp, potential: &Potential) -> Result<DeterministicPolicy> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut actions = Vec::with_capacity(ns);
    for s in 0..ns {
        let here = potential.value(mdp, &State::Cell(s));
        let mut best = (0, f64::NEG_INFINITY);
        for a in 0..na {
            let next = mdp.deterministic_next(s, a).ok_or_else(|| {
                Error::Unsupported(format!("one-step planning needs deterministic dynamics (row ({s}, {a}))"))
            })?;
            let q = mdp.r(s, a) + potential.value(mdp, &State::Cell(next)) - here;
            if q > best.1 + 1e-12 {
                best = (a, q);
            }
        }
        actions.push(best.0);
    }
    Ok(DeterministicPolicy {
        num_actions: na,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, Gridworld, PointMassEnv};
    use crate::policy::{exact_return, value_iteration, Policy, PolicyClass};
    use crate::reward::RewardSource;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn random_traj(rewards: &[f64], cells: &[usize]) -> Trajectory {
        let mut t = Trajectory::with_capacity(cells.len());
        for (r, c) in rewards.iter().zip(cells) {
            t.states.push(State::Cell(*c));
            t.actions.push(crate::env::Action::Discrete(0));
            t.intended.push(crate::env::Action::Discrete(0));
            t.rewards.push(*r);
            t.done_mask.push(false);
        }
        t
    }

    proptest! {
        #[test]
        fn shaped_total_equals_base_total(
            table in prop::collection::vec(-100.0f64..100.0, 25),
            steps in prop::collection::vec((0usize..25, -5.0f64..5.0), 1..40),
        ) {
            let env = Gridworld::five_by_five().build().unwrap();
            let (cells, rewards): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
            let traj = random_traj(&rewards, &cells);
            let shaped = shape(&rewards, &Potential::Table(table), &env, &traj);
            let a: f64 = shaped.iter().sum();
            let b: f64 = rewards.iter().sum();
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn linear_in_potential(
            t1 in prop::collection::vec(-10.0f64..10.0, 25),
            t2 in prop::collection::vec(-10.0f64..10.0, 25),
            steps in prop::collection::vec((0usize..25, -1.0f64..1.0), 2..30),
        ) {
            let env = Gridworld::five_by_five().build().unwrap();
            let (cells, rewards): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
            let traj = random_traj(&rewards, &cells);
            let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
            let both = shape(&rewards, &Potential::Table(sum), &env, &traj);
            let first = shape(&rewards, &Potential::Table(t1), &env, &traj);
            let zero = vec![0.0; rewards.len()];
            let second = shape(&zero, &Potential::Table(t2), &env, &traj);
            for h in 0..rewards.len() {
                prop_assert!((both[h] - first[h] - second[h]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_potential_is_identity() {
        let env = Gridworld::five_by_five().build().unwrap();
        let traj = random_traj(&[0.5, -1.0, 2.0], &[3, 4, 9]);
        let shaped = shape(&traj.rewards, &Potential::Table(vec![5.0; 25]), &env, &traj);
        assert_eq!(shaped, traj.rewards);
        let zero = shape(&traj.rewards, &Potential::Table(vec![0.0; 25]), &env, &traj);
        assert_eq!(zero, traj.rewards);
        assert_eq!(potential_diff(&Potential::Table(vec![5.0; 25]), &env, &State::Cell(1), &State::Cell(2)), 0.0);
    }

    #[test]
    fn value_potential_is_nonnegative_along_optimal_path() {
        let env = Gridworld::five_by_five().build().unwrap();
        let sol = value_iteration(&env);
        let phi = Potential::Table(sol.potential_table());
        let expert = Policy::Deterministic(sol.policy());
        let traj = rollout(&env, &expert, &RewardSource::GroundTruth, 0).unwrap();
        for w in traj.states.windows(2) {
            assert!(potential_diff(&phi, &env, &w[0], &w[1]) >= 0.0);
        }
    }

    #[test]
    fn value_potential_makes_greedy_optimal() {
        let env = Gridworld::five_by_five().build().unwrap();
        let sol = value_iteration(&env);
        let phi = Potential::Table(sol.potential_table());
        let greedy = Policy::Deterministic(greedy_under_shaping(&env, &phi).unwrap());
        let j = exact_return(&greedy, &env, &RewardSource::GroundTruth).unwrap();
        assert!((j - sol.optimal_return()).abs() < 1e-9);
        let shifted = greedy_under_shaping(&env, &phi.shifted(17.0).unwrap()).unwrap();
        assert_eq!(Policy::Deterministic(shifted), greedy);
    }

    #[test]
    fn zero_potential_is_myopic() {
        let env = Gridworld::five_by_five().build().unwrap();
        let sol = value_iteration(&env);
        let greedy = Policy::Deterministic(greedy_under_shaping(&env, &Potential::Table(vec![0.0; 25])).unwrap());
        let j = exact_return(&greedy, &env, &RewardSource::GroundTruth).unwrap();
        assert!(j < sol.optimal_return() - 1.0);
    }

    #[test]
    fn value_potential_gives_advantages_on_time_augmented_states() {
        let env = Gridworld::five_by_five().build().unwrap().time_augmented().unwrap();
        let sol = value_iteration(&env);
        let phi = Potential::Table(sol.potential_table());
        let policy = Policy::init(&env, &PolicyClass::Tabular, &mut seeded(0, &[])).unwrap();
        for seed in 0..20 {
            let traj = rollout(&env, &policy, &RewardSource::shaped(RewardSource::GroundTruth, phi.clone()), seed).unwrap();
            let n = traj.len();
            for h in 0..n - 1 {
                let s = traj.states[h].cell().unwrap();
                let a = traj.actions[h].discrete().unwrap();
                assert!((traj.rewards[h] - sol.advantage(0, s, a)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stochastic_dynamics_rejected() {
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.5, 0.5], vec![0.0; 2], 2, vec![1.0, 0.0]).unwrap();
        assert!(greedy_under_shaping(&mdp, &Potential::Table(vec![0.0; 2])).is_err());
    }

    #[test]
    fn grid_csv_layout() {
        let env = Gridworld::five_by_five().build().unwrap();
        let layout = *env.layout().unwrap();
        let phi = Potential::Table((0..25).map(f64::from).collect());
        let mut buf = Vec::new();
        phi.write_grid_csv(&env, &layout, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "row,col_0,col_1,col_2,col_3,col_4");
        assert_eq!(lines[1], "0,0,1,2,3,4");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn network_potential_is_finite_on_point_mass() {
        let env = PointMassEnv::default();
        let phi = Potential::init(&env, &DEFAULT_HIDDEN, &mut seeded(1, &[]));
        let traj = rollout(&env, &Policy::init(&env, &PolicyClass::for_env(&env), &mut seeded(2, &[])).unwrap(), &RewardSource::GroundTruth, 3)
            .unwrap();
        let shaped = shape(&traj.rewards, &phi, &env, &traj);
        assert!(shaped.iter().all(|r| r.is_finite()));
        assert!((shaped.iter().sum::<f64>() - traj.total_reward()).abs() < 1e-9);
    }
}
