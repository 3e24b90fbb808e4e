use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::RewardModel;
use crate::env::{Environment, Trajectory};
use crate::rng::Rng;
use crate::{Error, Result};

/// Regularisers added to the moment-matching term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularisation {
    /// Weight of the parameter L2 norm.
    pub l2: f64,
    /// Weight of `(|grad_x f(x_hat)| - 1)^2`.
    pub gradient_penalty: f64,
    /// Interpolated states per penalty evaluation.
    pub gp_samples: usize,
}

impl Default for Regularisation {
    fn default() -> Self {
        Self {
            l2: 0.0,
            gradient_penalty: 10.0,
            gp_samples: 32,
        }
    }
}

impl Regularisation {
    pub const NONE: Regularisation = Regularisation {
        l2: 0.0,
        gradient_penalty: 0.0,
        gp_samples: 0,
    };
}

/// Features of states interpolated uniformly between random learner and
/// expert states.
pub fn interpolated_points(
    env: &dyn Environment,
    learner: &[&Trajectory],
    expert: &[&Trajectory],
    n: usize,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let ls: Vec<_> = learner.iter().flat_map(|t| &t.states).collect();
    let es: Vec<_> = expert.iter().flat_map(|t| &t.states).collect();
    if ls.is_empty() || es.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let a = env.features(ls[rng.random_range(0..ls.len())]);
            let b = env.features(es[rng.random_range(0..es.len())]);
            let u: f64 = rng.random();
            a.iter().zip(&b).map(|(x, y)| u * x + (1.0 - u) * y).collect()
        })
        .collect()
}

fn mean_trajectory_sum(f: &RewardModel, env: &dyn Environment, batch: &[&Trajectory]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|t| t.states.iter().map(|s| f.value(env, s)).sum::<f64>())
        .sum();
    total / batch.len() as f64
}

fn check_batches(learner: &[&Trajectory], expert: &[&Trajectory]) -> Result<()> {
    if learner.is_empty() {
        return Err(Error::Empty("learner batch"));
    }
    if expert.is_empty() {
        return Err(Error::Empty("expert batch"));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `E_learner[sum_h f(s_h)] - E_expert[sum_h f(s_h)] + l2 |theta| +
/// gp * mean (|grad_x f(x_hat)| - 1)^2`, with the penalty taken at
/// `gp_points`.
pub fn discriminator_loss(
    f: &RewardModel,
    env: &dyn Environment,
    learner: &[&Trajectory],
    expert: &[&Trajectory],
    reg: &Regularisation,
    gp_points: &[Vec<f64>],
) -> Result<f64> {
    check_batches(learner, expert)?;
    let mut loss = mean_trajectory_sum(f, env, learner) - mean_trajectory_sum(f, env, expert);
    if reg.l2 != 0.0 {
        loss += reg.l2 * norm(f.params());
    }
    if reg.gradient_penalty != 0.0 && !gp_points.is_empty() {
        let pen: f64 = gp_points
            .iter()
            .map(|x| (norm(&f.input_gradient(x)) - 1.0).powi(2))
            .sum::<f64>()
            / gp_points.len() as f64;
        loss += reg.gradient_penalty * pen;
    }
    Ok(loss)
}

/// Loss and its parameter gradient. The penalty's gradient uses
/// `d/dtheta (v . grad_x f) ~ (grad_theta f(x + eps v) - grad_theta f(x - eps v)) / 2 eps`
/// with `v = grad_x f(x)` held fixed.
pub fn discriminator_gradient(
    f: &RewardModel,
    env: &dyn Environment,
    learner: &[&Trajectory],
    expert: &[&Trajectory],
    reg: &Regularisation,
    gp_points: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let loss = discriminator_loss(f, env, learner, expert, reg, gp_points)?;
    let mut grad = vec![0.0; f.params().len()];
    let wl = 1.0 / learner.len() as f64;
    for t in learner {
        for s in &t.states {
            f.accumulate_grad(env, s, wl, &mut grad);
        }
    }
    let we = -1.0 / expert.len() as f64;
    for t in expert {
        for s in &t.states {
            f.accumulate_grad(env, s, we, &mut grad);
        }
    }
    if reg.l2 != 0.0 {
        let n = norm(f.params());
        if n > 0.0 {
            for (g, p) in grad.iter_mut().zip(f.params()) {
                *g += reg.l2 * p / n;
            }
        }
    }
    if reg.gradient_penalty != 0.0 && !gp_points.is_empty() {
        let scale = reg.gradient_penalty / gp_points.len() as f64;
        match f {
            RewardModel::Table(w) => {
                // grad_x f = w at every point
                let n = norm(w);
                if n > 0.0 {
                    let c = scale * gp_points.len() as f64 * 2.0 * (n - 1.0) / n;
                    for (g, wi) in grad.iter_mut().zip(w) {
                        *g += c * wi;
                    }
                }
            }
            RewardModel::Net(_) => {
                const EPS: f64 = 1e-4;
                for x in gp_points {
                    let v = f.input_gradient(x);
                    let n = norm(&v);
                    if n == 0.0 {
                        continue;
                    }
                    let c = scale * 2.0 * (n - 1.0) / n / (2.0 * EPS);
                    let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + EPS * b).collect();
                    let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - EPS * b).collect();
                    f.accumulate_grad_at(&plus, c, &mut grad);
                    f.accumulate_grad_at(&minus, -c, &mut grad);
                }
            }
        }
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("discriminator loss".into()));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, PointMassEnv, PointState, State, TabularMdp};
    use crate::irl::RewardModelKind;
    use crate::rng::seeded;

    fn traj(states: Vec<State>) -> Trajectory {
        let n = states.len();
        Trajectory {
            actions: vec![Action::Discrete(0); n],
            intended: vec![Action::Discrete(0); n],
            rewards: vec![0.0; n],
            done_mask: vec![false; n],
            states,
        }
    }

    fn two_state() -> TabularMdp {
        TabularMdp::new(2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], 1, vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn equal_batches_and_constants_give_zero() {
        let env = two_state();
        let a = traj(vec![State::Cell(0)]);
        let b = traj(vec![State::Cell(1)]);
        let f = RewardModel::Table(vec![0.3, -1.2]);
        let l = discriminator_loss(&f, &env, &[&a, &b], &[&a, &b], &Regularisation::NONE, &[]).unwrap();
        assert_eq!(l, 0.0);
        let c = RewardModel::Table(vec![4.0, 4.0]);
        let l = discriminator_loss(&c, &env, &[&a, &a], &[&b], &Regularisation::NONE, &[]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn one_step_moves_table_by_alpha() {
        let env = two_state();
        let learner = traj(vec![State::Cell(0)]);
        let expert = traj(vec![State::Cell(1)]);
        let mut f = RewardModel::Table(vec![0.2, 0.7]);
        let alpha = 0.01;
        let (_, g) = discriminator_gradient(&f, &env, &[&learner], &[&expert], &Regularisation::NONE, &[]).unwrap();
        for (p, gi) in f.params_mut().iter_mut().zip(&g) {
            *p -= alpha * gi;
        }
        assert!((f.params()[0] - (0.2 - alpha)).abs() < 1e-15);
        assert!((f.params()[1] - (0.7 + alpha)).abs() < 1e-15);
    }

    #[test]
    fn shift_invariant_without_regularisers() {
        let env = PointMassEnv::default();
        let mut rng = seeded(1, &[]);
        let f = RewardModel::init(&env, &RewardModelKind::Net { hidden: vec![6, 6] }, &mut rng).unwrap();
        let mut g = f.clone();
        if let RewardModel::Net(net) = &mut g {
            let n = net.params().len();
            net.params_mut()[n - 1] += 3.5; // output bias
        }
        let s = |x: f64| State::Point(PointState { position: [x, -x], velocity: [0.0, 0.1] });
        let l = traj(vec![s(0.1), s(0.2), s(0.3)]);
        let e = traj(vec![s(-0.5), s(-0.4), s(-0.6)]);
        let a = discriminator_loss(&f, &env, &[&l], &[&e], &Regularisation::NONE, &[]).unwrap();
        let b = discriminator_loss(&g, &env, &[&l], &[&e], &Regularisation::NONE, &[]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    fn finite_difference_check(f: RewardModel, env: &dyn Environment, l: &Trajectory, e: &Trajectory, reg: Regularisation) {
        let mut rng = seeded(4, &[]);
        let pts = interpolated_points(env, &[l], &[e], 8, &mut rng);
        let (_, g) = discriminator_gradient(&f, env, &[l], &[e], &reg, &pts).unwrap();
        let h = 1e-6;
        for i in (0..f.params().len()).step_by(7) {
            let mut fp = f.clone();
            fp.params_mut()[i] += h;
            let mut fm = f.clone();
            fm.params_mut()[i] -= h;
            let lp = discriminator_loss(&fp, env, &[l], &[e], &reg, &pts).unwrap();
            let lm = discriminator_loss(&fm, env, &[l], &[e], &reg, &pts).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let env = PointMassEnv::default();
        let mut rng = seeded(2, &[]);
        let f = RewardModel::init(&env, &RewardModelKind::Net { hidden: vec![5, 4] }, &mut rng).unwrap();
        let s = |x: f64| State::Point(PointState { position: [x, 0.5 * x], velocity: [0.2, -0.1] });
        let l = traj(vec![s(0.1), s(0.4), s(0.7)]);
        let e = traj(vec![s(-0.5), s(-0.2), s(-0.6)]);
        let reg = Regularisation { l2: 0.3, gradient_penalty: 10.0, gp_samples: 8 };
        finite_difference_check(f, &env, &l, &e, reg);

        let grid = crate::env::Gridworld::five_by_five().build().unwrap();
        let t = RewardModel::init(&grid, &RewardModelKind::Table { init_scale: 0.5 }, &mut rng).unwrap();
        let l = traj(vec![State::Cell(4), State::Cell(9), State::Cell(9)]);
        let e = traj(vec![State::Cell(4), State::Cell(3), State::Cell(2)]);
        finite_difference_check(t, &grid, &l, &e, reg);
    }

    #[test]
    fn empty_batches_rejected() {
        let env = two_state();
        let a = traj(vec![State::Cell(0)]);
        let f = RewardModel::Table(vec![0.0, 0.0]);
        assert!(discriminator_loss(&f, &env, &[], &[&a], &Regularisation::NONE, &[]).is_err());
        assert!(discriminator_loss(&f, &env, &[&a], &[], &Regularisation::NONE, &[]).is_err());
    }
}
