use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, Environment, State, Step};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// A 2-D point mass pushed by a bounded force towards a fixed goal.
///
/// Dynamics: `v' = (1 - friction) v + action_scale * clip(u, -1, 1) * dt`,
/// `p' = clip(p + v' dt, bounds)`; the velocity component along a clipped
/// axis is zeroed. Reward is the negative distance to the goal minus a
/// quadratic control cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassEnv {
    pub start: [f64; 2],
    /// Half-width of the uniform jitter applied to the start position.
    pub start_jitter: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub action_scale: f64,
    pub dt: f64,
    pub friction: f64,
    pub control_cost: f64,
    pub horizon: usize,
    pub bounds: Bounds,
    pub terminate_at_goal: bool,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            start: [0.8, 0.8],
            start_jitter: 0.1,
            goal: [-0.6, -0.6],
            goal_radius: 0.1,
            action_scale: 2.0,
            dt: 0.1,
            friction: 0.1,
            control_cost: 0.01,
            horizon: 40,
            bounds: Bounds {
                min: [-1.0, -1.0],
                max: [1.0, 1.0],
            },
            terminate_at_goal: false,
        }
    }
}

impl PointMassEnv {
    pub fn distance_to_goal(&self, p: &PointState) -> f64 {
        ((p.position[0] - self.goal[0]).powi(2) + (p.position[1] - self.goal[1]).powi(2)).sqrt()
    }

    pub fn transition(&self, s: &PointState, u: [f64; 2]) -> PointState {
        let mut next = *s;
        for i in 0..2 {
            let force = u[i].clamp(-1.0, 1.0) * self.action_scale;
            let v = (1.0 - self.friction) * s.velocity[i] + force * self.dt;
            let p = s.position[i] + v * self.dt;
            let clipped = p.clamp(self.bounds.min[i], self.bounds.max[i]);
            next.position[i] = clipped;
            next.velocity[i] = if clipped != p { 0.0 } else { v };
        }
        next
    }

    fn point(state: &State) -> &PointState {
        match state {
            State::Point(p) => p,
            State::Cell(_) => panic!("point-mass environment received a tabular state"),
        }
    }

    fn control(action: &Action) -> [f64; 2] {
        match action {
            Action::Continuous(u) => *u,
            Action::Discrete(_) => panic!("point-mass environment received a discrete action"),
        }
    }
}

impl Environment for PointMassEnv {
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(2)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn feature_dim(&self) -> usize {
        4
    }

    fn features(&self, state: &State) -> Vec<f64> {
        let p = Self::point(state);
        let mut x = Vec::with_capacity(4);
        for i in 0..2 {
            let half = 0.5 * (self.bounds.max[i] - self.bounds.min[i]);
            let centre = 0.5 * (self.bounds.max[i] + self.bounds.min[i]);
            x.push((p.position[i] - centre) / half);
        }
        let v_scale = (self.action_scale * self.dt / self.friction.max(1e-3)).max(1e-6);
        x.extend(p.velocity.iter().map(|v| v / v_scale));
        x
    }

    fn reset(&self, rng: &mut Rng) -> State {
        let mut position = self.start;
        if self.start_jitter > 0.0 {
            for (i, p) in position.iter_mut().enumerate() {
                *p = (*p + rng.random_range(-self.start_jitter..=self.start_jitter))
                    .clamp(self.bounds.min[i], self.bounds.max[i]);
            }
        }
        State::Point(PointState {
            position,
            velocity: [0.0; 2],
        })
    }

    fn step(&self, state: &State, action: &Action, _rng: &mut Rng) -> Step {
        let next = self.transition(Self::point(state), Self::control(action));
        let done = self.terminate_at_goal && self.distance_to_goal(&next) <= self.goal_radius;
        Step {
            next: State::Point(next),
            done,
        }
    }

    fn reward(&self, state: &State, action: &Action) -> f64 {
        let u = Self::control(action);
        let cost = self.control_cost
            * (u[0].clamp(-1.0, 1.0).powi(2) + u[1].clamp(-1.0, 1.0).powi(2));
        -self.distance_to_goal(Self::point(state)) - cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn stays_in_bounds() {
        let env = PointMassEnv::default();
        let mut rng = seeded(0, &[]);
        let mut s = env.reset(&mut rng);
        for _ in 0..200 {
            s = env.step(&s, &Action::Continuous([5.0, 5.0]), &mut rng).next;
            match s {
                State::Point(p) => assert!(env.bounds.contains(p.position)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn deterministic_transition() {
        let env = PointMassEnv::default();
        let s = PointState {
            position: [0.1, 0.2],
            velocity: [0.3, -0.1],
        };
        assert_eq!(env.transition(&s, [0.5, -0.5]), env.transition(&s, [0.5, -0.5]));
    }
}
