use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::rng::Rng;
use crate::{Error, Result};

/// Learner trajectories tagged with the outer iteration that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryBuffer {
    entries: Vec<(usize, Trajectory)>,
    /// Number of most recent iterations kept; `None` keeps everything.
    capacity: Option<usize>,
}

impl TrajectoryBuffer {
    pub fn unbounded() -> Self {
        Self::default()
    }

    /// Keeps only the batches of the last `iterations` iterations.
    pub fn with_capacity(iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        Ok(Self {
            entries: Vec::new(),
            capacity: Some(iterations),
        })
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn push_batch(&mut self, iteration: usize, batch: impl IntoIterator<Item = Trajectory>) {
        self.entries.extend(batch.into_iter().map(|t| (iteration, t)));
        if let Some(cap) = self.capacity {
            let oldest = (iteration + 1).saturating_sub(cap);
            self.entries.retain(|(i, _)| *i >= oldest);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, Trajectory)] {
        &self.entries
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// `n` trajectories drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&Trajectory> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.entries[rng.random_range(0..self.entries.len())].1)
            .collect()
    }
}

/// Probability of re-initialising a learner, decaying linearly from
/// `initial` at iteration 0 to zero at the end of the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetSchedule {
    pub initial: f64,
}

impl ResetSchedule {
    pub const NEVER: ResetSchedule = ResetSchedule { initial: 0.0 };

    pub fn new(initial: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial) {
            return Err(Error::config("reset_probability", "must lie in [0, 1]"));
        }
        Ok(Self { initial })
    }

    pub fn probability(&self, iteration: usize, total: usize) -> f64 {
        if total == 0 {
            return 0.0;
        }
        let frac = (iteration as f64 / total as f64).min(1.0);
        (self.initial * (1.0 - frac)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, State};
    use crate::rng::seeded;

    fn t(tag: usize) -> Trajectory {
        Trajectory {
            states: vec![State::Cell(tag)],
            actions: vec![Action::Discrete(0)],
            intended: vec![Action::Discrete(0)],
            rewards: vec![0.0],
            done_mask: vec![false],
        }
    }

    #[test]
    fn unbounded_buffer_is_append_only() {
        let mut b = TrajectoryBuffer::unbounded();
        let mut seen: Vec<Trajectory> = Vec::new();
        for i in 0..10 {
            b.push_batch(i, vec![t(i), t(i + 100)]);
            seen.extend([t(i), t(i + 100)]);
            for old in &seen {
                assert!(b.trajectories().any(|x| x == old));
            }
        }
        assert_eq!(b.len(), 20);
    }

    #[test]
    fn capacity_one_keeps_latest_batch() {
        let mut b = TrajectoryBuffer::with_capacity(1).unwrap();
        b.push_batch(0, vec![t(0)]);
        b.push_batch(1, vec![t(1), t(2)]);
        assert_eq!(b.len(), 2);
        assert!(b.entries().iter().all(|(i, _)| *i == 1));
        let s = b.sample(50, &mut seeded(0, &[]));
        assert_eq!(s.len(), 50);
        assert!(s.iter().any(|x| x.states[0] == State::Cell(1)));
        assert!(s.iter().any(|x| x.states[0] == State::Cell(2)));
    }

    #[test]
    fn reset_probability_decays_linearly() {
        let r = ResetSchedule::new(0.4).unwrap();
        assert_eq!(r.probability(0, 100), 0.4);
        assert!((r.probability(50, 100) - 0.2).abs() < 1e-12);
        assert_eq!(r.probability(100, 100), 0.0);
        let mut last = 1.0;
        for i in 0..=100 {
            let p = r.probability(i, 100);
            assert!(p <= last && (0.0..=1.0).contains(&p));
            last = p;
        }
        assert!(ResetSchedule::new(1.5).is_err());
    }
}
