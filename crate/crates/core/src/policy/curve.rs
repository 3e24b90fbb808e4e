use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub interactions: u64,
    pub performance: f64,
}

/// Performance after each policy update against cumulative environment
/// interactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub reward_name: String,
    points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn new(reward_name: impl Into<String>) -> Self {
        Self {
            reward_name: reward_name.into(),
            points: Vec::new(),
        }
    }

    pub fn from_points(reward_name: impl Into<String>, points: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut curve = Self::new(reward_name);
        for (i, p) in points {
            curve.push(i, p)?;
        }
        Ok(curve)
    }

    pub fn push(&mut self, interactions: u64, performance: f64) -> Result<()> {
        if let Some(last) = self.points.last() {
            if interactions <= last.interactions {
                return Err(Error::config(
                    "interactions",
                    format!("must increase strictly ({} after {})", interactions, last.interactions),
                ));
            }
        }
        self.points.push(CurvePoint {
            interactions,
            performance,
        });
        Ok(())
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn performances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.performance).collect()
    }

    pub fn final_performance(&self) -> Option<f64> {
        self.points.last().map(|p| p.performance)
    }

    /// Mean performance over the last `n` points.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let tail = &self.points[self.points.len().saturating_sub(n.max(1))..];
        Some(tail.iter().map(|p| p.performance).sum::<f64>() / tail.len() as f64)
    }

    /// First interaction count at which performance reaches `threshold`.
    pub fn interactions_to(&self, threshold: f64) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.performance >= threshold)
            .map(|p| p.interactions)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            reward_name: self.reward_name.clone(),
            points: self
                .points
                .iter()
                .map(|p| CurvePoint {
                    interactions: p.interactions,
                    performance: alpha * p.performance,
                })
                .collect(),
        }
    }

    /// Writes `interactions,performance,reward_name,seed` rows.
    pub fn write_csv<W: Write>(&self, out: W, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interactions", "performance", "reward_name", "seed"])?;
        for p in &self.points {
            w.write_record([
                p.interactions.to_string(),
                p.performance.to_string(),
                self.reward_name.clone(),
                seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Area under a training curve: the running sum of per-update performance.
pub fn auc(curve: &TrainingCurve) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Empty("training curve"));
    }
    Ok(curve.points.iter().map(|p| p.performance).sum())
}
