use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::stats::{mean, std_error};
use crate::{Error, Result};

/// Outcome of one method for one seed; one row of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    /// Ground-truth return of the final retrained (or cloned) policy.
    pub final_return: Option<f64>,
    /// Return of the optimal or demonstrating policy in the same
    /// environment(s).
    pub expert_return: Option<f64>,
    pub auc: Option<f64>,
    /// First interaction count where the curve reaches 90% of expert.
    pub interactions_to_threshold: Option<u64>,
    /// First interaction count where the curve reaches 90% of this run's
    /// final return.
    pub interactions_to_own_final: Option<u64>,
    /// Recovered reward vs ground truth on learner-visited states, or
    /// evolved potential vs `V*`.
    pub correlation: Option<f64>,
}

impl RunRecord {
    pub fn empty(method: &str, seed: u64) -> Self {
        Self {
            method: method.to_string(),
            seed,
            final_return: None,
            expert_return: None,
            auc: None,
            interactions_to_threshold: None,
            interactions_to_own_final: None,
            correlation: None,
        }
    }
}

pub fn write_runs_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(RUN_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

const RUN_HEADER: [&str; 8] = [
    "method",
    "seed",
    "final_return",
    "expert_return",
    "auc",
    "interactions_to_threshold",
    "interactions_to_own_final",
    "correlation",
];

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<RunRecord>, _>>()?)
}

/// Mean and standard error over the seeds that have the value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        Some(Self {
            mean: mean(xs),
            stderr: std_error(xs),
            n: xs.len(),
        })
    }
}

/// Per-method comparison across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub seeds: usize,
    pub final_return: Option<Estimate>,
    /// Over the seeds that reached the threshold; `n` counts them.
    pub interactions_to_threshold: Option<Estimate>,
    pub interactions_to_own_final: Option<Estimate>,
    pub auc: Option<Estimate>,
    pub correlation: Option<Estimate>,
}

impl SummaryRow {
    /// A single seed has no spread; its standard errors are reported as 0.
    pub fn single_seed(&self) -> bool {
        self.seeds == 1
    }
}

/// Groups records by method, in order of first appearance.
pub fn summarize_records(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.method == method).collect();
            let pick = |f: &dyn Fn(&RunRecord) -> Option<f64>| Estimate::of(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                method: method.to_string(),
                seeds: rows.len(),
                final_return: pick(&|r| r.final_return),
                interactions_to_threshold: pick(&|r| r.interactions_to_threshold.map(|x| x as f64)),
                interactions_to_own_final: pick(&|r| r.interactions_to_own_final.map(|x| x as f64)),
                auc: pick(&|r| r.auc),
                correlation: pick(&|r| r.correlation),
            }
        })
        .collect()
}

/// Writes one row per method with `_mean`, `_stderr` and `_n` columns per
/// statistic; missing statistics are left empty.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let stats = [
        "final_return",
        "interactions_to_threshold",
        "interactions_to_own_final",
        "auc",
        "correlation",
    ];
    let mut header = vec!["method".to_string(), "seeds".to_string(), "single_seed".to_string()];
    for s in stats {
        header.extend([format!("{s}_mean"), format!("{s}_stderr"), format!("{s}_n")]);
    }
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.method.clone(), row.seeds.to_string(), row.single_seed().to_string()];
        for e in [
            row.final_return,
            row.interactions_to_threshold,
            row.interactions_to_own_final,
            row.auc,
            row.correlation,
        ] {
            match e {
                Some(e) => rec.extend([e.mean.to_string(), e.stderr.to_string(), e.n.to_string()]),
                None => rec.extend([String::new(), String::new(), "0".to_string()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Checks that every artifact shares one kind, then summarises the pooled
/// run records.
pub fn summarize(artifacts: &[super::RunArtifact]) -> Result<Vec<SummaryRow>> {
    let first = artifacts.first().ok_or(Error::Empty("artifacts"))?;
    let kind = first.manifest.kind;
    if let Some(other) = artifacts.iter().find(|a| a.manifest.kind != kind) {
        return Err(Error::MixedKinds(kind.to_string(), other.manifest.kind.to_string()));
    }
    let mut records = Vec::new();
    for a in artifacts {
        records.extend(a.runs()?);
    }
    Ok(summarize_records(&records))
}
