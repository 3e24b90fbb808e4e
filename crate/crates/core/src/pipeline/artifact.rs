use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{
    read_runs_csv, run_experiment, slug, summarize_records, write_runs_csv, write_summary_csv, ExperimentKind,
    ExperimentSpec, RunRecord, SeedOutput,
};
use crate::policy::TrainingCurve;
use crate::shaping::write_grid_csv;
use crate::stats::{mean, std_error};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SPEC_FILE: &str = "spec.toml";
pub const ERROR_FILE: &str = "errors.toml";
pub const RUNS_FILE: &str = "tables/runs.csv";
pub const SUMMARY_FILE: &str = "tables/summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Complete,
    Failed,
}

/// `manifest.toml`: what produced an artifact directory and what is in it.
/// Paths are relative to the directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: ExperimentKind,
    /// SHA-256 of the stored `spec.toml`.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub status: RunStatus,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub curves: Vec<String>,
    pub tables: Vec<String>,
    pub grids: Vec<String>,
    pub models: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ErrorManifest {
    failure: Vec<SeedFailure>,
}

pub fn version_string() -> String {
    format!("evil-core {}", env!("CARGO_PKG_VERSION"))
}

/// A written artifact directory.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunArtifact {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = toml::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        Ok(toml::from_str(&fs::read_to_string(self.dir.join(SPEC_FILE))?)?)
    }

    /// Re-hashes the stored spec against the manifest.
    pub fn verify(&self) -> Result<()> {
        let hash = self.spec()?.config_hash()?;
        if hash != self.manifest.config_hash {
            return Err(Error::config(
                "config_hash",
                format!("manifest has {}, spec hashes to {hash}", self.manifest.config_hash),
            ));
        }
        Ok(())
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        read_runs_csv(fs::File::open(self.dir.join(RUNS_FILE))?)
    }

    pub fn curve_paths(&self) -> Vec<PathBuf> {
        self.manifest.curves.iter().map(|p| self.dir.join(p)).collect()
    }

    pub fn table_paths(&self) -> Vec<PathBuf> {
        self.manifest.tables.iter().map(|p| self.dir.join(p)).collect()
    }

    pub fn grid_paths(&self) -> Vec<PathBuf> {
        self.manifest.grids.iter().map(|p| self.dir.join(p)).collect()
    }

    pub fn model_paths(&self) -> Vec<PathBuf> {
        self.manifest.models.iter().map(|p| self.dir.join(p)).collect()
    }

    pub fn failures(&self) -> Result<Vec<SeedFailure>> {
        let path = self.dir.join(ERROR_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let errors: ErrorManifest = toml::from_str(&fs::read_to_string(path)?)?;
        Ok(errors.failure)
    }
}

/// Writes `seed,interactions,performance` rows, seeds in the given order.
pub fn write_curves_csv<W: std::io::Write>(curves: &[(u64, &TrainingCurve)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "interactions", "performance"])?;
    for (seed, c) in curves {
        for p in c.points() {
            w.write_record([seed.to_string(), p.interactions.to_string(), p.performance.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `update,interactions,mean,stderr,n` rows: the across-seed mean
/// and standard error at every update.
pub fn write_curve_summary_csv<W: std::io::Write>(curves: &[&TrainingCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["update", "interactions", "mean", "stderr", "n"])?;
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    for i in 0..len {
        let pts: Vec<_> = curves.iter().filter_map(|c| c.points().get(i)).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.interactions as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.performance).collect();
        w.write_record([
            (i + 1).to_string(),
            (mean(&xs).round() as u64).to_string(),
            mean(&ys).to_string(),
            std_error(&ys).to_string(),
            ys.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_file(dir: &Path, rel: &str, contents: &[u8], list: &mut Vec<String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    list.push(rel.to_string());
    Ok(())
}

fn buffer(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// Writes the outputs of every successful seed, the summary tables and the
/// manifest. Failed seeds go to `errors.toml`, and the call then returns
/// an error after the partial artifact is on disk.
pub fn write_artifact(
    dir: &Path,
    spec: &ExperimentSpec,
    outputs: Vec<Result<SeedOutput>>,
    started_unix: u64,
    wall_clock_seconds: f64,
) -> Result<RunArtifact> {
    if dir.join(MANIFEST_FILE).exists() {
        return Err(Error::config("out", format!("{} already holds an artifact", dir.display())));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SPEC_FILE), spec.to_toml()?)?;

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in spec.seeds.iter().zip(outputs) {
        match out {
            Ok(o) => done.push(o),
            Err(e) => failures.push(SeedFailure {
                seed: *seed,
                message: e.to_string(),
            }),
        }
    }

    let mut manifest = Manifest {
        kind: spec.kind,
        config_hash: spec.config_hash()?,
        seeds: spec.seeds.clone(),
        version: version_string(),
        status: if failures.is_empty() {
            RunStatus::Complete
        } else {
            RunStatus::Failed
        },
        started_unix,
        wall_clock_seconds,
        curves: Vec::new(),
        tables: Vec::new(),
        grids: Vec::new(),
        models: Vec::new(),
    };

    let mut methods: Vec<String> = Vec::new();
    for o in &done {
        for m in &o.methods {
            if !methods.contains(&m.record.method) {
                methods.push(m.record.method.clone());
            }
        }
    }
    for method in &methods {
        let curves: Vec<(u64, &TrainingCurve)> = done
            .iter()
            .filter_map(|o| o.method(method).and_then(|m| m.curve.as_ref()).map(|c| (o.seed, c)))
            .collect();
        if curves.is_empty() {
            continue;
        }
        let s = slug(method);
        write_file(dir, &format!("curves/{s}.csv"), &buffer(|b| write_curves_csv(&curves, b))?, &mut manifest.curves)?;
        let only: Vec<&TrainingCurve> = curves.iter().map(|(_, c)| *c).collect();
        write_file(
            dir,
            &format!("curves/{s}_summary.csv"),
            &buffer(|b| write_curve_summary_csv(&only, b))?,
            &mut manifest.curves,
        )?;
    }

    let records: Vec<RunRecord> = done.iter().flat_map(|o| o.methods.iter().map(|m| m.record.clone())).collect();
    write_file(dir, RUNS_FILE, &buffer(|b| write_runs_csv(&records, b))?, &mut manifest.tables)?;
    let summary = summarize_records(&records);
    write_file(dir, SUMMARY_FILE, &buffer(|b| write_summary_csv(&summary, b))?, &mut manifest.tables)?;
    for o in &done {
        for (name, text) in &o.tables {
            write_file(dir, &format!("tables/{name}"), text.as_bytes(), &mut manifest.tables)?;
        }
        for g in &o.grids {
            let rel = format!("grids/{}.csv", g.name);
            if manifest.grids.contains(&rel) {
                continue;
            }
            write_file(dir, &rel, &buffer(|b| write_grid_csv(&g.values, &g.layout, b))?, &mut manifest.grids)?;
        }
        for (name, json) in &o.models {
            write_file(dir, &format!("models/{name}"), json.as_bytes(), &mut manifest.models)?;
        }
    }

    if !failures.is_empty() {
        let text = toml::to_string(&ErrorManifest {
            failure: failures.clone(),
        })?;
        fs::write(dir.join(ERROR_FILE), text)?;
    }
    fs::write(dir.join(MANIFEST_FILE), toml::to_string(&manifest)?)?;
    if !failures.is_empty() {
        return Err(Error::RunFailed {
            seeds: failures.iter().map(|f| f.seed).collect(),
            dir: dir.display().to_string(),
        });
    }
    Ok(RunArtifact {
        dir: dir.to_path_buf(),
        manifest,
    })
}

/// Command-line overrides applied on top of a spec file.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub kind: Option<ExperimentKind>,
}

impl RunOverrides {
    pub fn apply(&self, mut spec: ExperimentSpec) -> Result<ExperimentSpec> {
        if let Some(seeds) = &self.seeds {
            spec.seeds = seeds.clone();
        }
        if let Some(out) = &self.out {
            spec.out = Some(out.clone());
        }
        if let Some(kind) = self.kind {
            spec.kind = kind;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Runs `spec` and writes its artifact to `spec.out`. The artifact stores
/// the resolved spec.
pub fn run_spec(spec: &ExperimentSpec) -> Result<RunArtifact> {
    spec.validate()?;
    let spec = &spec.resolved();
    let dir = spec
        .out
        .clone()
        .ok_or_else(|| Error::config("out", "no output directory given"))?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let outputs = run_experiment(spec)?;
    write_artifact(&dir, spec, outputs, started_unix, clock.elapsed().as_secs_f64())
}

/// Loads the spec at `spec_path`, applies `overrides` and runs it.
pub fn cli_run(spec_path: &Path, overrides: &RunOverrides) -> Result<RunArtifact> {
    let text = fs::read_to_string(spec_path)?;
    let spec: ExperimentSpec = toml::from_str(&text)?;
    run_spec(&overrides.apply(spec)?)
}
