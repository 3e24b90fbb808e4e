use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evil_core::pipeline::{
    cli_run, set_threads, summarize, write_summary_csv, ExperimentKind, RunArtifact, RunOverrides,
};

/// Evolved reward shaping and ensemble IRL experiments.
#[derive(Parser)]
#[command(name = "evil", version)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its artifact directory.
    Run(RunArgs),
    /// Compare artifacts of one experiment kind.
    Summarize {
        /// Artifact directories.
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve gridworld potentials and write them next to the oracle values.
    ExportHeatmap(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Seeds overriding the spec: `0,1,2` or a half-open range `0..5`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Artifact directory overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
struct SeedList(Vec<u64>);

fn parse_seeds(text: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        return Ok(SeedList((a..b).collect()));
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed `{s}`: {e}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

fn run(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<()> {
    let overrides = RunOverrides {
        seeds: args.seeds.clone().map(|s| s.0),
        out: args.out.clone(),
        kind,
    };
    let artifact = cli_run(&args.spec, &overrides).with_context(|| format!("running {}", args.spec.display()))?;
    let m = &artifact.manifest;
    println!(
        "{} seeds {:?} -> {} ({:.1}s, hash {})",
        m.kind,
        m.seeds,
        artifact.dir.display(),
        m.wall_clock_seconds,
        &m.config_hash[..12]
    );
    for p in artifact.grid_paths() {
        println!("  grid {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        set_threads(n)?;
    }
    match &cli.command {
        Command::Run(args) => run(args, None),
        Command::ExportHeatmap(args) => run(args, Some(ExperimentKind::GridworldHeatmap)),
        Command::Summarize { artifacts, out } => {
            let loaded = artifacts
                .iter()
                .map(|d| RunArtifact::load(d).with_context(|| format!("loading {}", d.display())))
                .collect::<Result<Vec<_>>>()?;
            for a in &loaded {
                a.verify().with_context(|| format!("verifying {}", a.dir.display()))?;
            }
            let rows = summarize(&loaded)?;
            match out {
                Some(path) => write_summary_csv(&rows, File::create(path)?)?,
                None => {
                    let mut stdout = io::stdout().lock();
                    write_summary_csv(&rows, &mut stdout)?;
                    stdout.flush()?;
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("0,1, 5").unwrap().0, vec![0, 1, 5]);
        assert_eq!(parse_seeds("2..5").unwrap().0, vec![2, 3, 4]);
        assert!(parse_seeds("a,b").is_err());
        assert!(parse_seeds("").unwrap().0.is_empty());
    }
}
