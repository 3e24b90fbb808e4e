//! Experiment specs, seeded multi-run orchestration and result export.

mod artifact;
mod run;
mod spec;
mod summary;

pub use artifact::{
    cli_run, run_spec, version_string, write_artifact, write_curve_summary_csv, write_curves_csv, Manifest,
    RunArtifact, RunOverrides, RunStatus, SeedFailure, ERROR_FILE, MANIFEST_FILE, RUNS_FILE, SPEC_FILE,
    SUMMARY_FILE,
};
pub use run::{
    average_curves, run_experiment, run_seed, slug, threshold, Grid, MethodResult, SeedOutput, BC, EVAL_EPISODES,
    EVIL, EVOLVED, EXPERT_CRITIC, IRL_PP, UNSHAPED, VANILLA_IRL, V_STAR,
};
pub use spec::{Ablation, DemoSpec, ExperimentKind, ExperimentSpec, MethodToggles, TransferSpec};
pub use summary::{
    read_runs_csv, summarize, summarize_records, write_runs_csv, write_summary_csv, Estimate, RunRecord, SummaryRow,
};

pub use crate::par::set_threads;
