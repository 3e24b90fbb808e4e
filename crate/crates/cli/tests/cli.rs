use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SPEC: &str = r#"
kind = "irl-retrain"
seeds = [0]

[env]
kind = "gridworld"
horizon = 20

[demos]
count = 10

[retrain]
updates = 4
learning_rate = { start = 0.1, end = 0.01 }
critic_learning_rate = { start = 0.1, end = 0.01 }
gae_lambda = 0.2
epochs = 4
minibatches = 2
max_grad_norm = 0.0

[irl]
outer_iterations = 4
ensemble_size = 2

[es]
population_size = 4
generations = 2
sigma_init = 0.5
learning_rate = 0.5
common_inner_seed = true

[es.inner]
updates = 4
learning_rate = { start = 0.1, end = 0.01 }
gae_lambda = 0.2
"#;

fn evil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evil")).args(args).output().unwrap()
}

fn write_spec(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = evil(&["run", "--spec", &spec, "--out", &s(&a), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = evil(&["run", "--spec", &spec, "--seeds", "1..3", "--out", &s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(a.join("manifest.toml").exists());
    assert!(a.join("curves/irl-pp.csv").exists());

    let table = dir.path().join("summary.csv");
    let out = evil(&["summarize", &s(&a), &s(&b), "--out", &s(&table)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("method,seeds,single_seed"));
    assert!(rows[1].starts_with("irl++,3,false"), "{}", rows[1]);

    let out = evil(&["summarize", &s(&a)]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().starts_with("irl++,1,true"));
}

#[test]
fn export_heatmap_writes_two_grids() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out_dir = dir.path().join("heat");
    let out = evil(&["export-heatmap", "--spec", &spec, "--seeds", "4", "--out", &s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("grids/evolved_potential_seed4.csv").exists());
    assert!(out_dir.join("grids/v_star.csv").exists());
}

#[test]
fn invalid_specs_fail_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &SPEC.replace("seeds = [0]", "seeds = []"));
    let out_dir = dir.path().join("none");
    let out = evil(&["run", "--spec", &spec, "--out", &s(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
    assert!(!out_dir.exists());

    let spec = write_spec(dir.path(), &SPEC.replace("ensemble_size = 2", "ensemble_size = 0"));
    let out = evil(&["run", "--spec", &spec, "--out", &s(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("irl.ensemble_size"));
}

#[test]
fn summarize_rejects_mixed_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let a = dir.path().join("a");
    let h = dir.path().join("h");
    assert!(evil(&["run", "--spec", &spec, "--out", &s(&a)]).status.success());
    assert!(evil(&["export-heatmap", "--spec", &spec, "--out", &s(&h)]).status.success());
    let out = evil(&["summarize", &s(&a), &s(&h)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mixed experiment kinds"));
}
