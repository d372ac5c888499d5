use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qbsde::solver::BsdeSolution;
use qbsde_cli::artifacts::{load_manifest, MANIFEST, REPORT, SOLUTION, SUMMARY};
use qbsde_cli::{reproduce, run, CliError, ExperimentConfig, RunOptions, Suite};
use serde_json::Value;

fn qbsde(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qbsde")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<_> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

const COLE_HOPF: &str = r#"
seed = 11
generator = "pure_quadratic(1)"
terminal = { kind = "linear", weights = [1.0] }
[grid]
horizon = 1.0
steps = 50
[ensemble]
paths = 200000
"#;

#[test]
fn solve_writes_a_csv_row_near_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", COLE_HOPF);
    let out = tmp.path().join("runs");
    let (code, stdout, stderr) = qbsde(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    let dir = only_run_dir(&out);
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with("-11"));
    let mut rdr = csv::Reader::from_path(dir.join(SUMMARY)).unwrap();
    let y0: f64 = rdr
        .records()
        .map(|r| r.unwrap())
        .find(|r| &r[3] == "y0")
        .map(|r| r[4].parse().unwrap())
        .unwrap();
    assert!((y0 + 0.5).abs() <= 0.03, "{y0}");
}

#[test]
fn check_on_example_ii_lists_its_assumptions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "generator = \"example_ii\"\n");
    let out = tmp.path().join("runs");
    let (code, ..) = qbsde(&["check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let rep = read_json(&only_run_dir(&out).join(REPORT));
    for key in ["A1", "A2", "B"] {
        assert_eq!(rep["report"][key]["passed"], Value::Bool(true), "{key}");
    }
    assert!(rep["report"].get("A3_candidate").is_none());
}

#[test]
fn zero_steps_is_rejected_before_any_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "generator = \"example_i\"\n[grid]\nsteps = 0\n");
    let out = tmp.path().join("runs");
    let (code, _, stderr) = qbsde(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("grid.steps"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn other_validation_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, text) in [
        "generator = \"example_v\"\n",
        "generator = \"example_i\"\n[crosscheck]\ntolerance = -1.0\n",
        "generator = \"example_i\"\n[ensemble]\npaths = 0\n",
        "generator = \"example_i\"\nunknown_key = 1\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), text);
        let (code, _, stderr) = qbsde(&["crosscheck", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("runs").to_str().unwrap()]);
        assert_eq!(code, 2, "{text}: {stderr}");
    }
    let (code, ..) = qbsde(&["solve", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code, 2);
}

fn small(suite: Suite) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(
        r#"
generator = "example_ii"
seed = 5
[grid]
steps = 10
[ensemble]
paths = 4000
"#,
    )
    .unwrap();
    cfg.suite = suite;
    cfg
}

#[test]
fn reproduce_is_identical_and_catches_an_altered_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let first = run(
        small(Suite::Solve),
        &RunOptions {
            out: tmp.path().join("runs"),
            ..Default::default()
        },
    )
    .unwrap();
    let manifest = first.dir.join(MANIFEST);
    let same = reproduce(&manifest, Some(&tmp.path().join("again")), Some(2)).unwrap();
    assert!(same.identical, "{:?}", same.diffs);

    let mut m: Value = read_json(&manifest);
    m["seed"] = Value::from(6u64);
    let altered = tmp.path().join("altered.json");
    fs::write(&altered, serde_json::to_vec(&m).unwrap()).unwrap();
    let drift = reproduce(&altered, Some(&tmp.path().join("drift")), None).unwrap();
    assert!(!drift.identical);
    assert!(drift.diffs.iter().any(|d| d.contains("ensemble sha256")), "{:?}", drift.diffs);

    let (code, stdout, _) = qbsde(&["reproduce", "--manifest", altered.to_str().unwrap(), "--out", tmp.path().join("cli").to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.starts_with("DRIFT"));
}

#[test]
fn artifacts_embed_the_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(Suite::Solve);
    cfg.output.write_solution = true;
    let o = run(
        cfg,
        &RunOptions {
            out: tmp.path().to_path_buf(),
            seed: Some(9),
            ..Default::default()
        },
    )
    .unwrap();
    let m = load_manifest(&o.dir.join(MANIFEST)).unwrap();
    assert_eq!((m.seed, m.config.seed), (9, 9));
    assert_eq!(m.config.generator, qbsde_cli::config::GeneratorSource::Fixture("example_ii".into()));
    let rep = read_json(&o.dir.join(REPORT));
    assert_eq!(rep["seed"], Value::from(9u64));
    assert_eq!(rep["config"]["ensemble"]["paths"], Value::from(4000u64));
    assert!(m.artifacts.iter().any(|a| a == SOLUTION));
    let (ens, y, _z) = BsdeSolution::read_blocks(&o.dir.join(SOLUTION)).unwrap();
    assert_eq!(Some(ens.sha256()), m.ensemble_sha256);
    let y0 = (0..ens.paths).map(|i| y[i * 11]).sum::<f64>() / ens.paths as f64;
    let recorded = rep["report"]["mean_y"][0]["mean"].as_f64().unwrap();
    assert!((y0 - recorded).abs() < 1e-12, "{y0} vs {recorded}");
}

#[test]
fn a_locked_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: tmp.path().to_path_buf(),
        ..Default::default()
    };
    let o = run(small(Suite::Check), &opts).unwrap();
    fs::write(o.dir.join("run.lock"), "").unwrap();
    match run(small(Suite::Check), &opts) {
        Err(e @ CliError::Locked(_)) => assert_eq!(e.exit_code(), 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn duality_outside_its_regime_fails_without_certifying() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(Suite::Duality);
    cfg.generator = qbsde_cli::config::GeneratorSource::Fixture("example_iii".into());
    let o = run(
        cfg,
        &RunOptions {
            out: tmp.path().to_path_buf(),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!o.passed());
    let rep = read_json(&o.dir.join(REPORT));
    assert!(rep["report"]["skipped"].is_string());
    assert_eq!(rep["report"]["plan"]["regime"], Value::from("strongly_convex"));
}

#[test]
fn tree_ensemble_uses_the_lattice() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(Suite::Solve);
    cfg.ensemble.kind = qbsde_cli::config::EnsembleKind::Tree;
    let o = run(
        cfg,
        &RunOptions {
            out: tmp.path().to_path_buf(),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(o.metric("paths"), Some(1024.0));
    assert_eq!(read_json(&o.dir.join(REPORT))["report"]["projector"], Value::from("lattice"));
}
