//! Run directories, manifests and reproduction.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Suite};
use crate::suites::{execute, Metric};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.csv";
pub const SOLUTION: &str = "solution.bin";
const LOCK: &str = "run.lock";

/// Relative tolerance for summary values in [`reproduce`].
pub const REPRODUCE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub suite: Option<Suite>,
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub suite: Suite,
    pub seed: u64,
    pub threads: usize,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub ensemble_sha256: Option<String>,
    pub summary: Vec<Metric>,
    pub passed: bool,
    pub error: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.manifest.summary.iter().find(|m| m.name == name).and_then(|m| m.value)
    }
}

/// SHA-256 of the resolved config with the seed left out, so one directory
/// name component carries the config and the other the seed.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut v = cfg.canonical_json();
    if let Some(o) = v.as_object_mut() {
        o.remove("seed");
    }
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Lock, CliError> {
        let p = dir.join(LOCK);
        OpenOptions::new().write(true).create_new(true).open(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => CliError::Locked(dir.to_path_buf()),
            _ => CliError::Io(e),
        })?;
        Ok(Lock(p))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_vec_pretty(v).map_err(|e| CliError::Format(e.to_string()))?)?;
    Ok(())
}

fn write_summary(path: &Path, hash: &str, seed: u64, suite: Suite, rows: &[Metric]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let fmt = |e: csv::Error| CliError::Format(e.to_string());
    w.write_record(["config_hash", "seed", "suite", "metric", "value"]).map_err(fmt)?;
    for m in rows {
        let v = m.value.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
        w.write_record([hash, &seed.to_string(), suite.name(), &m.name, &v]).map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<(T, usize), CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let n = pool.current_num_threads();
    Ok((pool.install(f), n))
}

/// Validates, executes the suite and writes all artifacts. A suite failure
/// is reported through [`RunOutcome::passed`]; compute errors still leave the
/// manifest and report behind.
pub fn run(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    if let Some(s) = opts.suite {
        cfg.suite = s;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let resolved = cfg.resolve()?;
    let hash = config_hash(&cfg);
    let dir = opts.out.join(format!("{}-{}", &hash[..12], cfg.seed));
    fs::create_dir_all(&dir)?;
    let _lock = Lock::acquire(&dir)?;
    log::info!("{} run in {}", cfg.suite, dir.display());

    let (result, threads) = with_pool(opts.threads, || execute(&cfg, &resolved))?;
    let mut manifest = Manifest {
        tool: "qbsde-cli".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: qbsde::VERSION.into(),
        suite: cfg.suite,
        seed: cfg.seed,
        threads,
        config_hash: hash.clone(),
        config: cfg.clone(),
        ensemble_sha256: None,
        summary: Vec::new(),
        passed: false,
        error: None,
        artifacts: vec![REPORT.into(), SUMMARY.into()],
    };
    let header = json!({ "suite": cfg.suite, "seed": cfg.seed, "config_hash": hash, "config": cfg });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.error = Some(e.to_string());
            let mut rep = header;
            rep["passed"] = json!(false);
            rep["error"] = json!(e.to_string());
            write_json(&dir.join(REPORT), &rep)?;
            write_summary(&dir.join(SUMMARY), &hash, cfg.seed, cfg.suite, &[])?;
            write_json(&dir.join(MANIFEST), &manifest)?;
            return Err(e);
        }
    };
    manifest.ensemble_sha256 = outcome.ensemble.as_ref().map(|e| e.sha256());
    manifest.summary = outcome.summary;
    manifest.passed = outcome.passed;
    if cfg.output.write_solution {
        if let (Some(sol), Some(ens)) = (&outcome.solution, &outcome.ensemble) {
            sol.write(ens, &dir.join(SOLUTION))?;
            manifest.artifacts.push(SOLUTION.into());
            manifest.artifacts.push(format!("{SOLUTION}.json"));
        }
    }
    let mut rep = header;
    rep["passed"] = json!(outcome.passed);
    rep["ensemble_sha256"] = json!(manifest.ensemble_sha256);
    rep["summary"] = json!(manifest.summary);
    rep["report"] = outcome.report;
    write_json(&dir.join(REPORT), &rep)?;
    write_summary(&dir.join(SUMMARY), &hash, cfg.seed, cfg.suite, &manifest.summary)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(RunOutcome { dir, manifest })
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
pub struct ReproduceOutcome {
    pub dir: PathBuf,
    pub identical: bool,
    pub diffs: Vec<String>,
}

/// Re-runs a manifest and compares ensembles bit for bit and summary values
/// to [`REPRODUCE_TOLERANCE`]. The new run goes to `out`, or to a
/// `reproduce` directory next to the manifest.
pub fn reproduce(manifest_path: &Path, out: Option<&Path>, threads: Option<usize>) -> Result<ReproduceOutcome, CliError> {
    let old = load_manifest(manifest_path)?;
    let mut diffs = Vec::new();
    let recomputed = config_hash(&old.config);
    if recomputed != old.config_hash {
        diffs.push(format!("config hash {} recorded, {recomputed} recomputed", old.config_hash));
    }
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join("reproduce"),
    };
    let opts = RunOptions {
        out,
        suite: Some(old.suite),
        seed: Some(old.seed),
        threads,
    };
    let new = run(old.config.clone(), &opts)?;
    let m = &new.manifest;
    if m.ensemble_sha256 != old.ensemble_sha256 {
        diffs.push(format!("ensemble sha256 {:?} recorded, {:?} now", old.ensemble_sha256, m.ensemble_sha256));
    }
    if m.passed != old.passed {
        diffs.push(format!("passed {} recorded, {} now", old.passed, m.passed));
    }
    for a in &old.summary {
        match m.summary.iter().find(|b| b.name == a.name) {
            None => diffs.push(format!("{}: missing from the new run", a.name)),
            Some(b) => match (a.value, b.value) {
                (Some(x), Some(y)) if (x - y).abs() <= REPRODUCE_TOLERANCE * x.abs().max(1.0) => {}
                (None, None) => {}
                (x, y) => diffs.push(format!("{}: {x:?} recorded, {y:?} now", a.name)),
            },
        }
    }
    for b in &m.summary {
        if !old.summary.iter().any(|a| a.name == b.name) {
            diffs.push(format!("{}: new metric", b.name));
        }
    }
    let outcome = ReproduceOutcome {
        dir: new.dir,
        identical: diffs.is_empty(),
        diffs,
    };
    write_json(&outcome.dir.join("reproduce.json"), &json!({ "manifest": manifest_path, "identical": outcome.identical, "diffs": outcome.diffs }))?;
    Ok(outcome)
}
