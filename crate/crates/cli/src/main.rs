use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbsde_cli::{reproduce, run, CliError, ExperimentConfig, RunOptions, Suite};

/// Quadratic BSDE experiments. Exit status: 0 pass, 1 fail or drift,
/// 2 invalid config, 3 compute error, 4 i/o or lock.
#[derive(Parser)]
#[command(name = "qbsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    Solve(Common),
    Conjugate(Common),
    Check(Common),
    Duality(Common),
    Crosscheck(Common),
    Compare(Common),
    Zmoment(Common),
    /// Re-run a manifest and compare it with the recorded run.
    Reproduce {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn suite_run(suite: Suite, c: Common) -> Result<bool, CliError> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let opts = RunOptions {
        out: c.out,
        suite: Some(suite),
        seed: c.seed,
        threads: c.threads,
    };
    let o = run(cfg, &opts)?;
    println!("{} {}", if o.passed() { "PASS" } else { "FAIL" }, o.dir.display());
    Ok(o.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(c) => suite_run(Suite::Solve, c),
        Command::Conjugate(c) => suite_run(Suite::Conjugate, c),
        Command::Check(c) => suite_run(Suite::Check, c),
        Command::Duality(c) => suite_run(Suite::Duality, c),
        Command::Crosscheck(c) => suite_run(Suite::Crosscheck, c),
        Command::Compare(c) => suite_run(Suite::Compare, c),
        Command::Zmoment(c) => suite_run(Suite::Zmoment, c),
        Command::Reproduce { manifest, out, threads } => reproduce(&manifest, out.as_deref(), threads).map(|r| {
            for d in &r.diffs {
                eprintln!("drift: {d}");
            }
            println!("{} {}", if r.identical { "IDENTICAL" } else { "DRIFT" }, r.dir.display());
            r.identical
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
