//! `bsee`: solve configured scenarios, run the property suites and tabulate
//! convergence against closed forms.
//!
//! ```text
//! bsee solve --config builtin:picard_sin --out runs/sin
//! bsee verify --suite all
//! bsee convergence --config builtin:linear_drift_scalar --steps 8,16,32 --out runs/conv
//! ```
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver
//! non-convergence (including a residual above tolerance on tree models),
//! 4 property failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsee_core::scenario::{self, RunStatus};
use bsee_core::verify;
use bsee_core::Error;
use clap::{Parser, Subcommand};

const DEFAULT_OUT: &str = "bsee-out";

#[derive(Parser)]
#[command(name = "bsee", version, about = "Backward stochastic evolution equation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write summary.csv, manifest.json and timings.json.
    Solve {
        /// Config file, or `builtin:NAME`.
        #[arg(long)]
        config: String,
        /// Overrides `model.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BSEE_OUT_DIR", default_value = DEFAULT_OUT)]
        out: PathBuf,
        /// Also write every node of U and V to nodes.csv.
        #[arg(long)]
        dump_nodes: bool,
    },
    /// Run a property suite: all, gamma, stochastic, representation or solvers.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this directory as verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form error and observed order over several grid sizes.
    Convergence {
        #[arg(long)]
        config: String,
        /// Comma-separated step counts.
        #[arg(long, value_delimiter = ',', required = true)]
        steps: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BSEE_OUT_DIR", default_value = DEFAULT_OUT)]
        out: PathBuf,
    },
    /// List builtin scenarios, or print one as configuration text.
    Builtins { name: Option<String> },
}

enum Failure {
    Config(String),
    NonConvergence(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Property(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::NonConvergence(m) | Failure::Property(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonContraction { .. } | Error::MaxIterations { .. } | Error::InnerDivergence(_) => {
                Failure::NonConvergence(e.to_string())
            }
            other => Failure::Config(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn read_config(spec: &str) -> Result<String, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return scenario::builtin(name).map(str::to_owned).ok_or_else(|| {
            let names: Vec<_> = scenario::builtin_names().collect();
            Failure::Config(format!("unknown builtin `{name}` (available: {})", names.join(", ")))
        });
    }
    fs::read_to_string(spec).map_err(|e| io_failure(Path::new(spec), e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn solve(config: &str, seed: Option<u64>, out: &Path, dump_nodes: bool) -> Result<(), Failure> {
    let text = read_config(config)?;
    let run = scenario::run_scenario(&text, seed, dump_nodes)?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    write(out, "summary.csv", &run.summary_csv)?;
    write(out, "manifest.json", &run.manifest_json)?;
    write(out, "timings.json", &run.timings_json())?;
    if let Some(nodes) = &run.nodes_csv {
        write(out, "nodes.csv", nodes)?;
    }
    let m = &run.manifest;
    println!(
        "{}: residual {:.3e} (tol {:.1e}), {} iterations, status {:?}",
        out.display(),
        m.residual,
        m.tol,
        m.iterations,
        m.status
    );
    if let Some(e) = m.closed_form_error {
        println!("closed-form error {e:.6e}");
    }
    if m.status == RunStatus::ResidualAboveTol {
        let theta = m.guard.as_ref().map(|g| format!(", guard theta = {:.6}", g.theta)).unwrap_or_default();
        return Err(Failure::NonConvergence(format!(
            "residual {:.6e} exceeds tol {:.1e}{theta}",
            m.residual, m.tol
        )));
    }
    Ok(())
}

fn run_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let report = verify::run_suite(suite, seed)?;
    let json = report.to_json();
    print!("{json}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        write(dir, "verify.json", &json)?;
    }
    if !report.passed {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        return Err(Failure::Property(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

fn convergence(config: &str, steps: &[usize], seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let text = read_config(config)?;
    let table = scenario::run_convergence(&text, steps, seed)?;
    let csv = table.to_csv();
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    write(out, "convergence.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { config, seed, out, dump_nodes } => solve(config, *seed, out, *dump_nodes),
        Command::Verify { suite, seed, out } => run_verify(suite, *seed, out.as_deref()),
        Command::Convergence { config, steps, seed, out } => convergence(config, steps, *seed, out),
        Command::Builtins { name: None } => {
            scenario::builtin_names().for_each(|n| println!("{n}"));
            Ok(())
        }
        Command::Builtins { name: Some(n) } => read_config(&format!("builtin:{n}")).map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
