use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saddle_core::experiment::{self, exit_code, ExperimentSpec};
use saddle_core::{Error, SolverKind};

#[derive(Parser)]
#[command(name = "saddle", version, about = "Run, sweep and compare saddle-point solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes trace.csv and summary.json.
    Run {
        /// Experiment spec, or a summary.json from an earlier run.
        spec: PathBuf,
    },
    /// Run the spec at several horizons and fit the rate; writes rate.csv.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
    },
    /// Run several solvers at a matched oracle budget; writes compare.csv.
    Compare {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        solvers: Vec<String>,
    },
}

#[derive(Args)]
struct Overrides {
    /// Master seed (replaces solver.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (replaces output.dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Compute the gap estimate with this many inner iterations.
    #[arg(long, global = true)]
    gap_budget: Option<usize>,
}

impl Overrides {
    fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.solver.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            spec.output.dir = dir.clone();
        }
        if let Some(budget) = self.gap_budget {
            spec.output.gap = true;
            spec.output.gap_budget = budget;
        }
    }
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<ExperimentSpec, ExitCode> {
    match ExperimentSpec::load(path) {
        Ok(mut spec) => {
            overrides.apply(&mut spec);
            Ok(spec)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Err(ExitCode::from(2))
        }
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { spec } => {
            let spec = match load(spec, &cli.overrides) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match experiment::execute(&spec) {
                Ok(art) => {
                    let s = &art.summary;
                    println!(
                        "{} {}: {} iterations, best stationarity {:e} at k = {}",
                        s.solver.name(),
                        s.status,
                        s.iterations,
                        s.best_stationarity,
                        s.k_star
                    );
                    if let Some(g) = &s.gap {
                        println!("gap estimate {:e}", g.gap);
                    }
                    if let Some(f) = &s.failure {
                        eprintln!("error: {f}");
                    }
                    println!("wrote {}", art.dir.display());
                    ExitCode::from(art.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { spec, horizons } => {
            let spec = match load(spec, &cli.overrides) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match experiment::sweep(&spec, horizons) {
                Ok(res) => {
                    for r in &res.rows {
                        println!("T = {:>6}  best {:e}  {}", r.horizon, r.best_stationarity, r.status);
                    }
                    match res.slope {
                        Some(s) => println!("slope {s:.4}"),
                        None => println!("slope n/a (needs 3 horizons)"),
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Compare { spec, solvers } => {
            let spec = match load(spec, &cli.overrides) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let kinds: Result<Vec<SolverKind>, _> = solvers.iter().map(|s| s.parse()).collect();
            let kinds = match kinds {
                Ok(k) => k,
                Err(e) => return fail(e),
            };
            match experiment::compare(&spec, &kinds) {
                Ok(res) => {
                    if let Some((budget, vals)) = res.rows.last() {
                        println!("best stationarity at {budget} oracle calls:");
                        for (name, v) in res.columns.iter().zip(vals) {
                            println!("  {name:>8} {v:e}");
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
