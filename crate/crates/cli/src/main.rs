use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpnash_core::game::{solve_equilibrium, GameFile};
use dpnash_core::harness::{self, HarnessError, Overrides, RunSettings};

/// Differentially-private distributed Nash-equilibrium seeking experiments.
#[derive(Debug, Parser)]
#[command(name = "dpnash", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a config (or a manifest).
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        runs: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        allow_invalid_schedules: bool,
    },
    /// Check a config and list every problem found.
    Validate { config: PathBuf },
    /// Print the equilibrium of a game file and its fixed-point residual.
    Oracle { game: PathBuf },
    /// Print the spent and analytic privacy budget of every configured algorithm.
    Budget {
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
    },
}

fn load(config: &Path, overrides: &Overrides) -> Result<harness::ResolvedExperiment, HarnessError> {
    harness::validate_config(config, overrides).map_err(HarnessError::Config)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            out,
            runs,
            seed,
            threads,
            allow_invalid_schedules,
        } => {
            let overrides = Overrides {
                output_dir: out,
                runs,
                master_seed: seed,
                allow_invalid_schedules,
            };
            let exp = load(&config, &overrides)?;
            let result = harness::run_experiment(
                &exp,
                &RunSettings {
                    threads,
                    dry: false,
                },
            )?;
            for s in &result.summaries {
                let last = result
                    .rows
                    .iter()
                    .rev()
                    .find(|r| r.algorithm == s.algorithm)
                    .map_or(f64::NAN, |r| r.mean_err);
                println!(
                    "{:<22} final mean gap {:<12.6e} failures {}/{} budget {:.6}",
                    s.algorithm, last, s.failures, s.runs, s.final_budget
                );
            }
            println!("artifacts: {}", exp.config.output_dir.display());
            Ok(())
        }
        Command::Validate { config } => {
            let exp = load(&config, &Overrides::default())?;
            println!(
                "ok: {} players, {} algorithms, {} runs x {} iterations",
                exp.game.players(),
                exp.config.algorithms.len(),
                exp.config.runs,
                exp.config.iterations
            );
            println!(
                "certificate: {}",
                serde_json::to_string(&exp.schedules.certificate)?
            );
            Ok(())
        }
        Command::Oracle { game } => {
            let text = fs::read_to_string(&game).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => {
                    HarnessError::Config(vec![harness::Diagnostic::FileNotFound {
                        path: game.clone(),
                    }])
                }
                _ => HarnessError::Io {
                    path: game.clone(),
                    source,
                },
            })?;
            let file: GameFile = serde_json::from_str(&text).map_err(|e| {
                HarnessError::Config(vec![harness::Diagnostic::Parse {
                    path: game.clone(),
                    message: e.to_string(),
                }])
            })?;
            let problem = file
                .build()
                .map_err(|e| HarnessError::Config(vec![harness::Diagnostic::Game(e)]))?;
            let sol = solve_equilibrium(&problem).map_err(HarnessError::Oracle)?;
            println!("{}", serde_json::to_string_pretty(&sol)?);
            Ok(())
        }
        Command::Budget { config, horizon } => {
            let exp = load(&config, &Overrides::default())?;
            println!(
                "{:<22} {:>10} {:>16} {:>16}",
                "algorithm", "k", "spent", "limit"
            );
            for &engine in &exp.config.algorithms {
                for row in harness::budget_table(&exp, engine, horizon)? {
                    println!(
                        "{:<22} {:>10} {:>16.9} {:>16.9}",
                        engine.name(),
                        row.k,
                        row.spent,
                        row.analytic_limit
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors are configuration errors; help and version are not errors
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
