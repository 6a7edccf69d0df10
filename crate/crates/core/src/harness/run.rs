use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ResolvedExperiment;
use super::HarnessError;
use crate::algorithms::{
    engine_schedule, run_trajectory, Engine, EngineSchedule, PlayerState, RunOptions,
};
use crate::game::{solve_equilibrium, EquilibriumSolution, GameProblem};
use crate::graph::left_eigenvector;
use crate::privacy::{BudgetModel, LedgerSnapshot, NoiseStream, PrivacyLedger};
use crate::seed;

const INIT_STREAM: u64 = 0x696e_6974;
const NOISE_STREAM: u64 = 0x6e6f_6973;

/// Box used for initial states of unconstrained players.
const FREE_INIT: (f64, f64) = (-1.0, 1.0);

/// One line of a trajectory trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub run_seed: u64,
    pub dist_to_ne: f64,
    pub consensus_error: f64,
    pub budget_spent: f64,
}

/// One line of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: u64,
    pub algorithm: String,
    pub mean_err: f64,
    pub var_err: f64,
    pub mean_consensus: f64,
    pub n_effective: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub runs: u64,
    pub failures: u64,
    /// Cumulative budget bound after the last iteration; NaN without a ledger.
    pub final_budget: f64,
    pub analytic_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateResult {
    pub equilibrium: EquilibriumSolution,
    pub rows: Vec<AggregateRow>,
    pub summaries: Vec<AlgorithmSummary>,
}

impl AggregateResult {
    pub fn rows_for(&self, engine: Engine) -> impl Iterator<Item = &AggregateRow> {
        self.rows
            .iter()
            .filter(move |r| r.algorithm == engine.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSettings {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Skip writing artifacts.
    pub dry: bool,
}

/// Streaming mean and sample variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample variance; 0 for a single observation.
    pub fn variance(&self) -> f64 {
        match self.n {
            0 => f64::NAN,
            1 => 0.0,
            n => (self.m2 / (n - 1) as f64).max(0.0),
        }
    }
}

struct JobResult {
    engine: Engine,
    rows: Vec<TraceRow>,
    failed: bool,
    ledger: Option<LedgerSnapshot>,
}

/// Uniform initial rows: coordinates of block `ℓ` are drawn in `K_ℓ`, or in
/// `[-1, 1]` when player `ℓ` is unconstrained.
pub fn initial_state(game: &GameProblem, seed: u64) -> PlayerState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = game.dims();
    let rows: Vec<Vec<f64>> = (0..game.players())
        .map(|_| {
            let mut row = Vec::with_capacity(game.total_dim());
            for (l, &d) in dims.iter().enumerate() {
                for c in 0..d {
                    let (lo, hi) = game.constraint(l).map_or(FREE_INIT, |b| (b.lo[c], b.hi[c]));
                    row.push(if hi > lo { rng.gen_range(lo..=hi) } else { lo });
                }
            }
            row
        })
        .collect();
    PlayerState::from_rows(dims, &rows).expect("rows built from game dimensions")
}

/// Noise master seed of Monte Carlo run `run`, shared by every algorithm.
pub fn run_noise(master: u64, run: u64) -> NoiseStream {
    NoiseStream::new(seed::derive(seed::run_seed(master, run), &[NOISE_STREAM]))
}

pub fn run_init_seed(master: u64, run: u64) -> u64 {
    seed::derive(seed::run_seed(master, run), &[INIT_STREAM])
}

fn report_ks(iterations: u64, stride: u64) -> Vec<u64> {
    let mut ks: Vec<u64> = (1..=iterations / stride).map(|j| j * stride).collect();
    if !iterations.is_multiple_of(stride) {
        ks.push(iterations);
    }
    ks
}

/// Solves the oracle, runs every (run, algorithm) trajectory and aggregates.
/// Artifacts are written to the configured output directory unless `settings.dry`.
pub fn run_experiment(
    exp: &ResolvedExperiment,
    settings: &RunSettings,
) -> Result<AggregateResult, HarnessError> {
    let cfg = &exp.config;
    let equilibrium = solve_equilibrium(&exp.game).map_err(HarnessError::Oracle)?;
    let u = left_eigenvector(&exp.graph)?;
    let schedules: Vec<(Engine, EngineSchedule)> = cfg
        .algorithms
        .iter()
        .map(|&e| engine_schedule(e, &exp.schedules, &cfg.baselines).map(|s| (e, s)))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(u64, usize)> = (0..cfg.runs)
        .flat_map(|r| (0..schedules.len()).map(move |a| (r, a)))
        .collect();
    let run_job = |&(run, a): &(u64, usize)| -> Result<JobResult, HarnessError> {
        let (engine, schedule) = schedules[a];
        let run_seed = seed::run_seed(cfg.master_seed, run);
        let init = initial_state(&exp.game, run_init_seed(cfg.master_seed, run));
        let opts = RunOptions {
            iterations: cfg.iterations,
            report_stride: cfg.report_stride,
            equilibrium: Some(&equilibrium.point),
            weights: &u,
            c_bar: exp.c_bar,
        };
        let noise = run_noise(cfg.master_seed, run);
        let t = run_trajectory(
            engine, &exp.game, &exp.graph, &schedule, &noise, init, &opts,
        )?;
        let rows = t
            .reports
            .iter()
            .map(|r| TraceRow {
                k: r.k,
                run_seed,
                dist_to_ne: r.dist_to_ne.unwrap_or(f64::NAN),
                consensus_error: r.consensus_error,
                budget_spent: r.budget_spent,
            })
            .collect();
        Ok(JobResult {
            engine,
            rows,
            failed: t.failure.is_some(),
            ledger: if run == 0 { t.ledger_snapshot() } else { None },
        })
    };
    let results: Vec<JobResult> = match settings.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?
            .install(|| jobs.par_iter().map(run_job).collect::<Result<_, _>>())?,
        None => jobs.par_iter().map(run_job).collect::<Result<_, _>>()?,
    };

    let ks = report_ks(cfg.iterations, cfg.report_stride);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut ledgers = BTreeMap::new();
    for &(engine, schedule) in &schedules {
        let mine: Vec<&JobResult> = results.iter().filter(|r| r.engine == engine).collect();
        let mut err = vec![Welford::default(); ks.len()];
        let mut cons = vec![Welford::default(); ks.len()];
        let mut budget = Welford::default();
        for r in mine.iter().filter(|r| !r.failed) {
            for (j, row) in r.rows.iter().enumerate() {
                err[j].push(row.dist_to_ne);
                cons[j].push(row.consensus_error);
            }
            if let Some(last) = r.rows.last() {
                budget.push(last.budget_spent);
            }
        }
        for (j, &k) in ks.iter().enumerate() {
            rows.push(AggregateRow {
                k,
                algorithm: engine.name().into(),
                mean_err: err[j].mean(),
                var_err: err[j].variance(),
                mean_consensus: cons[j].mean(),
                n_effective: err[j].count(),
            });
        }
        let failures = mine.iter().filter(|r| r.failed).count() as u64;
        if failures > 0 {
            log::warn!("{}: {failures} of {} runs aborted", engine.name(), cfg.runs);
        }
        let snapshot = mine.iter().find_map(|r| r.ledger.clone());
        let analytic_limit = exp.c_bar.and_then(|c| {
            let model = BudgetModel {
                lambda: schedule.lambda,
                nu: schedule.nu,
                first_index: 1,
            };
            let report = PrivacyLedger::with_model(c, model).ok()?.budget_report(0);
            report.finite.then_some(report.analytic_limit)
        });
        summaries.push(AlgorithmSummary {
            algorithm: engine.name().into(),
            runs: cfg.runs,
            failures,
            final_budget: budget.mean(),
            analytic_limit,
        });
        ledgers.insert(engine.name(), snapshot);
    }

    let result = AggregateResult {
        equilibrium,
        rows,
        summaries,
    };
    if !settings.dry {
        write_artifacts(exp, &results, &result, &ledgers)?;
    }
    Ok(result)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn trace_path(dir: &Path, engine: Engine) -> PathBuf {
    dir.join(format!("trace_{}.csv", engine.name()))
}

pub fn aggregate_path(dir: &Path) -> PathBuf {
    dir.join("aggregate.csv")
}

fn write_artifacts(
    exp: &ResolvedExperiment,
    results: &[JobResult],
    agg: &AggregateResult,
    ledgers: &BTreeMap<&str, Option<LedgerSnapshot>>,
) -> Result<(), HarnessError> {
    let dir = &exp.config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for &engine in &exp.config.algorithms {
        let rows = results
            .iter()
            .filter(|r| r.engine == engine)
            .flat_map(|r| r.rows.iter().copied());
        write_csv(&trace_path(dir, engine), rows)?;
    }
    write_csv(&aggregate_path(dir), agg.rows.iter())?;
    write_json(
        &dir.join("ledger.json"),
        &serde_json::json!({ "ledgers": ledgers, "summaries": agg.summaries }),
    )?;
    write_json(&dir.join("manifest.json"), &exp.manifest())?;
    log::info!("artifacts written to {}", dir.display());
    Ok(())
}

/// One line of the budget table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetRow {
    pub k: u64,
    pub spent: f64,
    pub analytic_limit: f64,
}

/// Cumulative spent budget at decades up to `horizon` and at `horizon`, next
/// to the analytic infinite-horizon value.
pub fn budget_table(
    exp: &ResolvedExperiment,
    engine: Engine,
    horizon: u64,
) -> Result<Vec<BudgetRow>, HarnessError> {
    let c_bar = exp.c_bar.ok_or(HarnessError::NoGradientBound)?;
    let s = engine_schedule(engine, &exp.schedules, &exp.config.baselines)?;
    let model = BudgetModel {
        lambda: s.lambda,
        nu: s.nu,
        first_index: 1,
    };
    let mut ledger = PrivacyLedger::with_model(c_bar, model)?;
    let limit = ledger.budget_report(0).analytic_limit;
    let mut out = Vec::new();
    let mut next = 1;
    for k in 1..=horizon {
        ledger.record_iteration(k, s.lambda.value(k), s.nu.value(k))?;
        if k == next || k == horizon {
            out.push(BudgetRow {
                k,
                spent: ledger.cumulative(),
                analytic_limit: limit,
            });
            if k == next {
                next *= 10;
            }
        }
    }
    Ok(out)
}
