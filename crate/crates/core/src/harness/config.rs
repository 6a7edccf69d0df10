use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{BaselineParams, Engine};
use crate::game::{random_cournot, GameError, GameFile, GameProblem};
use crate::graph::{
    random_strongly_connected_with, GraphError, WeightMatrix, DEFAULT_INCOMING_WEIGHT,
};
use crate::schedules::{
    budget_targeted_noise, paper_default_schedules, PowerLawSequence, ScheduleError, ScheduleSet,
};

pub const SCHEMA: &str = "dpnash-experiment/1";

/// One problem found while validating a configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Diagnostic {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },
    #[error("cannot read {}: {message}", path.display())]
    Unreadable { path: PathBuf, message: String },
    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("unsupported schema {found:?}, expected {SCHEMA:?}")]
    Schema { found: String },
    #[error("{field}: {message}")]
    ConfigInvalid {
        field: &'static str,
        message: String,
    },
    #[error("schedule certificate fails: {}", failures.join(", "))]
    Certification { failures: Vec<&'static str> },
    #[error("game: {0}")]
    Game(GameError),
    #[error("graph: {0}")]
    Graph(GraphError),
    #[error("schedules: {0}")]
    Schedule(ScheduleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSource {
    RandomCournot {
        firms: usize,
        markets: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
    Inline {
        game: GameFile,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSource {
    /// Directed ring plus random extra edges.
    RandomStronglyConnected {
        extra_edge_prob: f64,
        seed: u64,
        #[serde(default = "default_incoming_weight")]
        incoming_weight: f64,
    },
    File {
        path: PathBuf,
    },
    Inline {
        matrix: WeightMatrix,
    },
}

fn default_incoming_weight() -> f64 {
    DEFAULT_INCOMING_WEIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub lambda: PowerLawSequence,
    pub gamma: PowerLawSequence,
    pub nu: PowerLawSequence,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = paper_default_schedules();
        Self {
            lambda: s.lambda,
            gamma: s.gamma,
            nu: s.nu,
        }
    }
}

/// Replaces `nu` by `(2·C̄·Φ/ε)·k^q` so the total budget equals `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonTarget {
    pub target: f64,
    pub noise_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub game: GameSource,
    pub graph: GraphSource,
    #[serde(default)]
    pub schedules: ScheduleConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Engine>,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default = "default_stride")]
    pub report_stride: u64,
    #[serde(default)]
    pub epsilon: Option<EpsilonTarget>,
    /// Overrides the gradient bound computed from the game.
    #[serde(default)]
    pub c_bar: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub baselines: BaselineParams,
    #[serde(default)]
    pub allow_invalid_schedules: bool,
    /// Free-form provenance written into manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

fn default_algorithms() -> Vec<Engine> {
    vec![
        Engine::Algorithm2,
        Engine::BaselinePersistent,
        Engine::BaselineGeometricDp,
    ]
}

fn default_runs() -> u64 {
    100
}

fn default_iterations() -> u64 {
    10_000
}

fn default_stride() -> u64 {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Defaults for every optional field with the given game and graph.
    pub fn new(game: GameSource, graph: GraphSource) -> Self {
        Self {
            schema: SCHEMA.into(),
            game,
            graph,
            schedules: ScheduleConfig::default(),
            algorithms: default_algorithms(),
            runs: default_runs(),
            iterations: default_iterations(),
            report_stride: default_stride(),
            epsilon: None,
            c_bar: None,
            master_seed: 0,
            output_dir: default_output_dir(),
            baselines: BaselineParams::default(),
            allow_invalid_schedules: false,
            provenance: None,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub runs: Option<u64>,
    pub master_seed: Option<u64>,
    pub allow_invalid_schedules: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        cfg.allow_invalid_schedules |= self.allow_invalid_schedules;
    }
}

/// A configuration with every reference loaded and checked.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub game_file: GameFile,
    pub game: GameProblem,
    pub graph: WeightMatrix,
    /// Schedules after an optional epsilon target has replaced `nu`.
    pub schedules: ScheduleSet,
    pub c_bar: Option<f64>,
}

impl ResolvedExperiment {
    /// The config with game and graph inlined, sufficient for a bit-exact rerun.
    pub fn manifest(&self) -> ExperimentConfig {
        let mut cfg = self.config.clone();
        cfg.game = GameSource::Inline {
            game: self.game_file.clone(),
        };
        cfg.graph = GraphSource::Inline {
            matrix: self.graph.clone(),
        };
        cfg.provenance = Some(serde_json::json!({
            "generator": concat!("dpnash ", env!("CARGO_PKG_VERSION")),
            "resolvedSchedules": {
                "lambda": self.schedules.lambda,
                "gamma": self.schedules.gamma,
                "nu": self.schedules.nu,
                "certificate": self.schedules.certificate,
            },
            "cBar": self.c_bar,
        }));
        cfg
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    diags: &mut Vec<Diagnostic>,
) -> Option<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            diags.push(Diagnostic::FileNotFound {
                path: path.to_path_buf(),
            });
            return None;
        }
        Err(e) => {
            diags.push(Diagnostic::Unreadable {
                path: path.to_path_buf(),
                message: e.to_string(),
            });
            return None;
        }
    };
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            diags.push(Diagnostic::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            });
            None
        }
    }
}

/// Reads, resolves and checks a config file, reporting every problem found.
pub fn validate_config(
    path: &Path,
    overrides: &Overrides,
) -> Result<ResolvedExperiment, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let Some(mut cfg) = read_json::<ExperimentConfig>(path, &mut diags) else {
        return Err(diags);
    };
    overrides.apply(&mut cfg);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.output_dir = resolve_path(&base, &cfg.output_dir);
    resolve_config(cfg, &base)
}

/// Checks an in-memory config. Relative paths are taken from `base`.
pub fn resolve_config(
    cfg: ExperimentConfig,
    base: &Path,
) -> Result<ResolvedExperiment, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    if cfg.schema != SCHEMA {
        diags.push(Diagnostic::Schema {
            found: cfg.schema.clone(),
        });
    }
    let mut invalid = |field: &'static str, message: String| {
        diags.push(Diagnostic::ConfigInvalid { field, message })
    };
    if cfg.runs == 0 {
        invalid("runs", "must be at least 1".into());
    }
    if cfg.iterations == 0 {
        invalid("iterations", "must be at least 1".into());
    }
    if cfg.report_stride == 0 {
        invalid("report_stride", "must be at least 1".into());
    }
    if cfg.algorithms.is_empty() {
        invalid("algorithms", "select at least one algorithm".into());
    }
    if cfg.algorithms.iter().collect::<BTreeSet<_>>().len() != cfg.algorithms.len() {
        invalid("algorithms", "duplicate entries".into());
    }
    if let Some(c) = cfg.c_bar {
        if !(c > 0.0 && c.is_finite()) {
            invalid("c_bar", format!("{c} must be positive"));
        }
    }
    let b = &cfg.baselines;
    if !(b.persistent_gamma > 0.0) {
        invalid("baselines.persistent_gamma", "must be positive".into());
    }
    if !(b.geometric_lambda0 > 0.0) {
        invalid("baselines.geometric_lambda0", "must be positive".into());
    }
    if !(b.geometric_ratio > 0.0 && b.geometric_ratio < 1.0) {
        invalid("baselines.geometric_ratio", "must lie in (0, 1)".into());
    }
    if !(b.geometric_gamma > 0.0) {
        invalid("baselines.geometric_gamma", "must be positive".into());
    }

    let game_file = match &cfg.game {
        GameSource::RandomCournot {
            firms,
            markets,
            seed,
        } => {
            if *firms < 2 || *markets < 1 {
                diags.push(Diagnostic::ConfigInvalid {
                    field: "game",
                    message: "need at least 2 firms and 1 market".into(),
                });
                None
            } else {
                Some(GameFile::Cournot(random_cournot(*firms, *markets, *seed)))
            }
        }
        GameSource::File { path } => read_json::<GameFile>(&resolve_path(base, path), &mut diags),
        GameSource::Inline { game } => Some(game.clone()),
    };
    let game = game_file
        .as_ref()
        .and_then(|g| g.build().map_err(|e| diags.push(Diagnostic::Game(e))).ok());

    let graph = match &cfg.graph {
        GraphSource::RandomStronglyConnected {
            extra_edge_prob,
            seed,
            incoming_weight,
        } => game.as_ref().and_then(|g| {
            random_strongly_connected_with(g.players(), *extra_edge_prob, *incoming_weight, *seed)
                .map_err(|e| diags.push(Diagnostic::Graph(e)))
                .ok()
        }),
        GraphSource::File { path } => {
            read_json::<WeightMatrix>(&resolve_path(base, path), &mut diags)
        }
        GraphSource::Inline { matrix } => Some(matrix.clone()),
    };
    if let (Some(g), Some(l)) = (&game, &graph) {
        if g.players() != l.size() {
            diags.push(Diagnostic::ConfigInvalid {
                field: "graph",
                message: format!("{} nodes for {} players", l.size(), g.players()),
            });
        }
    }

    let c_bar = cfg
        .c_bar
        .or_else(|| game.as_ref().and_then(GameProblem::grad_bound));
    if let Some(g) = &game {
        if cfg.algorithms.contains(&Engine::Algorithm1) && g.is_constrained() {
            diags.push(Diagnostic::ConfigInvalid {
                field: "algorithms",
                message: "alg1 needs an unconstrained game".into(),
            });
        }
        if cfg.algorithms.contains(&Engine::Algorithm2)
            && (0..g.players()).any(|i| g.constraint(i).is_none())
        {
            diags.push(Diagnostic::ConfigInvalid {
                field: "algorithms",
                message: "alg2 needs box constraints on every player".into(),
            });
        }
    }

    let s = &cfg.schedules;
    let mut nu = s.nu;
    if let Some(eps) = cfg.epsilon {
        match c_bar {
            Some(c) => match budget_targeted_noise(&s.lambda, eps.noise_exponent, eps.target, c) {
                Ok(t) => nu = t.nu,
                Err(e) => diags.push(Diagnostic::Schedule(e)),
            },
            None => diags.push(Diagnostic::ConfigInvalid {
                field: "epsilon",
                message: "a gradient bound is needed; set c_bar or use a boxed game".into(),
            }),
        }
    }
    let schedules = match [s.lambda, s.gamma, nu]
        .iter()
        .try_for_each(PowerLawSequence::validate)
    {
        Err(e) => {
            diags.push(Diagnostic::Schedule(e));
            None
        }
        Ok(()) => match ScheduleSet::new(s.lambda, s.gamma, nu) {
            Ok(set) => Some(set),
            Err(e) => {
                diags.push(Diagnostic::Schedule(e));
                None
            }
        },
    };
    if let Some(set) = &schedules {
        if !set.certificate.all()
            && !cfg.allow_invalid_schedules
            && cfg.algorithms.iter().any(|e| e.is_proposed())
        {
            diags.push(Diagnostic::Certification {
                failures: set.certificate.failures(),
            });
        }
    }
    if c_bar.is_none() {
        log::info!("no gradient bound available; privacy ledgers are skipped");
    }

    match (diags.is_empty(), game_file, game, graph, schedules) {
        (true, Some(game_file), Some(game), Some(graph), Some(schedules)) => {
            Ok(ResolvedExperiment {
                config: cfg,
                game_file,
                game,
                graph,
                schedules,
                c_bar,
            })
        }
        _ => Err(diags),
    }
}
