//! Synchronous iteration engines and trajectory recording.
//!
//! Every player `i` keeps a full row `X_(i) = (x_(i)1, …, x_(i)m)`: its own
//! decision in block `i` and estimates of the other players' decisions
//! elsewhere. One step reads iteration-`k` rows only and writes a fresh buffer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::GameProblem;
use crate::graph::WeightMatrix;
use crate::privacy::{BudgetModel, LedgerSnapshot, NoiseStream, PrivacyError, PrivacyLedger};
use crate::schedules::{ratio_series, PowerLawSequence, ScheduleError, ScheduleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgorithmError {
    #[error("non-finite state at iteration {k} (player {player})")]
    NonFiniteState { k: u64, player: usize },
    #[error("non-finite metric at iteration {k}")]
    NonFiniteMetric { k: u64 },
    #[error("this engine needs an unconstrained game")]
    ConstrainedGame,
    #[error("this engine needs box constraints on every player")]
    UnconstrainedGame,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{name} = {value} must be positive and finite")]
    NonpositiveStep { name: &'static str, value: f64 },
    #[error("iterations and report stride must be at least 1")]
    EmptyRun,
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Engine {
    #[serde(rename = "alg1")]
    Algorithm1,
    #[serde(rename = "alg2")]
    Algorithm2,
    #[serde(rename = "baseline-persistent")]
    BaselinePersistent,
    #[serde(rename = "baseline-geometric-dp")]
    BaselineGeometricDp,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::Algorithm1,
        Engine::Algorithm2,
        Engine::BaselinePersistent,
        Engine::BaselineGeometricDp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Algorithm1 => "alg1",
            Engine::Algorithm2 => "alg2",
            Engine::BaselinePersistent => "baseline-persistent",
            Engine::BaselineGeometricDp => "baseline-geometric-dp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Whether the engine runs the weakened-coupling schedules that must be certified.
    pub fn is_proposed(self) -> bool {
        matches!(self, Engine::Algorithm1 | Engine::Algorithm2)
    }
}

/// All players' rows, stored as an `m × D` row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
    k: u64,
}

impl PlayerState {
    pub fn zeros(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in dims {
            acc += d;
            offsets.push(acc);
        }
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.len() * acc],
            offsets,
            k: 0,
        }
    }

    /// Every player starts with the same row `profile`.
    pub fn consensual(dims: &[usize], profile: &[f64]) -> Result<Self, AlgorithmError> {
        let rows = vec![profile.to_vec(); dims.len()];
        Self::from_rows(dims, &rows)
    }

    pub fn from_rows(dims: &[usize], rows: &[Vec<f64>]) -> Result<Self, AlgorithmError> {
        let mut s = Self::zeros(dims);
        let width = s.width();
        if rows.len() != dims.len() || rows.iter().any(|r| r.len() != width) {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "expected {} rows of length {width}",
                dims.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            s.row_mut(i).copy_from_slice(r);
        }
        Ok(s)
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total decision dimension `D = Σ d_i`.
    pub fn width(&self) -> usize {
        self.offsets[self.dims.len()]
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.data[i * w..(i + 1) * w]
    }

    /// `x_(i)ℓ`.
    pub fn block(&self, i: usize, l: usize) -> &[f64] {
        &self.row(i)[self.offsets[l]..self.offsets[l + 1]]
    }

    pub fn decision(&self, i: usize) -> &[f64] {
        self.block(i, i)
    }

    /// Stacked decisions `(x_(1)1, …, x_(m)m)`.
    pub fn decisions(&self) -> Vec<f64> {
        (0..self.players())
            .flat_map(|i| self.decision(i).iter().copied())
            .collect()
    }

    fn check(&self, game: &GameProblem, l: &WeightMatrix) -> Result<(), AlgorithmError> {
        if self.dims != game.dims() {
            return Err(AlgorithmError::DimensionMismatch(
                "state and game dimensions differ".into(),
            ));
        }
        if l.size() != self.players() {
            return Err(AlgorithmError::DimensionMismatch(format!(
                "{} players but a {}-node graph",
                self.players(),
                l.size()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DecisionRule {
    /// Consensus on the decision plus a gradient step, optionally projected.
    Coupled { project: bool },
    /// Projected gradient step only.
    Projected,
}

/// Per-step sequence values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub gamma: f64,
    pub lambda: f64,
    pub nu: f64,
}

fn positive(name: &'static str, value: f64) -> Result<(), AlgorithmError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AlgorithmError::NonpositiveStep { name, value })
    }
}

/// Obfuscated messages: row `j` holds `x_(j)ℓ + ζ_(j)ℓ` for every `ℓ`.
///
/// Noise is drawn for every pair whether or not some player listens to `j`.
fn messages(state: &PlayerState, noise: &NoiseStream, nu: f64) -> Vec<f64> {
    let mut msg = state.data.clone();
    let w = state.width();
    let mut zeta = Vec::new();
    for j in 0..state.players() {
        for l in 0..state.players() {
            let (a, b) = (state.offsets[l], state.offsets[l + 1]);
            zeta.resize(b - a, 0.0);
            noise.fill(j, l, state.k, nu, &mut zeta);
            for (m, z) in msg[j * w + a..j * w + b].iter_mut().zip(&zeta) {
                *m += z;
            }
        }
    }
    msg
}

fn step_impl(
    state: &PlayerState,
    game: &GameProblem,
    l: &WeightMatrix,
    p: StepParams,
    noise: &NoiseStream,
    rule: DecisionRule,
    order: &[usize],
) -> Result<PlayerState, AlgorithmError> {
    state.check(game, l)?;
    positive("gamma", p.gamma)?;
    positive("lambda", p.lambda)?;
    if !noise.is_silent() {
        positive("nu", p.nu)?;
    }
    let m = state.players();
    let w = state.width();
    let msg = messages(state, noise, p.nu);
    let mut next = state.clone();
    next.k = state.k + 1;
    let mut grad = Vec::new();
    for &i in order {
        let xi = state.row(i);
        let out = next.row_mut(i);
        let coupled = matches!(rule, DecisionRule::Coupled { .. });
        for (j, lij) in l.in_neighbors(i) {
            let mj = &msg[j * w..(j + 1) * w];
            for blk in 0..m {
                if blk == i && !coupled {
                    continue;
                }
                for c in state.offsets[blk]..state.offsets[blk + 1] {
                    out[c] += p.gamma * lij * (mj[c] - xi[c]);
                }
            }
        }
        let own = state.offsets[i]..state.offsets[i + 1];
        grad.resize(own.len(), 0.0);
        game.pseudo_gradient(i, xi, &mut grad);
        for (o, g) in out[own.clone()].iter_mut().zip(&grad) {
            *o -= p.lambda * g;
        }
        let project = match rule {
            DecisionRule::Coupled { project } => project,
            DecisionRule::Projected => true,
        };
        if project {
            game.project_player(i, &mut out[own]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(AlgorithmError::NonFiniteState {
                k: state.k,
                player: i,
            });
        }
    }
    debug_assert!(next.data.len() == m * w);
    Ok(next)
}

/// One round of the weakened-coupling algorithm on an unconstrained game.
pub fn algorithm1_step(
    state: &PlayerState,
    game: &GameProblem,
    l: &WeightMatrix,
    gamma: f64,
    lambda: f64,
    nu: f64,
    noise: &NoiseStream,
) -> Result<PlayerState, AlgorithmError> {
    if game.is_constrained() {
        return Err(AlgorithmError::ConstrainedGame);
    }
    let order: Vec<usize> = (0..state.players()).collect();
    step_impl(
        state,
        game,
        l,
        StepParams { gamma, lambda, nu },
        noise,
        DecisionRule::Coupled { project: false },
        &order,
    )
}

/// One round of the projected algorithm: the decision takes a projected
/// gradient step, the estimates follow the same weakened consensus.
pub fn algorithm2_step(
    state: &PlayerState,
    game: &GameProblem,
    l: &WeightMatrix,
    gamma: f64,
    lambda: f64,
    nu: f64,
    noise: &NoiseStream,
) -> Result<PlayerState, AlgorithmError> {
    if (0..game.players()).any(|i| game.constraint(i).is_none()) {
        return Err(AlgorithmError::UnconstrainedGame);
    }
    let order: Vec<usize> = (0..state.players()).collect();
    step_impl(
        state,
        game,
        l,
        StepParams { gamma, lambda, nu },
        noise,
        DecisionRule::Projected,
        &order,
    )
}

/// Coupled update without weakening. On constrained games the decision is projected.
pub fn baseline_step(
    state: &PlayerState,
    game: &GameProblem,
    l: &WeightMatrix,
    params: StepParams,
    noise: &NoiseStream,
) -> Result<PlayerState, AlgorithmError> {
    let order: Vec<usize> = (0..state.players()).collect();
    let rule = DecisionRule::Coupled {
        project: game.is_constrained(),
    };
    step_impl(state, game, l, params, noise, rule, &order)
}

/// Runs one step of `engine` processing players in `order`. The result does
/// not depend on the order.
pub fn step_in_order(
    engine: Engine,
    state: &PlayerState,
    game: &GameProblem,
    l: &WeightMatrix,
    params: StepParams,
    noise: &NoiseStream,
    order: &[usize],
) -> Result<PlayerState, AlgorithmError> {
    let mut seen = vec![false; state.players()];
    for &i in order {
        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
            return Err(AlgorithmError::DimensionMismatch(
                "order must be a permutation of the players".into(),
            ));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(AlgorithmError::DimensionMismatch(
            "order must be a permutation of the players".into(),
        ));
    }
    let rule = rule_for(engine, game)?;
    step_impl(state, game, l, params, noise, rule, order)
}

fn rule_for(engine: Engine, game: &GameProblem) -> Result<DecisionRule, AlgorithmError> {
    match engine {
        Engine::Algorithm1 if game.is_constrained() => Err(AlgorithmError::ConstrainedGame),
        Engine::Algorithm1 => Ok(DecisionRule::Coupled { project: false }),
        Engine::Algorithm2 if (0..game.players()).any(|i| game.constraint(i).is_none()) => {
            Err(AlgorithmError::UnconstrainedGame)
        }
        Engine::Algorithm2 => Ok(DecisionRule::Projected),
        Engine::BaselinePersistent | Engine::BaselineGeometricDp => Ok(DecisionRule::Coupled {
            project: game.is_constrained(),
        }),
    }
}

/// Knobs of the comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Coupling weight of the persistent baseline.
    pub persistent_gamma: f64,
    pub geometric_lambda0: f64,
    pub geometric_ratio: f64,
    pub geometric_gamma: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            persistent_gamma: 1.0,
            geometric_lambda0: 0.1,
            geometric_ratio: 0.99,
            geometric_gamma: 0.5,
        }
    }
}

/// The three sequences one engine consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineSchedule {
    pub lambda: PowerLawSequence,
    pub gamma: PowerLawSequence,
    pub nu: PowerLawSequence,
}

impl EngineSchedule {
    pub fn params(&self, index: u64) -> StepParams {
        StepParams {
            gamma: self.gamma.value(index),
            lambda: self.lambda.value(index),
            nu: self.nu.value(index),
        }
    }
}

/// Resolves the schedules of `engine` given the proposed method's schedules.
///
/// The geometric baseline uses a constant noise level chosen so that its total
/// budget `2C̄·Σλ_geo/ν` equals the proposed method's `2C̄·Σλ/ν`.
pub fn engine_schedule(
    engine: Engine,
    set: &ScheduleSet,
    baseline: &BaselineParams,
) -> Result<EngineSchedule, AlgorithmError> {
    Ok(match engine {
        Engine::Algorithm1 | Engine::Algorithm2 => EngineSchedule {
            lambda: set.lambda,
            gamma: set.gamma,
            nu: set.nu,
        },
        Engine::BaselinePersistent => EngineSchedule {
            lambda: set.lambda,
            gamma: PowerLawSequence::constant(baseline.persistent_gamma),
            nu: set.nu,
        },
        Engine::BaselineGeometricDp => {
            let lambda =
                PowerLawSequence::geometric(baseline.geometric_lambda0, baseline.geometric_ratio);
            lambda.validate()?;
            let one = PowerLawSequence::constant(1.0);
            let geo = ratio_series(&lambda, &one, 1)?.value;
            let prop = ratio_series(&set.lambda, &set.nu, 1)?.value;
            EngineSchedule {
                lambda,
                gamma: PowerLawSequence::constant(baseline.geometric_gamma),
                nu: PowerLawSequence::constant(geo / prop),
            }
        }
    })
}

/// Euclidean norm that does not overflow for large finite entries.
fn norm2(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = v.clone().fold(0.0, |m: f64, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}

/// `‖x - x*‖₂` over the stacked decisions.
pub fn dist_to_ne(state: &PlayerState, x_star: &[f64]) -> f64 {
    let d = state.decisions();
    norm2(d.iter().zip(x_star).map(|(a, b)| a - b))
}

/// `Σ_i ‖X_i - 1·x̄_iᵀ‖_F` with `x̄_i = (1/m) Σ_ℓ u_ℓ x_(ℓ)i`.
pub fn consensus_error(state: &PlayerState, u: &[f64]) -> f64 {
    let m = state.players();
    let mut total = 0.0;
    for i in 0..m {
        let range = state.offsets[i]..state.offsets[i + 1];
        let mut mean = vec![0.0; range.len()];
        for (l, &ul) in u.iter().enumerate() {
            for (a, v) in mean.iter_mut().zip(state.block(l, i)) {
                *a += ul * v / m as f64;
            }
        }
        total +=
            norm2((0..m).flat_map(|l| state.block(l, i).iter().zip(&mean).map(|(v, a)| v - a)));
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Number of completed steps.
    pub k: u64,
    pub decisions: Vec<f64>,
    pub dist_to_ne: Option<f64>,
    pub consensus_error: f64,
    /// Budget spent by the step that produced this report.
    pub budget_increment: f64,
    /// Cumulative budget bound; NaN when no ledger is kept.
    pub budget_spent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions<'a> {
    pub iterations: u64,
    pub report_stride: u64,
    /// Ground-truth equilibrium for `distToNE`.
    pub equilibrium: Option<&'a [f64]>,
    /// Left eigenvector used by the consensus metric.
    pub weights: &'a [f64],
    /// Gradient bound for the ledger. No ledger is kept without it or with silent noise.
    pub c_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub engine: Engine,
    pub reports: Vec<StepReport>,
    pub ledger: Option<PrivacyLedger>,
    /// Set when the run aborted; `reports` then hold everything before the abort.
    pub failure: Option<AlgorithmError>,
    pub final_state: PlayerState,
}

impl Trajectory {
    pub fn ledger_snapshot(&self) -> Option<LedgerSnapshot> {
        self.ledger.as_ref().map(PrivacyLedger::snapshot)
    }
}

/// Iterates `engine` from `init`. Step `t` (1-based) uses sequence index `t`
/// and noise substreams keyed by `t - 1`. A report is taken after every
/// `report_stride`-th step and after the last one.
pub fn run_trajectory(
    engine: Engine,
    game: &GameProblem,
    l: &WeightMatrix,
    schedule: &EngineSchedule,
    noise: &NoiseStream,
    init: PlayerState,
    opts: &RunOptions<'_>,
) -> Result<Trajectory, AlgorithmError> {
    if opts.iterations == 0 || opts.report_stride == 0 {
        return Err(AlgorithmError::EmptyRun);
    }
    init.check(game, l)?;
    if opts.weights.len() != init.players() {
        return Err(AlgorithmError::DimensionMismatch(
            "consensus weights must have one entry per player".into(),
        ));
    }
    let rule = rule_for(engine, game)?;
    let mut ledger = match opts.c_bar {
        Some(c) if !noise.is_silent() => Some(PrivacyLedger::with_model(
            c,
            BudgetModel {
                lambda: schedule.lambda,
                nu: schedule.nu,
                first_index: 1,
            },
        )?),
        _ => None,
    };
    let order: Vec<usize> = (0..init.players()).collect();
    let mut state = init;
    let mut reports = Vec::with_capacity(opts.iterations.div_ceil(opts.report_stride) as usize);
    let mut failure = None;
    for t in 1..=opts.iterations {
        let p = schedule.params(t);
        let next = match step_impl(&state, game, l, p, noise, rule, &order) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{} aborted at step {t}: {e}", engine.name());
                failure = Some(e);
                break;
            }
        };
        state = next;
        let increment = match ledger.as_mut() {
            Some(led) => led.record_iteration(t, p.lambda, p.nu)?,
            None => f64::NAN,
        };
        if t % opts.report_stride == 0 || t == opts.iterations {
            let report = StepReport {
                k: t,
                decisions: state.decisions(),
                dist_to_ne: opts.equilibrium.map(|x| dist_to_ne(&state, x)),
                consensus_error: consensus_error(&state, opts.weights),
                budget_increment: increment,
                budget_spent: ledger.as_ref().map_or(f64::NAN, PrivacyLedger::cumulative),
            };
            if !(report.consensus_error.is_finite() && report.dist_to_ne.is_none_or(f64::is_finite))
            {
                failure = Some(AlgorithmError::NonFiniteMetric { k: t });
                break;
            }
            reports.push(report);
        }
    }
    Ok(Trajectory {
        engine,
        reports,
        ledger,
        failure,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{BoxSet, DenseMatrix, QuadraticGameSpec};

    fn derived_spec() -> QuadraticGameSpec {
        let m = |v: f64| DenseMatrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        };
        QuadraticGameSpec {
            blocks: vec![vec![m(2.0), m(1.0)], vec![m(-1.0), m(2.0)]],
            offsets: vec![vec![-2.0], vec![-2.0]],
            boxes: None,
        }
    }

    fn two_node() -> WeightMatrix {
        WeightMatrix::validate(2, vec![-0.6, 0.6, 0.2, -0.2]).unwrap()
    }

    #[test]
    fn hand_evaluated_step() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::from_rows(&[1, 1], &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let n = algorithm1_step(
            &s,
            &game,
            &two_node(),
            0.1,
            0.1,
            1.0,
            &NoiseStream::silent(),
        )
        .unwrap();
        assert!((n.decision(0)[0] - 0.26).abs() < 1e-15);
        assert_eq!(n.iteration(), 1);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::consensual(&[1, 1], &[0.4, 1.2]).unwrap();
        for engine in [
            Engine::Algorithm1,
            Engine::BaselinePersistent,
            Engine::BaselineGeometricDp,
        ] {
            let p = StepParams {
                gamma: 0.3,
                lambda: 0.1,
                nu: 1.0,
            };
            let n = step_in_order(
                engine,
                &s,
                &game,
                &two_node(),
                p,
                &NoiseStream::silent(),
                &[0, 1],
            )
            .unwrap();
            for (a, b) in n.decisions().iter().zip([0.4, 1.2]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn projection_clips() {
        let mut spec = derived_spec();
        spec.boxes = Some(vec![BoxSet::new(vec![0.0], vec![2.0]).unwrap(); 2]);
        let game = spec.build().unwrap();
        // F_1(1, 2) = 2·0 + 2 = 2, so λF = 3 at λ = 1.5
        let s = PlayerState::consensual(&[1, 1], &[1.0, 2.0]).unwrap();
        let n = algorithm2_step(
            &s,
            &game,
            &two_node(),
            0.1,
            1.5,
            1.0,
            &NoiseStream::silent(),
        )
        .unwrap();
        assert_eq!(n.decision(0)[0], 0.0);
        // lower corner with F_1(0, 3) = 1 pushing outward
        let mut spec = derived_spec();
        spec.boxes = Some(vec![
            BoxSet::new(vec![0.0], vec![2.0]).unwrap(),
            BoxSet::new(vec![0.0], vec![3.0]).unwrap(),
        ]);
        let game = spec.build().unwrap();
        let s = PlayerState::consensual(&[1, 1], &[0.0, 3.0]).unwrap();
        let n = algorithm2_step(
            &s,
            &game,
            &two_node(),
            0.1,
            0.1,
            1.0,
            &NoiseStream::silent(),
        )
        .unwrap();
        assert_eq!(n.decision(0)[0], 0.0);
    }

    #[test]
    fn engines_enforce_domains() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::consensual(&[1, 1], &[0.0, 0.0]).unwrap();
        let l = two_node();
        let noise = NoiseStream::silent();
        assert_eq!(
            algorithm2_step(&s, &game, &l, 0.1, 0.1, 1.0, &noise),
            Err(AlgorithmError::UnconstrainedGame)
        );
        let mut spec = derived_spec();
        spec.boxes = Some(vec![BoxSet::new(vec![0.0], vec![2.0]).unwrap(); 2]);
        let boxed = spec.build().unwrap();
        assert_eq!(
            algorithm1_step(&s, &boxed, &l, 0.1, 0.1, 1.0, &noise),
            Err(AlgorithmError::ConstrainedGame)
        );
        assert!(matches!(
            algorithm1_step(&s, &game, &l, 0.0, 0.1, 1.0, &noise),
            Err(AlgorithmError::NonpositiveStep { name: "gamma", .. })
        ));
    }

    #[test]
    fn persistent_equals_alg1_at_unit_gamma() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::from_rows(&[1, 1], &[vec![0.3, -0.2], vec![0.9, 1.1]]).unwrap();
        let noise = NoiseStream::new(11);
        let a = algorithm1_step(&s, &game, &two_node(), 1.0, 0.1, 0.5, &noise).unwrap();
        let p = StepParams {
            gamma: 1.0,
            lambda: 0.1,
            nu: 0.5,
        };
        let b = baseline_step(&s, &game, &two_node(), p, &noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_state_aborts() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::consensual(&[1, 1], &[f64::MAX, 0.0]).unwrap();
        let r = algorithm1_step(
            &s,
            &game,
            &two_node(),
            0.5,
            1.0,
            1.0,
            &NoiseStream::silent(),
        );
        assert!(matches!(
            r,
            Err(AlgorithmError::NonFiniteState { k: 0, .. })
        ));
    }

    #[test]
    fn consensus_metric() {
        let u = [0.5, 1.5];
        let s = PlayerState::consensual(&[1, 1], &[0.4, 1.2]).unwrap();
        assert!(consensus_error(&s, &u) < 1e-15);
        let s = PlayerState::from_rows(&[1, 1], &[vec![0.4, 1.2], vec![0.4, 1.3]]).unwrap();
        assert!(consensus_error(&s, &u) > 0.0);
    }

    #[test]
    fn report_count_and_labels() {
        let game = derived_spec().build().unwrap();
        let s = PlayerState::consensual(&[1, 1], &[0.0, 0.0]).unwrap();
        let sched = EngineSchedule {
            lambda: PowerLawSequence::constant(0.1),
            gamma: PowerLawSequence::constant(0.5),
            nu: PowerLawSequence::constant(1.0),
        };
        let opts = RunOptions {
            iterations: 25,
            report_stride: 10,
            equilibrium: Some(&[0.4, 1.2]),
            weights: &[0.5, 1.5],
            c_bar: Some(1.0),
        };
        let t = run_trajectory(
            Engine::Algorithm1,
            &game,
            &two_node(),
            &sched,
            &NoiseStream::new(1),
            s,
            &opts,
        )
        .unwrap();
        let ks: Vec<u64> = t.reports.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![10, 20, 25]);
        assert!((t.reports[2].budget_spent - 25.0 * 0.2).abs() < 1e-12);
        assert_eq!(t.ledger.unwrap().len(), 25);
    }

    #[test]
    fn geometric_baseline_matches_budget() {
        let set = crate::schedules::paper_default_schedules();
        let s = engine_schedule(
            Engine::BaselineGeometricDp,
            &set,
            &BaselineParams::default(),
        )
        .unwrap();
        let geo = ratio_series(&s.lambda, &s.nu, 1).unwrap().value;
        let prop = ratio_series(&set.lambda, &set.nu, 1).unwrap().value;
        assert!((geo - prop).abs() < 1e-9 * prop);
    }

    #[test]
    fn engine_names_round_trip() {
        for e in Engine::ALL {
            assert_eq!(Engine::from_name(e.name()), Some(e));
            assert_eq!(
                serde_json::to_string(&e).unwrap(),
                format!("\"{}\"", e.name())
            );
        }
    }
}
