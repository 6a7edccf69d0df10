//! Game problems, the networked Nash-Cournot instance and a centralized
//! equilibrium oracle.
//!
//! Player `i` controls `x_i ∈ R^{d_i}` and its pseudo-gradient is
//! `F_i(x_i, x_{-i}) = ∇_{x_i} f_i`. Stacking all `F_i` gives the game mapping
//! `φ`; when `φ` is strictly monotone on `K = K_1 × … × K_m` the Nash
//! equilibrium is unique and is the fixed point of `x ↦ Π_K[x - βφ(x)]`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stepsize at which [`EquilibriumSolution::residual`] is measured.
pub const RESIDUAL_STEP: f64 = 1e-3;
const SOLVE_TOL: f64 = 1e-10;
const SOLVE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid game specification: {0}")]
    InvalidSpec(String),
    #[error(
        "game mapping is not strictly monotone (smallest symmetric eigenvalue {min_eigenvalue:e})"
    )]
    NotMonotone { min_eigenvalue: f64 },
    #[error("oracle did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("gradient bound needs box constraints on every player")]
    UnboundedDomain,
    #[error("operation needs an affine game mapping")]
    NotAffine,
    #[error("a Lipschitz constant is required for non-affine games")]
    MissingLipschitz,
}

/// Row-major dense matrix used in serialized specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_dmatrix(&self) -> Result<DMatrix<f64>, GameError> {
        if self.data.len() != self.rows * self.cols {
            return Err(GameError::DimensionMismatch(format!(
                "{}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GameError> {
        if lo.len() != hi.len() {
            return Err(GameError::DimensionMismatch(
                "box bounds of different length".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(GameError::InvalidSpec(
                "box lower bound above upper bound".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(l, h);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((v, l), h)| l <= v && v <= h)
    }
}

/// Per-player pseudo-gradient `F_i`.
///
/// `profile` is the full stacked decision vector as seen by `player`: block
/// `player` holds its own decision, every other block its estimate of that
/// opponent.
pub trait PseudoGradient: Send + Sync {
    fn eval(&self, player: usize, profile: &[f64], out: &mut [f64]);

    /// Scalar cost `f_i` when the model has one.
    fn cost(&self, _player: usize, _profile: &[f64]) -> Option<f64> {
        None
    }
}

/// `φ(x) = A x + b` with player blocks laid out by `offsets`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    blocks: Vec<Range<usize>>,
}

impl AffineMap {
    pub fn new(
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        dims: &[usize],
    ) -> Result<Self, GameError> {
        let blocks = block_ranges(dims);
        let n = dims.iter().sum::<usize>();
        if matrix.nrows() != n || matrix.ncols() != n || offset.len() != n {
            return Err(GameError::DimensionMismatch(format!(
                "affine map {}x{} + {} for total dimension {n}",
                matrix.nrows(),
                matrix.ncols(),
                offset.len()
            )));
        }
        Ok(Self {
            matrix,
            offset,
            blocks,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.offset.as_slice().to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            *o += self
                .matrix
                .row(r)
                .iter()
                .zip(x)
                .map(|(a, v)| a * v)
                .sum::<f64>();
        }
        out
    }

    /// Smallest eigenvalue of the symmetric part of `A`.
    pub fn monotonicity_modulus(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    /// Spectral norm of `A`.
    pub fn lipschitz(&self) -> f64 {
        self.matrix.singular_values().max()
    }
}

impl PseudoGradient for AffineMap {
    fn eval(&self, player: usize, profile: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(self.blocks[player].clone()) {
            *o = self.offset[r]
                + self
                    .matrix
                    .row(r)
                    .iter()
                    .zip(profile)
                    .map(|(a, v)| a * v)
                    .sum::<f64>();
        }
    }
}

fn block_ranges(dims: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    dims.iter()
        .map(|&d| {
            let r = start..start + d;
            start += d;
            r
        })
        .collect()
}

/// A game with per-player decision blocks, pseudo-gradients and optional boxes.
#[derive(Clone)]
pub struct GameProblem {
    dims: Vec<usize>,
    blocks: Vec<Range<usize>>,
    gradient: Arc<dyn PseudoGradient>,
    affine: Option<Arc<AffineMap>>,
    constraints: Vec<Option<BoxSet>>,
    grad_bound: Option<f64>,
    lipschitz: Option<f64>,
}

impl fmt::Debug for GameProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameProblem")
            .field("dims", &self.dims)
            .field("affine", &self.affine.is_some())
            .field("constraints", &self.constraints)
            .field("grad_bound", &self.grad_bound)
            .finish()
    }
}

impl GameProblem {
    /// Game backed by an arbitrary pseudo-gradient.
    pub fn new(
        dims: Vec<usize>,
        gradient: Arc<dyn PseudoGradient>,
        constraints: Vec<Option<BoxSet>>,
    ) -> Result<Self, GameError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(GameError::DimensionMismatch(
                "every player needs a positive dimension".into(),
            ));
        }
        if constraints.len() != dims.len() {
            return Err(GameError::DimensionMismatch(format!(
                "{} constraint entries for {} players",
                constraints.len(),
                dims.len()
            )));
        }
        for (i, c) in constraints.iter().enumerate() {
            if let Some(b) = c {
                if b.dim() != dims[i] {
                    return Err(GameError::DimensionMismatch(format!(
                        "box of player {i} has dimension {}",
                        b.dim()
                    )));
                }
            }
        }
        Ok(Self {
            blocks: block_ranges(&dims),
            dims,
            gradient,
            affine: None,
            constraints,
            grad_bound: None,
            lipschitz: None,
        })
    }

    pub fn affine(map: AffineMap, constraints: Vec<Option<BoxSet>>) -> Result<Self, GameError> {
        let dims: Vec<usize> = map.blocks.iter().map(|r| r.len()).collect();
        let map = Arc::new(map);
        let mut g = Self::new(dims, map.clone(), constraints)?;
        g.lipschitz = Some(map.lipschitz());
        g.affine = Some(map);
        Ok(g)
    }

    /// Same game, different pseudo-gradient evaluator (used to wrap or instrument it).
    pub fn with_gradient(mut self, gradient: Arc<dyn PseudoGradient>) -> Self {
        self.gradient = gradient;
        self
    }

    pub fn with_grad_bound(mut self, c_bar: f64) -> Self {
        self.grad_bound = Some(c_bar);
        self
    }

    pub fn with_lipschitz(mut self, lip: f64) -> Self {
        self.lipschitz = Some(lip);
        self
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn block(&self, player: usize) -> Range<usize> {
        self.blocks[player].clone()
    }

    pub fn affine_map(&self) -> Option<&AffineMap> {
        self.affine.as_deref()
    }

    pub fn constraint(&self, player: usize) -> Option<&BoxSet> {
        self.constraints[player].as_ref()
    }

    pub fn is_constrained(&self) -> bool {
        self.constraints.iter().any(Option::is_some)
    }

    pub fn grad_bound(&self) -> Option<f64> {
        self.grad_bound
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    /// `F_i` at player `i`'s view `profile` of the full decision vector.
    pub fn pseudo_gradient(&self, player: usize, profile: &[f64], out: &mut [f64]) {
        self.gradient.eval(player, profile, out);
    }

    pub fn cost(&self, player: usize, profile: &[f64]) -> Option<f64> {
        self.gradient.cost(player, profile)
    }

    /// The stacked game mapping `φ(x)`.
    pub fn mapping(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for i in 0..self.players() {
            let r = self.block(i);
            self.gradient.eval(i, x, &mut out[r]);
        }
        out
    }

    pub fn project_player(&self, player: usize, x: &mut [f64]) {
        if let Some(b) = &self.constraints[player] {
            b.project(x);
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for i in 0..self.players() {
            let r = self.block(i);
            self.project_player(i, &mut x[r]);
        }
    }

    /// `max_i ‖x_i - Π_{K_i}[x_i - β F_i(x)]‖₂`.
    pub fn fixed_point_residual(&self, x: &[f64], beta: f64) -> f64 {
        let phi = self.mapping(x);
        let mut step: Vec<f64> = x.iter().zip(&phi).map(|(v, g)| v - beta * g).collect();
        self.project(&mut step);
        (0..self.players())
            .map(|i| {
                self.block(i)
                    .map(|r| (x[r] - step[r]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// `F_i(x) = A_ii x_i + Σ_{j≠i} A_ij x_j + b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGameSpec {
    /// `blocks[i][j]` is `A_ij` (`d_i × d_j`).
    pub blocks: Vec<Vec<DenseMatrix>>,
    pub offsets: Vec<Vec<f64>>,
    #[serde(default)]
    pub boxes: Option<Vec<BoxSet>>,
}

struct QuadraticModel {
    map: AffineMap,
    /// Whether every `A_ii` is symmetric, so that `F_i` is the gradient of a quadratic cost.
    potential: bool,
}

impl PseudoGradient for QuadraticModel {
    fn eval(&self, player: usize, profile: &[f64], out: &mut [f64]) {
        self.map.eval(player, profile, out)
    }

    fn cost(&self, player: usize, profile: &[f64]) -> Option<f64> {
        if !self.potential {
            return None;
        }
        // f_i = ½ x_iᵀA_ii x_i + (Σ_{j≠i} A_ij x_j + b_i)ᵀ x_i
        let r = self.map.blocks[player].clone();
        let mut total = 0.0;
        for row in r.clone() {
            let mut lin = self.map.offset[row];
            let mut quad = 0.0;
            for (col, &v) in profile.iter().enumerate() {
                let a = self.map.matrix[(row, col)];
                if r.contains(&col) {
                    quad += a * v;
                } else {
                    lin += a * v;
                }
            }
            total += profile[row] * (0.5 * quad + lin);
        }
        Some(total)
    }
}

impl QuadraticGameSpec {
    pub fn dims(&self) -> Vec<usize> {
        self.offsets.iter().map(Vec::len).collect()
    }

    pub fn build(&self) -> Result<GameProblem, GameError> {
        let dims = self.dims();
        let m = dims.len();
        if self.blocks.len() != m || self.blocks.iter().any(|row| row.len() != m) {
            return Err(GameError::DimensionMismatch(format!(
                "expected {m}x{m} coupling blocks"
            )));
        }
        let n: usize = dims.iter().sum();
        let ranges = block_ranges(&dims);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                let blk = self.blocks[i][j].to_dmatrix()?;
                if blk.nrows() != dims[i] || blk.ncols() != dims[j] {
                    return Err(GameError::DimensionMismatch(format!(
                        "block ({i},{j}) has shape {}x{}",
                        blk.nrows(),
                        blk.ncols()
                    )));
                }
                a.view_mut((ranges[i].start, ranges[j].start), (dims[i], dims[j]))
                    .copy_from(&blk);
            }
        }
        let b = DVector::from_iterator(n, self.offsets.iter().flatten().copied());
        let potential = (0..m).all(|i| {
            let d = a.view((ranges[i].start, ranges[i].start), (dims[i], dims[i]));
            (d - d.transpose()).amax() < 1e-14
        });
        let map = AffineMap::new(a, b, &dims)?;
        let constraints = match &self.boxes {
            Some(bx) if bx.len() == m => bx.iter().cloned().map(Some).collect(),
            Some(bx) => {
                return Err(GameError::DimensionMismatch(format!(
                    "{} boxes for {m} players",
                    bx.len()
                )))
            }
            None => vec![None; m],
        };
        let model = Arc::new(QuadraticModel {
            map: map.clone(),
            potential,
        });
        Ok(GameProblem::affine(map, constraints)?.with_gradient(model))
    }
}

/// Networked Nash-Cournot game: `m` firms supplying `N` markets with linear inverse demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotSpec {
    pub markets: usize,
    pub firms: usize,
    /// `B_i` (`N × d_i`), each column selecting one market.
    pub participation: Vec<DenseMatrix>,
    /// `C_i` per firm, one capacity per market it serves.
    pub capacities: Vec<Vec<f64>>,
    /// `Q_i` (`d_i × d_i`, symmetric positive definite).
    pub cost_quad: Vec<DenseMatrix>,
    pub cost_lin: Vec<Vec<f64>>,
    /// `P̄`.
    pub price_intercepts: Vec<f64>,
    /// Diagonal of `Ξ`.
    pub price_slopes: Vec<f64>,
}

struct CournotModel {
    map: AffineMap,
    selectors: Vec<DMatrix<f64>>,
    quad: Vec<DMatrix<f64>>,
    lin: Vec<DVector<f64>>,
    intercepts: DVector<f64>,
    slopes: DVector<f64>,
}

impl CournotModel {
    fn supply(&self, profile: &[f64]) -> DVector<f64> {
        let mut s = DVector::zeros(self.intercepts.len());
        for (i, b) in self.selectors.iter().enumerate() {
            let x = DVector::from_column_slice(&profile[self.map.blocks[i].clone()]);
            s += b * x;
        }
        s
    }
}

impl PseudoGradient for CournotModel {
    fn eval(&self, player: usize, profile: &[f64], out: &mut [f64]) {
        self.map.eval(player, profile, out)
    }

    fn cost(&self, player: usize, profile: &[f64]) -> Option<f64> {
        // f_i = x_iᵀQ_i x_i + q_iᵀx_i - (P̄ - ΞBx)ᵀB_i x_i
        let x = DVector::from_column_slice(&profile[self.map.blocks[player].clone()]);
        let price = &self.intercepts - self.slopes.component_mul(&self.supply(profile));
        let revenue = price.dot(&(&self.selectors[player] * &x));
        Some(x.dot(&(&self.quad[player] * &x)) + self.lin[player].dot(&x) - revenue)
    }
}

impl CournotSpec {
    pub fn dims(&self) -> Vec<usize> {
        self.participation.iter().map(|b| b.cols).collect()
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let (m, n) = (self.firms, self.markets);
        let mismatch = |what: &str| Err(GameError::DimensionMismatch(what.to_string()));
        if m == 0 || n == 0 {
            return mismatch("need at least one firm and one market");
        }
        if self.participation.len() != m
            || self.capacities.len() != m
            || self.cost_quad.len() != m
            || self.cost_lin.len() != m
        {
            return mismatch("per-firm lists must have one entry per firm");
        }
        if self.price_intercepts.len() != n || self.price_slopes.len() != n {
            return mismatch("price vectors must have one entry per market");
        }
        for i in 0..m {
            let b = self.participation[i].to_dmatrix()?;
            let d = b.ncols();
            if b.nrows() != n || d == 0 {
                return mismatch(&format!("B_{i} must be {n}x d_i with d_i ≥ 1"));
            }
            for c in 0..d {
                let col = b.column(c);
                let ones = col.iter().filter(|&&v| v == 1.0).count();
                if ones != 1 || col.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(GameError::InvalidSpec(format!(
                        "column {c} of B_{i} must select exactly one market"
                    )));
                }
            }
            if self.capacities[i].len() != d || self.cost_lin[i].len() != d {
                return mismatch(&format!("C_{i} and q_{i} must have length {d}"));
            }
            if self.capacities[i].iter().any(|&c| !(c > 0.0)) {
                return Err(GameError::InvalidSpec(format!(
                    "capacities of firm {i} must be positive"
                )));
            }
            let q = self.cost_quad[i].to_dmatrix()?;
            if q.nrows() != d || q.ncols() != d {
                return mismatch(&format!("Q_{i} must be {d}x{d}"));
            }
            if (&q - q.transpose()).amax() > 1e-12 || q.clone().cholesky().is_none() {
                return Err(GameError::InvalidSpec(format!(
                    "Q_{i} must be symmetric positive definite"
                )));
            }
        }
        if self.price_slopes.iter().any(|&c| !(c > 0.0)) {
            return Err(GameError::InvalidSpec(
                "price slopes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `F_i = 2Q_i x_i + q_i + B_iᵀΞB_i x_i - B_iᵀ(P̄ - ΞBx)` on boxes `[0, C_i]`.
    pub fn build(&self) -> Result<GameProblem, GameError> {
        self.validate()?;
        let dims = self.dims();
        let total: usize = dims.iter().sum();
        let ranges = block_ranges(&dims);
        let selectors: Vec<DMatrix<f64>> = self
            .participation
            .iter()
            .map(|b| b.to_dmatrix())
            .collect::<Result<_, _>>()?;
        let quad: Vec<DMatrix<f64>> = self
            .cost_quad
            .iter()
            .map(|q| q.to_dmatrix())
            .collect::<Result<_, _>>()?;
        let xi = DMatrix::from_diagonal(&DVector::from_column_slice(&self.price_slopes));
        let intercepts = DVector::from_column_slice(&self.price_intercepts);

        let mut a = DMatrix::zeros(total, total);
        let mut b = DVector::zeros(total);
        for i in 0..self.firms {
            let bi_t_xi = selectors[i].transpose() * &xi;
            for j in 0..self.firms {
                let mut blk = &bi_t_xi * &selectors[j];
                if i == j {
                    blk = blk * 2.0 + &quad[i] * 2.0;
                }
                a.view_mut((ranges[i].start, ranges[j].start), (dims[i], dims[j]))
                    .copy_from(&blk);
            }
            let off = DVector::from_column_slice(&self.cost_lin[i])
                - selectors[i].transpose() * &intercepts;
            b.rows_mut(ranges[i].start, dims[i]).copy_from(&off);
        }
        let map = AffineMap::new(a, b, &dims)?;
        let constraints = self
            .capacities
            .iter()
            .map(|c| BoxSet::new(vec![0.0; c.len()], c.clone()).map(Some))
            .collect::<Result<Vec<_>, _>>()?;
        let model = Arc::new(CournotModel {
            map: map.clone(),
            selectors,
            quad,
            lin: self
                .cost_lin
                .iter()
                .map(|q| DVector::from_column_slice(q))
                .collect(),
            intercepts,
            slopes: DVector::from_column_slice(&self.price_slopes),
        });
        let game = GameProblem::affine(map, constraints)?.with_gradient(model);
        let c_bar = grad_bound_on_box(&game)?;
        Ok(game.with_grad_bound(c_bar))
    }
}

/// Random Cournot instance with the documented sampling ranges.
///
/// The firm-market incidence draws every pair with probability 1/2 and is
/// redrawn until every firm serves a market and every market has a firm.
pub fn random_cournot(firms: usize, markets: usize, seed: u64) -> CournotSpec {
    assert!(
        firms >= 1 && markets >= 1,
        "need at least one firm and one market"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let incidence = loop {
        let inc: Vec<Vec<bool>> = (0..firms)
            .map(|_| (0..markets).map(|_| rng.gen_bool(0.5)).collect())
            .collect();
        let firms_ok = inc.iter().all(|row| row.iter().any(|&b| b));
        let markets_ok = (0..markets).all(|j| inc.iter().any(|row| row[j]));
        if firms_ok && markets_ok {
            break inc;
        }
    };
    let mut participation = Vec::with_capacity(firms);
    let mut capacities = Vec::with_capacity(firms);
    let mut cost_quad = Vec::with_capacity(firms);
    let mut cost_lin = Vec::with_capacity(firms);
    for row in &incidence {
        let served: Vec<usize> = (0..markets).filter(|&j| row[j]).collect();
        let d = served.len();
        let mut b = DMatrix::zeros(markets, d);
        for (c, &j) in served.iter().enumerate() {
            b[(j, c)] = 1.0;
        }
        participation.push(DenseMatrix::from_dmatrix(&b));
        capacities.push((0..d).map(|_| rng.gen_range(8.0..10.0)).collect());
        let nu: f64 = rng.gen_range(1.0..10.0);
        cost_quad.push(DenseMatrix::from_dmatrix(&(DMatrix::identity(d, d) * nu)));
        cost_lin.push((0..d).map(|_| rng.gen_range(1.0..2.0)).collect());
    }
    let price_intercepts = (0..markets).map(|_| rng.gen_range(10.0..20.0)).collect();
    let price_slopes = (0..markets).map(|_| rng.gen_range(1.0..3.0)).collect();
    CournotSpec {
        markets,
        firms,
        participation,
        capacities,
        cost_quad,
        cost_lin,
        price_intercepts,
        price_slopes,
    }
}

/// Serialized game file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GameFile {
    Cournot(CournotSpec),
    Quadratic(QuadraticGameSpec),
}

impl GameFile {
    pub fn build(&self) -> Result<GameProblem, GameError> {
        match self {
            Self::Cournot(spec) => spec.build(),
            Self::Quadratic(spec) => spec.build(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    LinearSolve,
    ProjectedIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub point: Vec<f64>,
    /// Fixed-point residual at step [`RESIDUAL_STEP`].
    pub residual: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

/// Centralized full-information oracle for the unique Nash equilibrium.
pub fn solve_equilibrium(game: &GameProblem) -> Result<EquilibriumSolution, GameError> {
    let mut modulus = None;
    if let Some(map) = game.affine_map() {
        let mu = map.monotonicity_modulus();
        let scale = map.matrix.amax().max(1.0);
        if !(mu > 1e-12 * scale) {
            return Err(GameError::NotMonotone { min_eigenvalue: mu });
        }
        modulus = Some(mu);
        if !game.is_constrained() {
            let rhs = -&map.offset;
            let x = map
                .matrix
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or(GameError::NotMonotone { min_eigenvalue: mu })?;
            let point: Vec<f64> = x.iter().copied().collect();
            let residual = game.fixed_point_residual(&point, RESIDUAL_STEP);
            return Ok(EquilibriumSolution {
                point,
                residual,
                method: SolveMethod::LinearSolve,
                iterations: 0,
            });
        }
    }
    let lip = game.lipschitz().ok_or(GameError::MissingLipschitz)?;
    // 0.5/L alone does not contract a non-symmetric monotone map; μ/L² does
    let beta = match modulus {
        Some(mu) => (0.5 / lip).min(mu / (lip * lip)),
        None => 0.5 / lip,
    };
    let mut x = vec![0.0; game.total_dim()];
    game.project(&mut x);
    let mut residual = f64::INFINITY;
    for it in 1..=SOLVE_MAX_ITERS {
        let phi = game.mapping(&x);
        for (v, g) in x.iter_mut().zip(&phi) {
            *v -= beta * g;
        }
        game.project(&mut x);
        if it % 50 == 0 {
            // natural-map residual; the reported one at RESIDUAL_STEP is smaller still
            residual = game.fixed_point_residual(&x, beta) / beta;
            if residual <= SOLVE_TOL {
                return Ok(EquilibriumSolution {
                    residual: game.fixed_point_residual(&x, RESIDUAL_STEP),
                    point: x,
                    method: SolveMethod::ProjectedIteration,
                    iterations: it,
                });
            }
        }
    }
    Err(GameError::NotConverged {
        residual,
        iterations: SOLVE_MAX_ITERS,
    })
}

/// Upper bound `C̄` on `max_i ‖F_i‖₁` over the constraint box.
///
/// Each gradient entry is affine, so its largest magnitude over the box is
/// attained at a vertex chosen coordinate-wise by the sign of each coefficient.
pub fn grad_bound_on_box(game: &GameProblem) -> Result<f64, GameError> {
    let map = game.affine_map().ok_or(GameError::NotAffine)?;
    let mut lo = Vec::with_capacity(game.total_dim());
    let mut hi = Vec::with_capacity(game.total_dim());
    for i in 0..game.players() {
        let b = game.constraint(i).ok_or(GameError::UnboundedDomain)?;
        lo.extend_from_slice(&b.lo);
        hi.extend_from_slice(&b.hi);
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(GameError::UnboundedDomain);
    }
    let mut best: f64 = 0.0;
    for i in 0..game.players() {
        let mut total = 0.0;
        for r in game.block(i) {
            let (mut max, mut min) = (map.offset[r], map.offset[r]);
            for c in 0..lo.len() {
                let a = map.matrix[(r, c)];
                let (p, q) = (a * lo[c], a * hi[c]);
                max += p.max(q);
                min += p.min(q);
            }
            total += max.abs().max(min.abs());
        }
        best = best.max(total);
    }
    Ok(best)
}
