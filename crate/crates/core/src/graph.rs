//! The directed interaction matrix `L` and its eigen-structure.
//!
//! `L` has nonnegative off-diagonal weights, zero row sums and diagonal entries
//! strictly above `-1`. Its induced digraph has an edge `j -> i` whenever
//! `L[i][j] > 0`, and must be strongly connected. Under these conditions
//! `I + γL` has a unique positive left eigenvector `u` with `u·1 = m`, and the
//! spectral radius of `I + γL - 1uᵀ/m` contracts like `1 - αγ` for small `γ`.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total incoming weight assigned to each node by [`random_strongly_connected`].
pub const DEFAULT_INCOMING_WEIGHT: f64 = 0.8;

const ROW_SUM_TOL: f64 = 1e-12;
const EIGVEC_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("need at least 2 players, got {0}")]
    TooSmall(usize),
    #[error("expected {expected} entries for an {m}x{m} matrix, got {got}")]
    Shape {
        m: usize,
        expected: usize,
        got: usize,
    },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("off-diagonal entry ({row}, {col}) = {value} is negative")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum:e}, expected 0")]
    RowSumNonzero { row: usize, sum: f64 },
    #[error("diagonal entry {row} = {value} is not above -1")]
    DiagonalTooNegative { row: usize, value: f64 },
    #[error("induced digraph is not strongly connected (node {unreachable} unreachable)")]
    NotStronglyConnected { unreachable: usize },
    #[error("left eigenvector residual {residual:e} exceeds tolerance")]
    NumericalFailure { residual: f64 },
    #[error("contraction bound fails at the smallest grid point gamma = {gamma}")]
    NoValidGamma { gamma: f64 },
    #[error("gamma grid must be positive and ascending")]
    BadGrid,
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
}

/// Scale applied to every numerical tolerance of this module.
///
/// `Tolerance::default()` reproduces the documented thresholds
/// (row sums `1e-12`, eigenvector residual `1e-9`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub scale: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl Tolerance {
    fn row_sum(&self) -> f64 {
        ROW_SUM_TOL * self.scale
    }

    fn residual(&self) -> f64 {
        EIGVEC_RESIDUAL_TOL * self.scale
    }
}

/// A validated interaction matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeightMatrix", into = "RawWeightMatrix")]
pub struct WeightMatrix {
    m: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawWeightMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawWeightMatrix> for WeightMatrix {
    type Error = GraphError;

    fn try_from(raw: RawWeightMatrix) -> Result<Self, Self::Error> {
        WeightMatrix::validate(raw.m, raw.entries)
    }
}

impl From<WeightMatrix> for RawWeightMatrix {
    fn from(w: WeightMatrix) -> Self {
        RawWeightMatrix {
            m: w.m,
            entries: w.entries,
        }
    }
}

impl fmt::Debug for WeightMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "WeightMatrix(m = {})", self.m)?;
        for i in 0..self.m {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl WeightMatrix {
    /// Validates a row-major `m x m` matrix against the interaction-matrix invariants.
    pub fn validate(m: usize, entries: Vec<f64>) -> Result<Self, GraphError> {
        Self::validate_with(m, entries, &Tolerance::default())
    }

    pub fn validate_with(m: usize, entries: Vec<f64>, tol: &Tolerance) -> Result<Self, GraphError> {
        if m < 2 {
            return Err(GraphError::TooSmall(m));
        }
        if entries.len() != m * m {
            return Err(GraphError::Shape {
                m,
                expected: m * m,
                got: entries.len(),
            });
        }
        for (idx, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(GraphError::NonFinite {
                    row: idx / m,
                    col: idx % m,
                });
            }
        }
        for i in 0..m {
            for j in 0..m {
                let v = entries[i * m + j];
                if i != j && v < 0.0 {
                    return Err(GraphError::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        for i in 0..m {
            let sum: f64 = entries[i * m..(i + 1) * m].iter().sum();
            if sum.abs() > tol.row_sum() {
                return Err(GraphError::RowSumNonzero { row: i, sum });
            }
        }
        for i in 0..m {
            let d = entries[i * m + i];
            if d <= -1.0 {
                return Err(GraphError::DiagonalTooNegative { row: i, value: d });
            }
        }
        let w = Self { m, entries };
        if let Some(unreachable) = w.first_unreachable() {
            return Err(GraphError::NotStronglyConnected { unreachable });
        }
        Ok(w)
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Players `j` with `L[i][j] > 0`, i.e. the senders player `i` listens to.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(move |&(j, &w)| j != i && w > 0.0)
            .map(|(j, &w)| (j, w))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.entries)
    }

    /// Checks strong connectivity with one BFS along edges and one along reversed edges.
    fn first_unreachable(&self) -> Option<usize> {
        let m = self.m;
        // forward: j -> i iff L[i][j] > 0
        let forward = |node: usize| -> Vec<usize> {
            (0..m)
                .filter(|&i| i != node && self.get(i, node) > 0.0)
                .collect()
        };
        let backward = |node: usize| -> Vec<usize> {
            (0..m)
                .filter(|&j| j != node && self.get(node, j) > 0.0)
                .collect()
        };
        for next in [&forward as &dyn Fn(usize) -> Vec<usize>, &backward] {
            let mut seen = vec![false; m];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(n) = queue.pop_front() {
                for k in next(n) {
                    if !seen[k] {
                        seen[k] = true;
                        queue.push_back(k);
                    }
                }
            }
            if let Some(bad) = seen.iter().position(|s| !s) {
                return Some(bad);
            }
        }
        None
    }

    /// `L` with row `excluded` zeroed.
    pub fn reduced(&self, excluded: usize) -> Result<ReducedWeightMatrix, GraphError> {
        if excluded >= self.m {
            return Err(GraphError::PlayerOutOfRange(excluded));
        }
        let mut entries = self.entries.clone();
        entries[excluded * self.m..(excluded + 1) * self.m].fill(0.0);
        Ok(ReducedWeightMatrix {
            base: self.clone(),
            excluded,
            entries,
        })
    }
}

/// `L_{-i}`: the interaction matrix with the excluded player's row zeroed.
///
/// Since the off-diagonal part shares the same rows, zeroing row `i` of `L`
/// also zeroes row `i` of the off-diagonal part.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedWeightMatrix {
    base: WeightMatrix,
    excluded: usize,
    entries: Vec<f64>,
}

impl ReducedWeightMatrix {
    pub fn base(&self) -> &WeightMatrix {
        &self.base
    }

    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.base.m + j]
    }

    /// Nonnegative left null vector scaled to sum `m`.
    pub fn left_eigenvector(&self) -> Result<Vec<f64>, GraphError> {
        let m = self.base.m;
        let mut u = null_left_vector(m, &self.entries, &Tolerance::default())?;
        for v in &mut u {
            if v.abs() < 1e-12 {
                *v = 0.0;
            }
        }
        if u.iter().any(|&v| v < 0.0) {
            return Err(GraphError::NumericalFailure { residual: f64::NAN });
        }
        Ok(u)
    }
}

/// Ring plus independent Bernoulli extra edges, weighted `θ / indegree` per row.
///
/// Edge `j -> i` is stored as `L[i][j]`. The ring sends `i -> i + 1`; every
/// other ordered pair gains an edge with probability `extra_edge_prob`.
pub fn random_strongly_connected(
    m: usize,
    extra_edge_prob: f64,
    seed: u64,
) -> Result<WeightMatrix, GraphError> {
    random_strongly_connected_with(m, extra_edge_prob, DEFAULT_INCOMING_WEIGHT, seed)
}

pub fn random_strongly_connected_with(
    m: usize,
    extra_edge_prob: f64,
    incoming_weight: f64,
    seed: u64,
) -> Result<WeightMatrix, GraphError> {
    if m < 2 {
        return Err(GraphError::TooSmall(m));
    }
    let p = extra_edge_prob.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![false; m * m];
    for i in 0..m {
        adj[((i + 1) % m) * m + i] = true;
    }
    for i in 0..m {
        for j in 0..m {
            // draw for every ordered pair so the stream does not depend on the ring
            let hit = rng.gen_bool(p);
            if i != j && hit {
                adj[i * m + j] = true;
            }
        }
    }
    let mut entries = vec![0.0; m * m];
    for i in 0..m {
        let indeg = (0..m).filter(|&j| adj[i * m + j]).count();
        let w = incoming_weight / indeg as f64;
        let mut total = 0.0;
        for j in 0..m {
            if adj[i * m + j] {
                entries[i * m + j] = w;
                total += w;
            }
        }
        entries[i * m + i] = -total;
    }
    WeightMatrix::validate(m, entries)
}

/// Positive left eigenvector `u` of `L` (and of every `I + γL`), normalized to `Σu = m`.
pub fn left_eigenvector(l: &WeightMatrix) -> Result<Vec<f64>, GraphError> {
    left_eigenvector_with(l, &Tolerance::default())
}

pub fn left_eigenvector_with(l: &WeightMatrix, tol: &Tolerance) -> Result<Vec<f64>, GraphError> {
    let u = null_left_vector(l.m, &l.entries, tol)?;
    if u.iter().any(|&v| v <= 0.0) {
        return Err(GraphError::NumericalFailure { residual: f64::NAN });
    }
    Ok(u)
}

/// Solves `uᵀA = 0`, `Σu = m` by replacing the last equation with the normalization.
///
/// The rows of `Aᵀ` sum to zero whenever `A` has zero row sums, so the dropped
/// equation is redundant when the null space is one-dimensional.
fn null_left_vector(m: usize, entries: &[f64], tol: &Tolerance) -> Result<Vec<f64>, GraphError> {
    let a = DMatrix::from_row_slice(m, m, entries);
    let mut sys = a.transpose();
    for c in 0..m {
        sys[(m - 1, c)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(m);
    rhs[m - 1] = m as f64;
    let lu = sys.clone().lu();
    let mut u = lu.solve(&rhs).ok_or(GraphError::NumericalFailure {
        residual: f64::INFINITY,
    })?;
    // one step of iterative refinement
    let r = &rhs - &sys * &u;
    if let Some(du) = lu.solve(&r) {
        u += du;
    }
    let scale = m as f64 / u.sum();
    u *= scale;
    let residual = (u.transpose() * &a).amax();
    if !residual.is_finite() || residual > tol.residual() {
        return Err(GraphError::NumericalFailure { residual });
    }
    Ok(u.iter().copied().collect())
}

/// `I + γL - 1uᵀ/m`.
pub fn deflated_matrix(l: &WeightMatrix, u: &[f64], gamma: f64) -> DMatrix<f64> {
    let m = l.m;
    DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + gamma * l.get(i, j) - u[j] / m as f64
    })
}

/// Spectral radius of `I + γL - 1uᵀ/m`.
pub fn deflated_spectral_radius(l: &WeightMatrix, u: &[f64], gamma: f64) -> f64 {
    deflated_matrix(l, u, gamma)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Numerical eigen-structure attached to a validated `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphDiagnostics {
    pub left_eigenvector: Vec<f64>,
    pub contraction_margin: f64,
    pub gamma_ceiling: f64,
    /// `(γ, ρ(I + γL - 1uᵀ/m))` for every grid point up to the ceiling.
    pub radii: Vec<(f64, f64)>,
}

impl GraphDiagnostics {
    /// The contraction bound `1 - αγ` at the reported margin.
    pub fn bound(&self, gamma: f64) -> f64 {
        1.0 - self.contraction_margin * gamma
    }
}

/// Largest `α ∈ (0, 1)` with `ρ(I + γL - 1uᵀ/m) ≤ 1 - αγ` on the grid prefix that admits one.
///
/// The grid is scanned in ascending order and the ceiling is the last grid
/// point before the bound first fails.
pub fn contraction_margin(
    l: &WeightMatrix,
    gamma_grid: &[f64],
) -> Result<GraphDiagnostics, GraphError> {
    if gamma_grid.is_empty() || gamma_grid[0] <= 0.0 || gamma_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(GraphError::BadGrid);
    }
    let u = left_eigenvector(l)?;
    let mut alpha = f64::INFINITY;
    let mut radii = Vec::new();
    let mut ceiling = None;
    for &g in gamma_grid {
        let rho = deflated_spectral_radius(l, &u, g);
        let admissible = (1.0 - rho) / g;
        if !(admissible > 0.0) {
            break;
        }
        alpha = alpha.min(admissible);
        radii.push((g, rho));
        ceiling = Some(g);
    }
    let Some(gamma_ceiling) = ceiling else {
        return Err(GraphError::NoValidGamma {
            gamma: gamma_grid[0],
        });
    };
    // shave a relative ulp-scale margin so the bound also holds after rounding
    let alpha = (alpha * (1.0 - 1e-12)).min(1.0 - f64::EPSILON);
    Ok(GraphDiagnostics {
        left_eigenvector: u,
        contraction_margin: alpha,
        gamma_ceiling,
        radii,
    })
}
