//! Differentially-private distributed Nash-equilibrium seeking on directed graphs.
//!
//! Players hold one decision variable and an estimate of every opponent's
//! decision. Every message they share is obfuscated with Laplace noise, and
//! the consensus coupling between players is weakened over time so that the
//! injected noise fades while the privacy budget stays finite.
//!
//! The crate is organised by concern:
//!
//! * [`graph`]: the interaction matrix, its validation and eigen-structure.
//! * [`schedules`]: stepsize, weakening and noise sequences with analytic
//!   summability certificates.
//! * [`game`]: game problems, the networked Nash-Cournot instance and a
//!   centralized equilibrium oracle.
//! * [`privacy`]: Laplace noise streams and the cumulative budget ledger.
//! * [`algorithms`]: the synchronous iteration engines and trajectories.
//! * [`harness`]: experiment configuration, Monte Carlo orchestration and
//!   persisted artifacts.

pub mod algorithms;
pub mod game;
pub mod graph;
pub mod harness;
pub mod privacy;
pub mod schedules;
pub mod seed;

pub use algorithms::{Engine, PlayerState, StepReport, Trajectory};
pub use game::{CournotSpec, EquilibriumSolution, GameProblem};
pub use graph::{GraphDiagnostics, WeightMatrix};
pub use privacy::{NoiseStream, PrivacyLedger};
pub use schedules::{PowerLawSequence, ScheduleSet, ValidityCertificate};
