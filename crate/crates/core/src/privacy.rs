//! Laplace noise for shared messages and cumulative privacy accounting.
//!
//! Every message `x_(i)ℓ` that player `i` shares at iteration `k` is perturbed
//! by a vector of independent `Lap(ν^k)` draws. With gradients bounded by `C̄`
//! in ℓ1, one iteration has sensitivity at most `2·C̄·λ^k`, so the iteration
//! spends at most `2·C̄·λ^k/ν^k` of the budget. The ledger sums these bounds.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedules::{ratio_series, CompensatedSum, PowerLawSequence, ScheduleError};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("parameter {name} = {value} must be positive")]
    NonpositiveParameter { name: &'static str, value: f64 },
    #[error("iteration {k} recorded after iteration {last}")]
    OutOfOrder { k: u64, last: u64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Counter-based family of Laplace substreams keyed by `(sender, target, iteration)`.
///
/// Each substream is a ChaCha8 generator seeded with a hash of the master seed
/// and the triple, so any substream can be constructed on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    master_seed: u64,
    silent: bool,
}

impl NoiseStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            silent: false,
        }
    }

    /// A stream that emits zeros. Only meant for noiseless reference runs.
    pub fn silent() -> Self {
        Self {
            master_seed: 0,
            silent: true,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    pub fn substream(&self, sender: usize, target: usize, k: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed::derive(
            self.master_seed,
            &[sender as u64, target as u64, k],
        ))
    }

    /// Fills `out` with independent `Lap(nu)` draws from substream `(sender, target, k)`.
    pub fn fill(&self, sender: usize, target: usize, k: u64, nu: f64, out: &mut [f64]) {
        if self.silent {
            out.fill(0.0);
            return;
        }
        let mut rng = self.substream(sender, target, k);
        for x in out.iter_mut() {
            *x = laplace(&mut rng, nu);
        }
    }

    pub fn sample(&self, sender: usize, target: usize, k: u64, dim: usize, nu: f64) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.fill(sender, target, k, nu, &mut v);
        v
    }
}

/// Inverse-CDF Laplace draw. `u` is taken from the open interval `(0, 1)`,
/// which keeps `1 - 2|u - 1/2|` strictly positive.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, nu: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    let v = u - 0.5;
    -nu * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

/// Schedules the ledger uses to bound the budget still to be spent.
///
/// Entry `j` of the history corresponds to sequence index `first_index + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetModel {
    pub lambda: PowerLawSequence,
    pub nu: PowerLawSequence,
    pub first_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    c_bar: f64,
    increments: Vec<f64>,
    cumulative: CompensatedSum,
    last_k: Option<u64>,
    model: Option<BudgetModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BudgetReport {
    pub spent_through_t0: f64,
    /// Spent budget plus the analytic bound on everything after `T0`.
    /// Infinite when the series diverges, NaN when no schedule model is attached.
    pub analytic_limit: f64,
    pub limit_error: f64,
    pub finite: bool,
}

/// The ledger snapshot persisted next to every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerSnapshot {
    pub label: String,
    pub c_bar: f64,
    pub spent: Vec<f64>,
    pub cumulative: f64,
    pub analytic_limit: Option<f64>,
    pub finite: bool,
}

impl PrivacyLedger {
    pub fn new(c_bar: f64) -> Result<Self, PrivacyError> {
        if !(c_bar > 0.0 && c_bar.is_finite()) {
            return Err(PrivacyError::NonpositiveParameter {
                name: "cBar",
                value: c_bar,
            });
        }
        Ok(Self {
            c_bar,
            increments: Vec::new(),
            cumulative: CompensatedSum::default(),
            last_k: None,
            model: None,
        })
    }

    pub fn with_model(c_bar: f64, model: BudgetModel) -> Result<Self, PrivacyError> {
        model.lambda.validate()?;
        model.nu.validate()?;
        let mut ledger = Self::new(c_bar)?;
        ledger.model = Some(model);
        Ok(ledger)
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative.value()
    }

    /// Appends the bound `2·C̄·λ^k/ν^k` and returns it.
    pub fn record_iteration(
        &mut self,
        k: u64,
        lambda_k: f64,
        nu_k: f64,
    ) -> Result<f64, PrivacyError> {
        for (name, value) in [("lambda_k", lambda_k), ("nu_k", nu_k)] {
            if !(value > 0.0) {
                return Err(PrivacyError::NonpositiveParameter { name, value });
            }
        }
        if let Some(last) = self.last_k {
            if k <= last {
                return Err(PrivacyError::OutOfOrder { k, last });
            }
        }
        let inc = 2.0 * self.c_bar * lambda_k / nu_k;
        self.increments.push(inc);
        self.cumulative.add(inc);
        self.last_k = Some(k);
        Ok(inc)
    }

    pub fn spent_through(&self, t0: usize) -> f64 {
        let mut s = CompensatedSum::default();
        for &x in &self.increments[..t0.min(self.increments.len())] {
            s.add(x);
        }
        s.value()
    }

    pub fn budget_report(&self, t0: usize) -> BudgetReport {
        let t0 = t0.min(self.increments.len());
        let spent = self.spent_through(t0);
        let Some(model) = self.model else {
            return BudgetReport {
                spent_through_t0: spent,
                analytic_limit: f64::NAN,
                limit_error: f64::NAN,
                finite: false,
            };
        };
        match ratio_series(&model.lambda, &model.nu, model.first_index + t0 as u64) {
            Ok(tail) => BudgetReport {
                spent_through_t0: spent,
                analytic_limit: spent + 2.0 * self.c_bar * tail.value,
                limit_error: 2.0 * self.c_bar * tail.error_bound,
                finite: true,
            },
            Err(_) => BudgetReport {
                spent_through_t0: spent,
                analytic_limit: f64::INFINITY,
                limit_error: 0.0,
                finite: false,
            },
        }
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let report = self.budget_report(self.increments.len());
        LedgerSnapshot {
            label: "budget upper bound".into(),
            c_bar: self.c_bar,
            spent: self.increments.clone(),
            cumulative: self.cumulative(),
            analytic_limit: report
                .analytic_limit
                .is_finite()
                .then_some(report.analytic_limit),
            finite: report.finite,
        }
    }
}
