//! Outer greedy over the parameter sample.
//!
//! - [`update_approximation`]: pick the worst parameter of a surrogate and add
//!   its truth snapshot to the trial basis,
//! - [`dg1`]: alternate snapshot insertion and test-space stabilization,
//! - [`iterative_tightening`]: re-run with the previous trial spaces folded
//!   into the stabilization target,
//! - [`dg2`]: variant that grows both spaces from the snapshot pair.
//!
//! Snapshots are orthonormalized in the native trial inner product, which does
//! not depend on the parameter.

mod dg2;
mod report;
mod surrogate;
mod tightening;

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dg2::{
    dg2, dg2_report, synthetic_saddle, Dg2Config, Dg2Diagnostics, Dg2Record, Dg2Run, Dg2Surrogate,
    GenericPair, GenericSaddle, SyntheticParams,
};
pub use report::{surrogate_report, xhat_projection, SampleDiagnostics, SurrogateReport};
pub use surrogate::{
    argmax, evaluate_surrogate, surrogate_reduced_dual, surrogate_sweep, surrogate_truth_dual,
    surrogate_truth_dual_direct, SurrogateKind, SurrogateSample,
};
pub use tightening::{
    iterative_tightening, CycleResult, TighteningConfig, TighteningMode, TighteningRun,
};

use crate::error::{Error, Result};
use crate::la_core::gram_schmidt_in;
use crate::parametric_problem::TruthDiscretization;
use crate::saddle_solver::{ReducedPair, TruthCache};
use crate::stabilization::{update_delta, update_inf_sup, StabConfig, StabOutcome};

/// Inner loop used after each snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StabMethod {
    /// Enrich until the discrete inf-sup constant reaches `ζ β_𝒩`.
    #[default]
    InfSup,
    /// Enrich until the proximality defect drops below `δ`.
    Delta,
}

/// Settings of the outer greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Stop once the largest surrogate is at most this value.
    pub tol: f64,
    /// Largest trial dimension.
    pub n_max: usize,
    pub surrogate: SurrogateKind,
    pub method: StabMethod,
    pub stab: StabConfig,
    /// First snapshot parameter; defaults to the first sample.
    pub mu_start: Option<f64>,
    /// Record the best-approximation error over the sample at every step.
    pub diagnostics: bool,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            tol: 1e-6,
            n_max: 20,
            surrogate: SurrogateKind::TruthDual,
            method: StabMethod::InfSup,
            stab: StabConfig::default(),
            mu_start: None,
            diagnostics: false,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::config(
                "tol",
                format!("{} must be a nonnegative number", self.tol),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::config("n_max", "must be at least 1"));
        }
        self.stab.validate()
    }
}

/// State after one outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub m: usize,
    /// Parameter whose snapshot became the `n`-th trial vector.
    pub snapshot_mu: f64,
    /// Test enrichments made by the inner loop of this step.
    pub enrichments: usize,
    pub sigma_min: f64,
    pub delta_max: f64,
    /// Largest surrogate over the sample and where it is attained.
    pub max_surrogate: f64,
    pub argmax_mu: f64,
    /// `max_μ min_q ‖p_𝒩(μ) − q‖_X` over the trial space, native norm.
    pub best_error: Option<f64>,
    /// Seconds since the start of the run.
    pub elapsed_s: f64,
}

/// Why the outer greedy stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxDimension,
    SnapshotDependent {
        mu: f64,
    },
    StabilizationStalled {
        n: usize,
        enrichments: usize,
        mu: f64,
        value: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyHistory {
    pub records: Vec<IterationRecord>,
}

impl GreedyHistory {
    /// Test dimension reached at each trial dimension.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.records.iter().map(|r| (r.n, r.m)).collect()
    }
}

/// Outcome of a double greedy run; partial results survive a stall.
#[derive(Debug, Clone)]
pub struct GreedyRun {
    pub pair: ReducedPair,
    pub history: GreedyHistory,
    pub termination: Termination,
}

impl GreedyRun {
    /// The pair as it was after `n` outer steps.
    pub fn pair_at(&self, problem: &TruthDiscretization, n: usize) -> Result<ReducedPair> {
        let rec = self
            .history
            .records
            .iter()
            .find(|r| r.n == n)
            .ok_or_else(|| Error::Argument(format!("no record for n = {n}")))?;
        self.pair.truncated(problem, rec.n, rec.m)
    }
}

/// Adds the truth snapshot at `μ` to the trial basis.
pub fn add_snapshot(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    mu: f64,
    cache: &TruthCache,
) -> Result<()> {
    let truth = cache.get(problem, mu)?;
    let v = match gram_schmidt_in(&problem.native_x, pair.trial_basis(), &truth.p) {
        Ok(v) => v,
        Err(Error::LinearlyDependent) => return Err(Error::SnapshotDependent { mu }),
        Err(e) => return Err(e),
    };
    pair.append_trial(problem, &v)
}

/// Selects `μ̂ = argmax` of the surrogate and adds its snapshot.
///
/// Returns `μ̂` and the maximal surrogate value.
pub fn update_approximation(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    kind: SurrogateKind,
    cache: &TruthCache,
) -> Result<(f64, f64)> {
    let sweep = surrogate_sweep(problem, pair, kind)?;
    let values: Vec<f64> = sweep.iter().map(|s| s.value).collect();
    let k = argmax(&values);
    add_snapshot(problem, pair, sweep[k].mu, cache)?;
    Ok((sweep[k].mu, values[k]))
}

/// Runs the configured inner loop on `pair`.
pub fn stabilize(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    cfg: &GreedyConfig,
) -> Result<StabOutcome> {
    match cfg.method {
        StabMethod::InfSup => update_inf_sup(problem, pair, &cfg.stab),
        StabMethod::Delta => update_delta(problem, pair, &cfg.stab),
    }
}

/// Largest native-norm distance of the truth solutions to the trial span.
pub fn best_approximation_error(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    cache: &TruthCache,
) -> Result<f64> {
    let z = pair.trial_basis();
    let errs: Vec<f64> = problem
        .samples()
        .par_iter()
        .map(|&mu| {
            let p = &cache.get(problem, mu)?.p;
            let c = z.transpose() * problem.native_x.mul_vec(p);
            let e: DVector<f64> = p - z * c;
            Ok(problem.native_x.bilinear(&e, &e).max(0.0).sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Double greedy with the configured inner loop.
pub fn dg1(
    problem: &TruthDiscretization,
    cfg: &GreedyConfig,
    cache: &TruthCache,
) -> Result<GreedyRun> {
    run_with(problem, cfg, cache, |pair| stabilize(problem, pair, cfg))
}

/// Outer loop with a pluggable inner loop.
pub(crate) fn run_with<F>(
    problem: &TruthDiscretization,
    cfg: &GreedyConfig,
    cache: &TruthCache,
    mut stabilizer: F,
) -> Result<GreedyRun>
where
    F: FnMut(&mut ReducedPair) -> Result<StabOutcome>,
{
    cfg.validate()?;
    let clock = Instant::now();
    let mut pair = ReducedPair::new(problem)?;
    let mut history = GreedyHistory::default();
    let mut mu = match cfg.mu_start {
        Some(mu) => {
            problem.piece.check(mu)?;
            mu
        }
        None => problem.samples()[0],
    };
    add_snapshot(problem, &mut pair, mu, cache)?;
    let termination = loop {
        let outcome = match stabilizer(&mut pair) {
            Ok(o) => o,
            Err(Error::StabilizationStalled {
                enrichments,
                mu,
                value,
            }) => {
                break Termination::StabilizationStalled {
                    n: pair.n(),
                    enrichments,
                    mu,
                    value,
                }
            }
            Err(e) => return Err(e),
        };
        let sweep = surrogate_sweep(problem, &pair, cfg.surrogate)?;
        let values: Vec<f64> = sweep.iter().map(|s| s.value).collect();
        let k = argmax(&values);
        let best_error = if cfg.diagnostics {
            Some(best_approximation_error(problem, &pair, cache)?)
        } else {
            None
        };
        history.records.push(IterationRecord {
            n: pair.n(),
            m: pair.m(),
            snapshot_mu: mu,
            enrichments: outcome.records.len(),
            sigma_min: outcome.sigma_min,
            delta_max: outcome.delta_max,
            max_surrogate: values[k],
            argmax_mu: sweep[k].mu,
            best_error,
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        if values[k] <= cfg.tol {
            break Termination::Tolerance;
        }
        if pair.n() >= cfg.n_max || pair.n() >= problem.trial_dim() {
            break Termination::MaxDimension;
        }
        mu = sweep[k].mu;
        match add_snapshot(problem, &mut pair, mu, cache) {
            Ok(()) => {}
            Err(Error::SnapshotDependent { mu }) => break Termination::SnapshotDependent { mu },
            Err(e) => return Err(e),
        }
    };
    Ok(GreedyRun {
        pair,
        history,
        termination,
    })
}
