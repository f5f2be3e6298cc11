use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la_core::gram_schmidt_in;
use crate::parametric_problem::{AffineVector, TruthDiscretization};
use crate::saddle_solver::{solve_reduced, truth_error_bound, ReducedPair, TruthCache};

use super::{run_with, stabilize, GreedyConfig, GreedyRun};

/// How later cycles reuse earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TighteningMode {
    /// Stabilize each new trial space together with all earlier trial spaces.
    #[default]
    Accumulate,
    /// Run the greedy on the residual equation of the previous approximation.
    Defect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TighteningConfig {
    /// Extra cycles after the first run.
    pub cycles: usize,
    /// Each run stops once the surrogate is below `α τ_𝒩` (or the configured
    /// tolerance, whichever is larger).
    pub alpha: f64,
    pub mode: TighteningMode,
}

impl Default for TighteningConfig {
    fn default() -> Self {
        TighteningConfig {
            cycles: 1,
            alpha: 0.1,
            mode: TighteningMode::Accumulate,
        }
    }
}

impl TighteningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(
                "alpha",
                format!("{} must be positive", self.alpha),
            ));
        }
        Ok(())
    }
}

/// One cycle: the run together with the problem it was solved on.
#[derive(Debug, Clone)]
pub struct CycleResult {
    /// The original problem, or the residual problem in defect mode.
    pub problem: Arc<TruthDiscretization>,
    pub cache: Arc<TruthCache>,
    pub run: GreedyRun,
}

#[derive(Debug, Clone)]
pub struct TighteningRun {
    /// `τ_𝒩`, the largest truth error bound over the sample.
    pub tau_truth: f64,
    pub cycles: Vec<CycleResult>,
}

/// Largest truth error bound over the sample.
pub fn truth_tolerance(problem: &TruthDiscretization, cache: &TruthCache) -> Result<f64> {
    let bounds: Vec<f64> = problem
        .samples()
        .par_iter()
        .map(|&mu| truth_error_bound(problem, &*cache.get(problem, mu)?))
        .collect::<Result<_>>()?;
    Ok(bounds.into_iter().fold(0.0, f64::max))
}

/// Appends the columns of `z` to the native-orthonormal `basis`, skipping
/// dependent ones.
fn extend_basis(
    problem: &TruthDiscretization,
    basis: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for v in z.column_iter() {
        let current = if cols.is_empty() {
            DMatrix::zeros(problem.trial_dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        match gram_schmidt_in(&problem.native_x, &current, &v.into_owned()) {
            Ok(w) => cols.push(w),
            Err(Error::LinearlyDependent) => {}
            Err(e) => return Err(e),
        }
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(problem.trial_dim(), 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Residual problem `B p = f − B p_prev(μ)` of a reduced approximation.
fn defect_problem(
    problem: Arc<TruthDiscretization>,
    pair: Arc<ReducedPair>,
) -> Result<TruthDiscretization> {
    let memo: Arc<Mutex<HashMap<u64, DVector<f64>>>> = Arc::default();
    let coeffs = {
        let (problem, pair, memo) = (problem.clone(), pair.clone(), memo.clone());
        move |mu: f64| -> DVector<f64> {
            if let Some(c) = memo.lock().expect("memo lock poisoned").get(&mu.to_bits()) {
                return c.clone();
            }
            let c = solve_reduced(&problem, mu, &pair)
                .map(|s| s.p)
                .unwrap_or_else(|_| DVector::from_element(pair.n(), f64::NAN));
            memo.lock()
                .expect("memo lock poisoned")
                .insert(mu.to_bits(), c.clone());
            c
        }
    };
    let coeffs = Arc::new(coeffs);
    let mut components = problem.rhs.components.clone();
    let mut theta = problem.rhs.theta.clone();
    for (k, bz) in pair.operator_times_trial().iter().enumerate() {
        for j in 0..pair.n() {
            components.push(-bz.column(j).into_owned());
            let (op_theta, coeffs) = (problem.operator.theta.clone(), coeffs.clone());
            theta = theta.with(format!("theta{k}*c{j}"), move |mu| {
                op_theta.eval(mu)[k] * coeffs(mu)[j]
            });
        }
    }
    problem.with_rhs(AffineVector::new(components, theta)?)
}

/// Repeated double greedy runs with the stopping tolerance
/// `max(tol, α τ_𝒩)`.
///
/// Cycle 0 is a plain run. In accumulate mode, every later cycle restarts the
/// outer greedy but stabilizes the sum of all earlier trial spaces and the
/// current one; in defect mode it runs on the residual problem of the
/// previous approximation.
pub fn iterative_tightening(
    problem: Arc<TruthDiscretization>,
    cfg: &GreedyConfig,
    tcfg: &TighteningConfig,
    cache: Arc<TruthCache>,
) -> Result<TighteningRun> {
    cfg.validate()?;
    tcfg.validate()?;
    let tau_truth = truth_tolerance(&problem, &cache)?;
    let mut run_cfg = cfg.clone();
    run_cfg.tol = cfg.tol.max(tcfg.alpha * tau_truth);
    let first = run_with(&problem, &run_cfg, &cache, |pair| {
        stabilize(&problem, pair, &run_cfg)
    })?;
    let mut cycles = vec![CycleResult {
        problem: problem.clone(),
        cache: cache.clone(),
        run: first,
    }];
    let mut accumulated = cycles[0].run.pair.trial_basis().clone();
    for _ in 0..tcfg.cycles {
        let next = match tcfg.mode {
            TighteningMode::Accumulate => {
                let xbar = accumulated.clone();
                let p = &problem;
                let run = run_with(p, &run_cfg, &cache, |pair| {
                    let z = extend_basis(p, &xbar, pair.trial_basis())?;
                    let mut aux = ReducedPair::from_bases(p, &z, pair.test_basis())?;
                    let outcome = stabilize(p, &mut aux, &run_cfg);
                    if aux.m() != pair.m() {
                        pair.set_test_basis(p, aux.test_basis())?;
                    }
                    outcome
                })?;
                accumulated = extend_basis(&problem, &accumulated, run.pair.trial_basis())?;
                CycleResult {
                    problem: problem.clone(),
                    cache: cache.clone(),
                    run,
                }
            }
            TighteningMode::Defect => {
                let last = cycles.last().expect("at least one cycle");
                let defect = Arc::new(defect_problem(
                    last.problem.clone(),
                    Arc::new(last.run.pair.clone()),
                )?);
                let dcache = Arc::new(TruthCache::new());
                let run = run_with(&defect, &run_cfg, &dcache, |pair| {
                    stabilize(&defect, pair, &run_cfg)
                })?;
                CycleResult {
                    problem: defect,
                    cache: dcache,
                    run,
                }
            }
        };
        cycles.push(next);
    }
    Ok(TighteningRun { tau_truth, cycles })
}
