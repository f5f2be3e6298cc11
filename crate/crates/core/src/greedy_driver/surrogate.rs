use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::parametric_problem::TruthDiscretization;
use crate::saddle_solver::{solve_reduced, ReducedPair, SaddleSolution};

/// Error surrogate driving the outer greedy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// `R_n(μ) = ‖P_{Y_𝒩} R_Y⁻¹(f − B p_n)‖_Y`.
    #[default]
    TruthDual,
    /// `R'_n(μ) = ‖u_n(μ)‖_Y`, fully online.
    ReducedDual,
}

/// `R_n(μ)` for the truth-lifted trial vector `Z c`.
///
/// Uses the offline expansion when the test Gramian is constant and one
/// truth Riesz solve otherwise.
pub fn surrogate_truth_dual(
    problem: &TruthDiscretization,
    mu: f64,
    pair: &ReducedPair,
    c: &DVector<f64>,
) -> Result<f64> {
    if let Some(v) = pair.truth_dual_sq(problem, mu, c) {
        return Ok(v.max(0.0).sqrt());
    }
    surrogate_truth_dual_direct(problem, mu, &pair.lift_trial(c))
}

/// `R_n(μ)` from an explicit truth trial vector (one Riesz solve).
pub fn surrogate_truth_dual_direct(
    problem: &TruthDiscretization,
    mu: f64,
    p: &DVector<f64>,
) -> Result<f64> {
    let r = problem.rhs_at(mu)? - problem.operator_at(mu)?.mul_vec(p);
    let s = problem.riesz_solve(mu, &r)?;
    Ok(r.dot(&s).max(0.0).sqrt())
}

/// `R'_n(μ) = ‖u_n(μ)‖_Y` of a reduced solution.
pub fn surrogate_reduced_dual(solution: &SaddleSolution) -> f64 {
    solution.residual_norm
}

/// Surrogate value at one parameter together with the reduced solution.
#[derive(Debug, Clone)]
pub struct SurrogateSample {
    pub mu: f64,
    pub value: f64,
    pub solution: SaddleSolution,
}

pub fn evaluate_surrogate(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    mu: f64,
    kind: SurrogateKind,
) -> Result<SurrogateSample> {
    let solution = solve_reduced(problem, mu, pair)?;
    let value = match kind {
        SurrogateKind::TruthDual => surrogate_truth_dual(problem, mu, pair, &solution.p)?,
        SurrogateKind::ReducedDual => surrogate_reduced_dual(&solution),
    };
    Ok(SurrogateSample {
        mu,
        value,
        solution,
    })
}

/// Surrogate over the whole sample, in sample order.
pub fn surrogate_sweep(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    kind: SurrogateKind,
) -> Result<Vec<SurrogateSample>> {
    problem
        .samples()
        .par_iter()
        .map(|&mu| evaluate_surrogate(problem, pair, mu, kind))
        .collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
