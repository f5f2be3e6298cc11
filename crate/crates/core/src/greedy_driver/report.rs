use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la_core::cholesky_spd;
use crate::parametric_problem::{TruthDiscretization, XhatNorm};
use crate::saddle_solver::{solve_reduced, truth_error_bound, NormKind, ReducedPair, TruthCache};

use super::surrogate::surrogate_truth_dual;

/// Error quantities of one reduced pair at one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub mu: f64,
    /// `R_n(μ)`.
    pub truth_dual: f64,
    /// `R'_n(μ) = ‖u_n(μ)‖_Y`.
    pub reduced_dual: f64,
    /// `‖p_𝒩 − p_n‖_{L2}`.
    pub rb_truth: f64,
    /// `‖p_n − Π_{X_n} p_𝒩‖_{L2}` with the `L2` projection onto the trial span.
    pub rb_l2: f64,
    /// `‖p_𝒩 − p_n‖_{X̂_μ}`.
    pub err_xhat: f64,
    /// `min_{q ∈ X_n} ‖p_𝒩 − q‖_{X̂_μ}`.
    pub best_xhat: f64,
    /// A posteriori bound of the truth error, `‖u_𝒩‖_Y / sqrt(1 − δ_𝒩²)`.
    pub truth_bound: f64,
    /// `‖p_𝒩‖_{L2}`.
    pub truth_l2: f64,
}

/// Worst-case error quantities of a reduced pair over the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub n: usize,
    pub m: usize,
    pub samples: Vec<SampleDiagnostics>,
}

fn column_max(samples: &[SampleDiagnostics], f: impl Fn(&SampleDiagnostics) -> f64) -> f64 {
    samples.iter().map(f).fold(0.0, f64::max)
}

impl SurrogateReport {
    pub fn max_truth_dual(&self) -> f64 {
        column_max(&self.samples, |s| s.truth_dual)
    }

    pub fn max_reduced_dual(&self) -> f64 {
        column_max(&self.samples, |s| s.reduced_dual)
    }

    pub fn max_rb_truth(&self) -> f64 {
        column_max(&self.samples, |s| s.rb_truth)
    }

    pub fn max_rb_l2(&self) -> f64 {
        column_max(&self.samples, |s| s.rb_l2)
    }

    pub fn max_truth_bound(&self) -> f64 {
        column_max(&self.samples, |s| s.truth_bound)
    }

    pub fn max_truth_l2(&self) -> f64 {
        column_max(&self.samples, |s| s.truth_l2)
    }
}

/// Coefficients of the `X̂_μ`-orthogonal projection of `p` onto the trial span.
pub fn xhat_projection(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    mu: f64,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gram = pair.gramians(problem, mu, NormKind::Graph)?;
    let z = pair.trial_basis();
    let rhs = match &problem.xhat {
        XhatNorm::Fixed(m) => z.transpose() * m.mul_vec(p),
        XhatNorm::Graph => {
            let bp = problem.operator_at(mu)?.mul_vec(p);
            let s = problem.riesz_solve(mu, &bp)?;
            let mut r = pair.b_times_z(problem, mu).transpose() * s;
            if let Some(h) = &problem.penalty {
                r += z.transpose() * h.mul_vec(p);
            }
            r
        }
    };
    let f = cholesky_spd(&gram.r_xn).map_err(|e| Error::Singular(format!("X̂ Gramian: {e}")))?;
    Ok(f.solve(&rhs))
}

pub(crate) fn l2_projection(
    problem: &TruthDiscretization,
    z: &DMatrix<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mz = problem.trial_mass.mul_dense(z);
    let g = z.transpose() * &mz;
    let f = cholesky_spd(&((&g + g.transpose()) * 0.5))?;
    Ok(z * f.solve(&(mz.transpose() * p)))
}

fn diagnose(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    mu: f64,
    cache: &TruthCache,
) -> Result<SampleDiagnostics> {
    let truth = cache.get(problem, mu)?;
    let red = solve_reduced(problem, mu, pair)?;
    let pn = pair.lift_trial(&red.p);
    let mass = &problem.trial_mass;
    let e = &truth.p - &pn;
    let proj = l2_projection(problem, pair.trial_basis(), &truth.p)?;
    let d = &pn - &proj;
    let c = xhat_projection(problem, pair, mu, &truth.p)?;
    let best = &truth.p - pair.lift_trial(&c);
    Ok(SampleDiagnostics {
        mu,
        truth_dual: surrogate_truth_dual(problem, mu, pair, &red.p)?,
        reduced_dual: red.residual_norm,
        rb_truth: mass.bilinear(&e, &e).max(0.0).sqrt(),
        rb_l2: mass.bilinear(&d, &d).max(0.0).sqrt(),
        err_xhat: problem.xhat_norm_sq(mu, &e)?.max(0.0).sqrt(),
        best_xhat: problem.xhat_norm_sq(mu, &best)?.max(0.0).sqrt(),
        truth_bound: truth_error_bound(problem, &truth)?,
        truth_l2: mass.bilinear(&truth.p, &truth.p).max(0.0).sqrt(),
    })
}

/// Diagnostics of `pair` at every sample, in sample order.
pub fn surrogate_report(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    cache: &TruthCache,
) -> Result<SurrogateReport> {
    let samples = problem
        .samples()
        .par_iter()
        .map(|&mu| diagnose(problem, pair, mu, cache))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateReport {
        n: pair.n(),
        m: pair.m(),
        samples,
    })
}
