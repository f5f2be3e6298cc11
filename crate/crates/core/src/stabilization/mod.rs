//! Inner greedy: enrich the reduced test space until the pair is stable.
//!
//! - [`inf_sup_constant`]: smallest singular value of `D_μ = L_Y^{-T} B_n L_X^{-1}`,
//! - [`delta_rayleigh`]: largest generalized eigenvalue of
//!   `(R_X̂ − B_nᵀR_Y⁻¹B_n − C_n, R_X̂)`, the squared proximality defect,
//! - [`update_inf_sup`] and [`update_delta`]: the two enrichment loops.
//!
//! With a penalty block `C_n` (convection-diffusion) the graph norm is
//! `R_X̂ = BᵀR_Y⁻¹B + C` and `D_μ` carries the extra rows `G L_X^{-1}` with
//! `GᵀG = C_n`, so that `σ² + δ² = 1` keeps holding.
//!
//! Worst-parameter ties go to the smallest `μ`. Sweeps over the sample run in
//! parallel; the pair is only mutated between sweeps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la_core::{
    canonical_direction, cholesky_spd, gram_schmidt_in, max_generalized_eigenspace,
    min_singular_space, orthonormalize_against, spectral_spd, FactorKind, SpdFactor, CLUSTER_TOL,
};
use crate::parametric_problem::TruthDiscretization;
pub use crate::saddle_solver::{NormKind, ReducedGramians, ReducedPair};

/// Settings of the inner greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabConfig {
    /// Relaxation `ζ` of the truth inf-sup constant.
    pub zeta: f64,
    /// Proximality target `δ`.
    pub delta: f64,
    /// Truth inf-sup constant `β_𝒩`.
    pub beta_truth: f64,
    pub norm_kind: NormKind,
    /// Factorization of the trial Gramian used by the inf-sup route.
    pub factor: FactorKind,
    /// Guard on the number of enrichments per call.
    pub max_enrichments: usize,
}

impl Default for StabConfig {
    fn default() -> Self {
        StabConfig {
            zeta: 0.5,
            delta: 0.5,
            beta_truth: 1.0,
            norm_kind: NormKind::Graph,
            factor: FactorKind::Cholesky,
            max_enrichments: 10_000,
        }
    }
}

impl StabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::config(
                "zeta",
                format!("{} not in (0, 1)", self.zeta),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(
                "delta",
                format!("{} not in (0, 1)", self.delta),
            ));
        }
        if !(self.beta_truth > 0.0 && self.beta_truth.is_finite()) {
            return Err(Error::config(
                "beta_truth",
                format!("{} must be positive", self.beta_truth),
            ));
        }
        if self.max_enrichments == 0 {
            return Err(Error::config("max_enrichments", "must be at least 1"));
        }
        Ok(())
    }

    /// Stopping threshold `ζ β_𝒩` of the inf-sup loop.
    pub fn inf_sup_target(&self) -> f64 {
        self.zeta * self.beta_truth
    }
}

/// One test-space enrichment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRecord {
    /// Worst parameter `μ̄`.
    pub mu: f64,
    /// `σ(μ̄)` for the inf-sup loop, `δ²(μ̄)` for the proximality loop.
    pub value: f64,
    /// Reduced coefficients of the worst trial direction `q̄`.
    pub direction: Vec<f64>,
    /// Test dimension after the insertion.
    pub test_dim: usize,
}

/// Result of one stabilization call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabOutcome {
    pub records: Vec<EnrichmentRecord>,
    /// Worst `σ` over the sample after the call.
    pub sigma_min: f64,
    /// Worst `δ` (not squared) over the sample after the call, `sqrt(1 − σ²)`
    /// for the inf-sup loop.
    pub delta_max: f64,
    pub worst_mu: f64,
}

/// Reduced Gramians at `μ`.
pub fn reduced_matrices(
    problem: &TruthDiscretization,
    mu: f64,
    pair: &ReducedPair,
    norm: NormKind,
) -> Result<ReducedGramians> {
    pair.gramians(problem, mu, norm)
}

fn factor(a: &DMatrix<f64>, kind: FactorKind) -> Result<SpdFactor> {
    let a = (a + a.transpose()) * 0.5;
    let f = match kind {
        FactorKind::Cholesky => cholesky_spd(&a),
        FactorKind::Spectral => SpdFactor::spectral(&a),
    };
    f.map_err(|e| Error::Singular(format!("trial Gramian: {e}")))
}

/// Rows `G` with `GᵀG = C` for a positive semidefinite `C`.
fn psd_root(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sd = spectral_spd(&((c + c.transpose()) * 0.5))?;
    let mut g = sd.eigenvectors.transpose();
    for i in 0..g.nrows() {
        g.row_mut(i).scale_mut(sd.eigenvalues[i].max(0.0).sqrt());
    }
    Ok(g)
}

/// The matrix `D_μ` (with penalty rows when present).
pub fn d_matrix(gram: &ReducedGramians, kind: FactorKind) -> Result<DMatrix<f64>> {
    let n = gram.r_xn.nrows();
    let m = gram.r_yn.nrows();
    let lx = factor(&gram.r_xn, kind)?;
    let mut top = if m > 0 {
        let ly = cholesky_spd(&((&gram.r_yn + gram.r_yn.transpose()) * 0.5))
            .map_err(|e| Error::Singular(format!("test Gramian: {e}")))?;
        ly.inv_t_mul(&gram.b_n)
    } else {
        DMatrix::zeros(0, n)
    };
    if let Some(c) = &gram.penalty_n {
        let g = psd_root(c)?;
        let rows = top.nrows();
        top = top.insert_rows(rows, n, 0.0);
        top.rows_mut(rows, n).copy_from(&g);
    }
    // D = T L_X^{-1}, i.e. Dᵀ = L_X^{-T} Tᵀ.
    Ok(lx.inv_t_mul(&top.transpose()).transpose())
}

/// Maps right singular vectors back to reduced trial coefficients and picks
/// the canonical direction of their span.
fn back_map(gram: &ReducedGramians, kind: FactorKind, v: &DMatrix<f64>) -> Result<DVector<f64>> {
    let lx = factor(&gram.r_xn, kind)?;
    let rx = (&gram.r_xn + gram.r_xn.transpose()) * 0.5;
    Ok(canonical_direction(&lx.inv_mul(v), &rx))
}

/// `(σ_min(D_μ), q̄)` from precomputed Gramians.
pub fn inf_sup_from(gram: &ReducedGramians, kind: FactorKind) -> Result<(f64, DVector<f64>)> {
    let n = gram.r_xn.nrows();
    let mut d = d_matrix(gram, kind)?;
    if d.nrows() < n {
        // Fewer rows than columns: σ = 0 with a null vector of DᵀD.
        let r = d.nrows();
        d = d.insert_rows(r, n - r, 0.0);
    }
    let (sigma, v) = min_singular_space(&d, CLUSTER_TOL)?;
    Ok((sigma, back_map(gram, kind, &v)?))
}

/// Smallest singular value of `D_μ` and the infimizing trial direction.
pub fn inf_sup_constant(
    problem: &TruthDiscretization,
    mu: f64,
    pair: &ReducedPair,
    norm: NormKind,
    kind: FactorKind,
) -> Result<(f64, DVector<f64>)> {
    inf_sup_from(&pair.gramians(problem, mu, norm)?, kind)
}

/// `(δ²_max, q̄)` from precomputed graph-norm Gramians.
pub fn delta_from(gram: &ReducedGramians) -> Result<(f64, DVector<f64>)> {
    let m = gram.r_yn.nrows();
    let mut a = gram.r_xn.clone();
    if m > 0 {
        let ry = cholesky_spd(&((&gram.r_yn + gram.r_yn.transpose()) * 0.5))
            .map_err(|e| Error::Singular(format!("test Gramian: {e}")))?;
        a -= gram.b_n.transpose() * ry.solve_mat(&gram.b_n);
    }
    if let Some(c) = &gram.penalty_n {
        a -= c;
    }
    let a = (&a + a.transpose()) * 0.5;
    let rx = (&gram.r_xn + gram.r_xn.transpose()) * 0.5;
    let (lam, x) = max_generalized_eigenspace(&a, &rx, CLUSTER_TOL)
        .map_err(|e| Error::Singular(format!("graph Gramian: {e}")))?;
    let q = canonical_direction(&x, &rx);
    Ok((lam, q))
}

/// Largest Rayleigh quotient of the unresolved supremizer part, in the graph norm.
pub fn delta_rayleigh(
    problem: &TruthDiscretization,
    mu: f64,
    pair: &ReducedPair,
) -> Result<(f64, DVector<f64>)> {
    delta_from(&pair.gramians(problem, mu, NormKind::Graph)?)
}

/// Truth supremizer `R_Y(μ)⁻¹ B_μ (Z q)`.
pub fn supremizer(
    problem: &TruthDiscretization,
    mu: f64,
    q: &DVector<f64>,
    pair: &ReducedPair,
) -> Result<DVector<f64>> {
    if q.len() != pair.n() {
        return Err(Error::Shape(format!(
            "{} coefficients for n = {}",
            q.len(),
            pair.n()
        )));
    }
    if q.amax() == 0.0 {
        return Err(Error::Argument("supremizer of the zero direction".into()));
    }
    let bq = pair.b_times_z(problem, mu) * q;
    problem.riesz_solve(mu, &bq)
}

/// Per-parameter diagnostic of one sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub mu: f64,
    pub value: f64,
    pub direction: DVector<f64>,
}

/// `σ(μ)` for every sample.
pub fn sweep_inf_sup(
    problem: &TruthDiscretization,
    pair: &ReducedPair,
    norm: NormKind,
    kind: FactorKind,
) -> Result<Vec<SweepEntry>> {
    problem
        .samples()
        .par_iter()
        .map(|&mu| {
            let (value, direction) = inf_sup_constant(problem, mu, pair, norm, kind)?;
            Ok(SweepEntry {
                mu,
                value,
                direction,
            })
        })
        .collect()
}

/// `δ²(μ)` for every sample.
pub fn sweep_delta(problem: &TruthDiscretization, pair: &ReducedPair) -> Result<Vec<SweepEntry>> {
    problem
        .samples()
        .par_iter()
        .map(|&mu| {
            let (value, direction) = delta_rayleigh(problem, mu, pair)?;
            Ok(SweepEntry {
                mu,
                value,
                direction,
            })
        })
        .collect()
}

/// Sweep values closer than this to the extreme one count as ties.
const TIE_TOL: f64 = 1e-10;

/// First entry whose `key(value)` is within [`TIE_TOL`] of the minimum (maximum
/// if `max`).
///
/// Ties are the rule while `m < n`, where every parameter has `σ = 0`; the
/// tolerance keeps round-off from deciding between them.
fn extreme(entries: &[SweepEntry], max: bool, key: impl Fn(f64) -> f64) -> &SweepEntry {
    let keys: Vec<f64> = entries.iter().map(|e| key(e.value)).collect();
    let best = if max {
        keys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        keys.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let width = TIE_TOL * best.abs().max(1.0);
    let k = keys
        .iter()
        .position(|&k| (k - best).abs() <= width)
        .unwrap_or(0);
    &entries[k]
}

/// Inserts the supremizer of `(μ̄, q̄)` into the test basis.
fn enrich(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    mu: f64,
    q: &DVector<f64>,
) -> Result<()> {
    let v = supremizer(problem, mu, q, pair)?;
    let ry = problem.riesz_y_at(mu)?;
    let w = if problem.riesz_is_constant() {
        gram_schmidt_in(&ry, pair.test_basis(), &v)?
    } else {
        orthonormalize_against(&ry, pair.test_basis(), &v)?
    };
    pair.append_test(problem, &w)
}

fn budget(problem: &TruthDiscretization, pair: &ReducedPair, cfg: &StabConfig) -> usize {
    cfg.max_enrichments
        .min(problem.test_dim().saturating_sub(pair.m()))
}

/// Enriches `Y_n` until `min_μ σ(μ) ≥ ζ β_𝒩`.
///
/// On failure the pair keeps the enrichments made so far.
pub fn update_inf_sup(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    cfg: &StabConfig,
) -> Result<StabOutcome> {
    update_inf_sup_until(problem, pair, cfg, cfg.inf_sup_target())
}

/// [`update_inf_sup`] with an explicit threshold on `σ`.
pub fn update_inf_sup_until(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    cfg: &StabConfig,
    target: f64,
) -> Result<StabOutcome> {
    cfg.validate()?;
    if pair.n() == 0 {
        return Err(Error::State(
            "stabilization needs a nonempty trial basis".into(),
        ));
    }
    let limit = budget(problem, pair, cfg);
    let mut records = Vec::new();
    loop {
        let sweep = sweep_inf_sup(problem, pair, cfg.norm_kind, cfg.factor)?;
        let worst = extreme(&sweep, false, |s| s * s).clone();
        if worst.value >= target {
            let s = worst.value.min(1.0);
            return Ok(StabOutcome {
                records,
                sigma_min: worst.value,
                delta_max: (1.0 - s * s).max(0.0).sqrt(),
                worst_mu: worst.mu,
            });
        }
        let stalled = Error::StabilizationStalled {
            enrichments: records.len(),
            mu: worst.mu,
            value: worst.value,
        };
        if records.len() >= limit {
            return Err(stalled);
        }
        match enrich(problem, pair, worst.mu, &worst.direction) {
            Ok(()) => {}
            Err(Error::LinearlyDependent) => return Err(stalled),
            Err(e) => return Err(e),
        }
        records.push(EnrichmentRecord {
            mu: worst.mu,
            value: worst.value,
            direction: worst.direction.iter().copied().collect(),
            test_dim: pair.m(),
        });
    }
}

/// Enriches `Y_n` until `max_μ δ²(μ) ≤ δ²`.
///
/// On failure the pair keeps the enrichments made so far.
pub fn update_delta(
    problem: &TruthDiscretization,
    pair: &mut ReducedPair,
    cfg: &StabConfig,
) -> Result<StabOutcome> {
    cfg.validate()?;
    if pair.n() == 0 {
        return Err(Error::State(
            "stabilization needs a nonempty trial basis".into(),
        ));
    }
    let limit = budget(problem, pair, cfg);
    let target = cfg.delta * cfg.delta;
    let mut records = Vec::new();
    loop {
        let sweep = sweep_delta(problem, pair)?;
        let worst = extreme(&sweep, true, |d2| d2).clone();
        if worst.value <= target {
            let d2 = worst.value.clamp(0.0, 1.0);
            return Ok(StabOutcome {
                records,
                sigma_min: (1.0 - d2).sqrt(),
                delta_max: d2.sqrt(),
                worst_mu: worst.mu,
            });
        }
        let stalled = Error::StabilizationStalled {
            enrichments: records.len(),
            mu: worst.mu,
            value: worst.value,
        };
        if records.len() >= limit {
            return Err(stalled);
        }
        match enrich(problem, pair, worst.mu, &worst.direction) {
            Ok(()) => {}
            Err(Error::LinearlyDependent) => return Err(stalled),
            Err(e) => return Err(e),
        }
        records.push(EnrichmentRecord {
            mu: worst.mu,
            value: worst.value,
            direction: worst.direction.iter().copied().collect(),
            test_dim: pair.m(),
        });
    }
}
