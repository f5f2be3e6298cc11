//! Saddle-point solves at truth and reduced level.
//!
//! Every solve targets the system
//!
//! ```text
//! [ R_Y(μ)   B(μ) ] [u]   [f(μ)]
//! [ B(μ)ᵀ    -C   ] [p] = [ 0  ]
//! ```
//!
//! with `C = ωH` the outflow penalty for convection-diffusion and `C = 0`
//! otherwise. The `p` component is the Petrov–Galerkin solution, `u` is the
//! Riesz lift of its residual.
//!
//! - truth systems use a reordered banded LU,
//! - reduced systems are assembled from the cached tensors of a [`ReducedPair`],
//! - [`online_pg_solve`] is the equivalent `n × n` Petrov–Galerkin path.

mod pair;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

pub use pair::{NormKind, ReducedGramians, ReducedPair};

use crate::error::{Error, Result};
use crate::la_core::{cholesky_spd, solve_refined, BandedLu, CsrMatrix};
use crate::parametric_problem::TruthDiscretization;

/// Relative block residual accepted from a truth solve.
const TRUTH_RESIDUAL_TOL: f64 = 1e-10;

/// Solution of a saddle system.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    /// Test-space component (truth or reduced coefficients).
    pub u: DVector<f64>,
    /// Trial-space component (truth or reduced coefficients).
    pub p: DVector<f64>,
    pub mu: f64,
    /// `‖u‖_Y`, the dual norm of the residual of `p`.
    pub residual_norm: f64,
}

/// Assembles the truth block matrix at `μ`.
pub fn truth_system(problem: &TruthDiscretization, mu: f64) -> Result<CsrMatrix> {
    let r = problem.riesz_y_at(mu)?;
    let b = problem.operator_at(mu)?;
    let c = problem.penalty.as_ref().map(|h| h.scaled(-1.0));
    CsrMatrix::saddle(&r, &b, c.as_ref())
}

/// Truth solve of the block system at `μ`.
pub fn solve_truth(problem: &TruthDiscretization, mu: f64) -> Result<SaddleSolution> {
    let k = truth_system(problem, mu)?;
    let f = problem.rhs_at(mu)?;
    let ny = problem.test_dim();
    let mut rhs = DVector::zeros(k.nrows());
    rhs.rows_mut(0, ny).copy_from(&f);
    let lu = BandedLu::factor(&k)?;
    let x = solve_refined(&k, &lu, &rhs)?;
    let res = (&rhs - k.mul_vec(&x)).norm();
    let scale = k.frobenius_norm() * x.norm() + rhs.norm();
    if res > TRUTH_RESIDUAL_TOL * scale {
        return Err(Error::Numerical(format!(
            "truth block residual {res:e} exceeds tolerance at mu = {mu}"
        )));
    }
    let u = x.rows(0, ny).into_owned();
    let p = x.rows(ny, problem.trial_dim()).into_owned();
    let ry = problem.riesz_y_at(mu)?;
    let residual_norm = ry.bilinear(&u, &u).max(0.0).sqrt();
    Ok(SaddleSolution {
        u,
        p,
        mu,
        residual_norm,
    })
}

/// Certified bound `(1 − δ_𝒩²)^{-1/2} ‖u_𝒩(μ)‖_Y` on the truth error.
pub fn truth_error_bound(problem: &TruthDiscretization, truth: &SaddleSolution) -> Result<f64> {
    let d = problem.delta_truth;
    if !(0.0..1.0).contains(&d) {
        return Err(Error::config("delta_truth", format!("{d} not in [0, 1)")));
    }
    Ok(truth.residual_norm / (1.0 - d * d).sqrt())
}

type SolutionSlot = Arc<OnceLock<std::result::Result<Arc<SaddleSolution>, String>>>;

/// Memo of truth solutions keyed by parameter; safe for concurrent use, each
/// parameter is solved at most once.
#[derive(Debug, Default)]
pub struct TruthCache {
    map: Mutex<HashMap<u64, SolutionSlot>>,
}

impl TruthCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, problem: &TruthDiscretization, mu: f64) -> Result<Arc<SaddleSolution>> {
        let slot = {
            let mut map = self.map.lock().expect("truth cache lock poisoned");
            map.entry(mu.to_bits()).or_default().clone()
        };
        slot.get_or_init(|| {
            solve_truth(problem, mu)
                .map(Arc::new)
                .map_err(|e| e.to_string())
        })
        .clone()
        .map_err(Error::Numerical)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("truth cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Solves the reduced block system from precomputed Gramians.
///
/// The `p` block is eliminated through the Schur complement
/// `S = BᵀR⁻¹B + C`; a Schur complement that is not positive definite means
/// the test space does not stabilize the trial space.
pub fn solve_reduced_with(gram: &ReducedGramians) -> Result<SaddleSolution> {
    let (m, n) = gram.b_n.shape();
    let mu = gram.mu;
    let (rinv_b, rinv_f) = if m > 0 {
        let rf = cholesky_spd(&gram.r_yn).map_err(|_| Error::Unstable { mu })?;
        (rf.solve_mat(&gram.b_n), rf.solve(&gram.f_n))
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    let mut s = gram.b_n.transpose() * &rinv_b;
    if let Some(c) = &gram.penalty_n {
        s += c;
    }
    let s = (&s + s.transpose()) * 0.5;
    let sf = cholesky_spd(&s).map_err(|_| Error::Unstable { mu })?;
    let p = sf.solve(&(gram.b_n.transpose() * &rinv_f));
    let u = &rinv_f - &rinv_b * &p;
    if p.iter().chain(u.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Unstable { mu });
    }
    let residual_norm = u.dot(&(&gram.r_yn * &u)).max(0.0).sqrt();
    Ok(SaddleSolution {
        u,
        p,
        mu,
        residual_norm,
    })
}

/// Reduced solve at `μ`; coefficients refer to the pair's bases.
pub fn solve_reduced(
    problem: &TruthDiscretization,
    mu: f64,
    pair: &ReducedPair,
) -> Result<SaddleSolution> {
    let gram = pair.gramians(problem, mu, NormKind::Graph)?;
    solve_reduced_with(&gram)
}

/// Parameter-independent test functions `ψ_{k,j} = P_{Y_n} R_Y⁻¹ B_k φ_j`.
#[derive(Debug, Clone)]
pub struct OnlineTestBasis {
    /// `psi_components[k]` holds `ψ_{k,j}` in column `j` (truth coefficients).
    pub psi_components: Vec<DMatrix<f64>>,
    /// `ψ_kᵀ B_l Z`, flattened `k * m_B + l`.
    psi_b: Vec<DMatrix<f64>>,
    /// `ψ_kᵀ f_a`, flattened `k * m_f + a`.
    psi_f: Vec<DVector<f64>>,
    penalty_n: Option<DMatrix<f64>>,
}

impl OnlineTestBasis {
    /// Offline construction; needs a test Gramian that does not depend on `μ`.
    pub fn build(problem: &TruthDiscretization, pair: &ReducedPair) -> Result<Self> {
        if !problem.riesz_is_constant() {
            return Err(Error::Unsupported(
                "online Petrov-Galerkin basis needs a parameter-independent test norm".into(),
            ));
        }
        if pair.n() == 0 || pair.m() == 0 {
            return Err(Error::State(
                "online test basis needs a nonempty pair".into(),
            ));
        }
        let (yb, yry) = pair.reduced_blocks();
        let rf = cholesky_spd(&yry[0])?;
        let y = pair.test_basis();
        let psi_components: Vec<DMatrix<f64>> = yb.iter().map(|b| y * rf.solve_mat(b)).collect();
        let mb = psi_components.len();
        let mut psi_b = Vec::with_capacity(mb * mb);
        let mut psi_f = Vec::new();
        for psi in &psi_components {
            let pt = psi.transpose();
            for bz in pair.operator_times_trial() {
                psi_b.push(&pt * bz);
            }
            for f in &problem.rhs.components {
                psi_f.push(&pt * f);
            }
        }
        let gram = pair.gramians(problem, problem.piece.lo, NormKind::Graph)?;
        Ok(OnlineTestBasis {
            psi_components,
            psi_b,
            psi_f,
            penalty_n: gram.penalty_n,
        })
    }

    /// Assembled test functions `ψ_j^n(μ) = Σ_k Θ_k(μ) ψ_{k,j}`.
    pub fn at(&self, problem: &TruthDiscretization, mu: f64) -> DMatrix<f64> {
        let th = problem.operator.theta.eval(mu);
        let mut out = DMatrix::zeros(
            self.psi_components[0].nrows(),
            self.psi_components[0].ncols(),
        );
        for (t, p) in th.iter().zip(&self.psi_components) {
            out += p * *t;
        }
        out
    }
}

/// Solves `b_μ(p_n, ψ_j^n(μ)) + ⟨C p_n, φ_j⟩ = ⟨f, ψ_j^n(μ)⟩` for the trial
/// coefficients; the penalty block `C` is present only for convection-diffusion.
pub fn online_pg_solve(
    problem: &TruthDiscretization,
    mu: f64,
    otb: &OnlineTestBasis,
) -> Result<DVector<f64>> {
    if !problem.riesz_is_constant() {
        return Err(Error::Unsupported(
            "test norm depends on the parameter".into(),
        ));
    }
    problem.piece.check(mu)?;
    let th = problem.operator.theta.eval(mu);
    let thf = problem.rhs.theta.eval(mu);
    let (mb, mf) = (th.len(), thf.len());
    let n = otb.psi_components[0].ncols();
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for k in 0..mb {
        for l in 0..mb {
            a += &otb.psi_b[k * mb + l] * (th[k] * th[l]);
        }
        for j in 0..mf {
            rhs += &otb.psi_f[k * mf + j] * (th[k] * thf[j]);
        }
    }
    if let Some(c) = &otb.penalty_n {
        a += c;
    }
    a.lu().solve(&rhs).ok_or(Error::Unstable { mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametric_problem::{
        build_cd_problem, build_transport_problem, cover_pieces, CdParams, ParameterDomain,
        TransportParams,
    };

    fn transport() -> TruthDiscretization {
        let d = ParameterDomain::equidistant(0.2, 1.4, 7).unwrap();
        let piece = cover_pieces(&d).unwrap().remove(0);
        build_transport_problem(
            &TransportParams {
                trial_level: 2,
                test_level: 3,
                ..Default::default()
            },
            &piece,
        )
        .unwrap()
    }

    #[test]
    fn transport_truth_has_zero_residual() {
        let p = transport();
        let s = solve_truth(&p, 0.7).unwrap();
        assert!(s.residual_norm < 1e-12, "{}", s.residual_norm);
        assert!(s.p.norm() > 0.1);
    }

    #[test]
    fn cd_truth_block_residual() {
        let d = ParameterDomain::equidistant(0.2, 1.4, 3).unwrap();
        let piece = cover_pieces(&d).unwrap().remove(0);
        let p = build_cd_problem(
            &CdParams {
                trial_level: 3,
                test_level: 4,
                ..Default::default()
            },
            &piece,
        )
        .unwrap();
        let s = solve_truth(&p, 0.8).unwrap();
        let k = truth_system(&p, 0.8).unwrap();
        let mut x = s.u.clone().insert_rows(s.u.len(), s.p.len(), 0.0);
        x.rows_mut(s.u.len(), s.p.len()).copy_from(&s.p);
        let mut rhs = DVector::zeros(k.nrows());
        rhs.rows_mut(0, p.test_dim())
            .copy_from(&p.rhs_at(0.8).unwrap());
        let r = (&rhs - k.mul_vec(&x)).norm();
        assert!(r <= 1e-10 * (k.frobenius_norm() * x.norm() + rhs.norm()));
        assert!(s.residual_norm > 0.0);
    }

    #[test]
    fn truth_cache_solves_once() {
        let p = transport();
        let c = TruthCache::new();
        let a = c.get(&p, 0.7).unwrap();
        let b = c.get(&p, 0.7).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn online_basis_rejected_for_transport() {
        let p = transport();
        let pair = ReducedPair::new(&p).unwrap();
        assert!(matches!(
            OnlineTestBasis::build(&p, &pair),
            Err(Error::Unsupported(_))
        ));
    }
}
