use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la_core::{
    cholesky_spd, gram_schmidt_in, min_singular, orthonormalize_against, solve_refined,
    BandedCholesky, BandedLu, CsrMatrix,
};
use crate::parametric_problem::{
    AffineOperator, AffineVector, CoverPiece, CustomParts, ParameterDomain, ThetaMap,
    TruthDiscretization,
};
use crate::saddle_solver::{NormKind, ReducedPair, SaddleSolution};
use crate::stabilization::{update_delta, update_inf_sup, StabConfig, StabOutcome};

use super::report::l2_projection;
use super::surrogate::{argmax, surrogate_truth_dual};
use super::{StabMethod, SurrogateKind, Termination};

/// Test snapshots with `‖u_𝒩(μ)‖_Y` below this fraction of the data norm are
/// round-off and are not inserted.
const NEGLIGIBLE_TEST_SNAPSHOT: f64 = 1e-10;

/// Mixed problem
///
/// ```text
/// a_μ(u, v) + b_μ(p, v)      = f_μ(v)   for all v ∈ Y
/// b_μ(q, u) − ⟨C p, q⟩       = g_μ(q)   for all q ∈ X
/// ```
///
/// The base discretization supplies `b_μ`, `f_μ`, `C` and the reference
/// inner products on `Y` (test Gramian) and `X` (native trial Gramian).
#[derive(Debug, Clone)]
pub struct GenericSaddle {
    pub base: Arc<TruthDiscretization>,
    /// `a_μ`, symmetric positive definite on `Y`.
    pub a: AffineOperator,
    pub g: AffineVector,
    x_factor: Arc<BandedCholesky>,
}

impl GenericSaddle {
    pub fn new(base: Arc<TruthDiscretization>, a: AffineOperator, g: AffineVector) -> Result<Self> {
        let (ny, nx) = (base.test_dim(), base.trial_dim());
        if a.nrows() != ny || a.ncols() != ny {
            return Err(Error::Shape("a must act on the test space".into()));
        }
        if g.dim() != nx {
            return Err(Error::Shape("g must live on the trial space".into()));
        }
        let x_factor = Arc::new(BandedCholesky::factor(&base.native_x)?);
        Ok(GenericSaddle {
            base,
            a,
            g,
            x_factor,
        })
    }

    /// `a_μ = (·,·)_{Y_μ}` and `g = 0`: the mixed form of the Petrov–Galerkin
    /// problem solved by the double greedy.
    pub fn from_petrov_galerkin(base: Arc<TruthDiscretization>) -> Result<Self> {
        let a = base.riesz_y.clone();
        let g = AffineVector::new(vec![DVector::zeros(base.trial_dim())], ThetaMap::constant())?;
        Self::new(base, a, g)
    }

    pub fn trial_dim(&self) -> usize {
        self.base.trial_dim()
    }

    pub fn test_dim(&self) -> usize {
        self.base.test_dim()
    }

    /// Truth solve of the mixed system at `μ`.
    pub fn solve_truth(&self, mu: f64) -> Result<SaddleSolution> {
        let a = {
            self.base.piece.check(mu)?;
            self.a.assemble(mu)
        };
        let b = self.base.operator_at(mu)?;
        let c = self.base.penalty.as_ref().map(|h| h.scaled(-1.0));
        let k = CsrMatrix::saddle(&a, &b, c.as_ref())?;
        let ny = self.test_dim();
        let mut rhs = DVector::zeros(k.nrows());
        rhs.rows_mut(0, ny).copy_from(&self.base.rhs_at(mu)?);
        rhs.rows_mut(ny, self.trial_dim())
            .copy_from(&self.g.assemble(mu));
        let lu = BandedLu::factor(&k)?;
        let x = solve_refined(&k, &lu, &rhs)?;
        let u = x.rows(0, ny).into_owned();
        let p = x.rows(ny, self.trial_dim()).into_owned();
        let residual_norm = self.base.riesz_y_at(mu)?.bilinear(&u, &u).max(0.0).sqrt();
        Ok(SaddleSolution {
            u,
            p,
            mu,
            residual_norm,
        })
    }

    /// `‖f_μ‖_{Y'} + ‖g_μ‖_{X'}`.
    pub fn data_norm(&self, mu: f64) -> Result<f64> {
        let f = self.base.rhs_at(mu)?;
        let g = self.g.assemble(mu);
        let fy = f.dot(&self.base.riesz_solve(mu, &f)?).max(0.0).sqrt();
        let gx = g.dot(&self.x_factor.solve(&g)).max(0.0).sqrt();
        Ok(fy + gx)
    }

    /// `R*(μ) = ‖f − A u − B p‖_{Y'} + ‖g − Bᵀu + C p‖_{X'}` for truth vectors.
    pub fn residual_star(&self, mu: f64, u: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let b = self.base.operator_at(mu)?;
        let r1 = self.base.rhs_at(mu)? - self.a.apply(mu, u) - b.mul_vec(p);
        let mut r2 = self.g.assemble(mu) - b.tr_mul_vec(u);
        if let Some(h) = &self.base.penalty {
            r2 += h.mul_vec(p);
        }
        let s1 = self.base.riesz_solve(mu, &r1)?;
        let s2 = self.x_factor.solve(&r2);
        Ok(r1.dot(&s1).max(0.0).sqrt() + r2.dot(&s2).max(0.0).sqrt())
    }
}

/// Reduced spaces of the mixed problem.
#[derive(Debug, Clone)]
pub struct GenericPair {
    pub pair: ReducedPair,
    /// `Yᵀ A_k Y`.
    ya: Vec<DMatrix<f64>>,
    /// `Zᵀ g_a`.
    zg: Vec<DVector<f64>>,
}

impl GenericPair {
    pub fn new(problem: &GenericSaddle) -> Result<Self> {
        let mut out = GenericPair {
            pair: ReducedPair::new(&problem.base)?,
            ya: Vec::new(),
            zg: Vec::new(),
        };
        out.refresh(problem);
        Ok(out)
    }

    fn refresh(&mut self, problem: &GenericSaddle) {
        let y = self.pair.test_basis();
        let yt = y.transpose();
        self.ya = problem
            .a
            .components
            .iter()
            .map(|ak| {
                let m = &yt * ak.mul_dense(y);
                (&m + m.transpose()) * 0.5
            })
            .collect();
        let zt = self.pair.trial_basis().transpose();
        self.zg = problem.g.components.iter().map(|g| &zt * g).collect();
    }

    /// The pair restricted to the first `n` trial and `m` test vectors.
    pub fn truncated(&self, problem: &GenericSaddle, n: usize, m: usize) -> Result<Self> {
        let mut out = GenericPair {
            pair: self.pair.truncated(&problem.base, n, m)?,
            ya: Vec::new(),
            zg: Vec::new(),
        };
        out.refresh(problem);
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.pair.n()
    }

    pub fn m(&self) -> usize {
        self.pair.m()
    }

    /// Reduced solve; `u` and `p` are coefficients in the pair's bases and
    /// `residual_norm` is `‖u‖_Y`.
    pub fn solve(&self, problem: &GenericSaddle, mu: f64) -> Result<SaddleSolution> {
        let gram = self.pair.gramians(&problem.base, mu, NormKind::Native)?;
        let (m, n) = gram.b_n.shape();
        let tha = problem.a.theta.eval(mu);
        let mut a_n = DMatrix::zeros(m, m);
        for (t, a) in tha.iter().zip(&self.ya) {
            a_n += a * *t;
        }
        let thg = problem.g.theta.eval(mu);
        let mut g_n = DVector::zeros(n);
        for (t, g) in thg.iter().zip(&self.zg) {
            g_n += g * *t;
        }
        let (ainv_b, ainv_f) = if m > 0 {
            let af = cholesky_spd(&a_n).map_err(|_| Error::Unstable { mu })?;
            (af.solve_mat(&gram.b_n), af.solve(&gram.f_n))
        } else {
            (DMatrix::zeros(0, n), DVector::zeros(0))
        };
        let mut s = gram.b_n.transpose() * &ainv_b;
        if let Some(c) = &gram.penalty_n {
            s += c;
        }
        let sf = cholesky_spd(&((&s + s.transpose()) * 0.5)).map_err(|_| Error::Unstable { mu })?;
        let p = sf.solve(&(gram.b_n.transpose() * &ainv_f - g_n));
        let u = &ainv_f - &ainv_b * &p;
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

    /// Adds a trial snapshot; `false` if it is dependent on the basis.
    fn add_trial(&mut self, problem: &GenericSaddle, p: &DVector<f64>) -> Result<bool> {
        match gram_schmidt_in(&problem.base.native_x, self.pair.trial_basis(), p) {
            Ok(v) => {
                self.pair.append_trial(&problem.base, &v)?;
                self.refresh(problem);
                Ok(true)
            }
            Err(Error::LinearlyDependent) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Adds a test snapshot; `false` if it is negligible against the data
    /// or dependent on the basis.
    fn add_test(&mut self, problem: &GenericSaddle, mu: f64, u: &DVector<f64>) -> Result<bool> {
        let ry = problem.base.riesz_y_at(mu)?;
        if ry.bilinear(u, u).max(0.0).sqrt() <= NEGLIGIBLE_TEST_SNAPSHOT * problem.data_norm(mu)? {
            return Ok(false);
        }
        let w = if problem.base.riesz_is_constant() {
            gram_schmidt_in(&ry, self.pair.test_basis(), u)
        } else {
            orthonormalize_against(&ry, self.pair.test_basis(), u)
        };
        match w {
            Ok(w) => {
                self.pair.append_test(&problem.base, &w)?;
                self.refresh(problem);
                Ok(true)
            }
            Err(Error::LinearlyDependent) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

/// Error surrogate of the mixed double greedy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "primal", rename_all = "snake_case")]
pub enum Dg2Surrogate {
    /// Residual of both equations in the reference dual norms.
    Rstar,
    /// A surrogate of the trial component only, as used by the plain double greedy.
    Primal(SurrogateKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dg2Config {
    pub tol: f64,
    pub n_max: usize,
    pub surrogate: Dg2Surrogate,
    pub method: StabMethod,
    pub stab: StabConfig,
    pub mu_start: Option<f64>,
}

impl Default for Dg2Config {
    fn default() -> Self {
        Dg2Config {
            tol: 1e-6,
            n_max: 20,
            surrogate: Dg2Surrogate::Rstar,
            method: StabMethod::InfSup,
            stab: StabConfig::default(),
            mu_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dg2Record {
    pub n: usize,
    pub m: usize,
    pub snapshot_mu: f64,
    /// Whether the test snapshot `u_𝒩(μ)` was added.
    pub test_snapshot: bool,
    pub enrichments: usize,
    pub sigma_min: f64,
    pub delta_max: f64,
    pub max_surrogate: f64,
    pub argmax_mu: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct Dg2Run {
    pub pair: GenericPair,
    pub records: Vec<Dg2Record>,
    pub termination: Termination,
}

impl Dg2Run {
    /// The pair as it was after `n` outer steps.
    pub fn pair_at(&self, problem: &GenericSaddle, n: usize) -> Result<GenericPair> {
        let rec = self
            .records
            .iter()
            .find(|r| r.n == n)
            .ok_or_else(|| Error::Argument(format!("no record for n = {n}")))?;
        self.pair.truncated(problem, rec.n, rec.m)
    }
}

/// `L2` errors of a mixed reduced pair at one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dg2Diagnostics {
    pub mu: f64,
    pub rstar: f64,
    /// `‖p_𝒩 − p_n‖_{L2}`.
    pub rb_truth: f64,
    /// `‖p_n − Π_{X_n} p_𝒩‖_{L2}`.
    pub rb_l2: f64,
}

/// Diagnostics of a mixed pair at every sample, in sample order.
pub fn dg2_report(problem: &GenericSaddle, pair: &GenericPair) -> Result<Vec<Dg2Diagnostics>> {
    let base = &problem.base;
    base.samples()
        .par_iter()
        .map(|&mu| {
            let truth = problem.solve_truth(mu)?;
            let red = pair.solve(problem, mu)?;
            let pn = pair.pair.lift_trial(&red.p);
            let un = pair.pair.lift_test(&red.u);
            let e = &truth.p - &pn;
            let d = &pn - l2_projection(base, pair.pair.trial_basis(), &truth.p)?;
            Ok(Dg2Diagnostics {
                mu,
                rstar: problem.residual_star(mu, &un, &pn)?,
                rb_truth: base.trial_mass.bilinear(&e, &e).max(0.0).sqrt(),
                rb_l2: base.trial_mass.bilinear(&d, &d).max(0.0).sqrt(),
            })
        })
        .collect()
}

fn surrogate_at(
    problem: &GenericSaddle,
    pair: &GenericPair,
    mu: f64,
    kind: Dg2Surrogate,
) -> Result<f64> {
    let sol = pair.solve(problem, mu)?;
    match kind {
        Dg2Surrogate::Rstar => {
            let u = pair.pair.lift_test(&sol.u);
            let p = pair.pair.lift_trial(&sol.p);
            problem.residual_star(mu, &u, &p)
        }
        Dg2Surrogate::Primal(SurrogateKind::TruthDual) => {
            surrogate_truth_dual(&problem.base, mu, &pair.pair, &sol.p)
        }
        Dg2Surrogate::Primal(SurrogateKind::ReducedDual) => Ok(sol.residual_norm),
    }
}

fn stabilize(
    problem: &GenericSaddle,
    pair: &mut GenericPair,
    cfg: &Dg2Config,
) -> Result<StabOutcome> {
    let out = match cfg.method {
        StabMethod::InfSup => update_inf_sup(&problem.base, &mut pair.pair, &cfg.stab),
        StabMethod::Delta => update_delta(&problem.base, &mut pair.pair, &cfg.stab),
    };
    pair.refresh(problem);
    out
}

/// Double greedy that inserts the trial snapshot `p_𝒩(μ̂)` into `X_n` and the
/// test snapshot `u_𝒩(μ̂)` into `Y_n`, then stabilizes.
pub fn dg2(problem: &GenericSaddle, cfg: &Dg2Config) -> Result<Dg2Run> {
    cfg.stab.validate()?;
    if cfg.n_max == 0 {
        return Err(Error::config("n_max", "must be at least 1"));
    }
    let clock = Instant::now();
    let base = &problem.base;
    let mut pair = GenericPair::new(problem)?;
    let mut records = Vec::new();
    let mut mu = match cfg.mu_start {
        Some(mu) => {
            base.piece.check(mu)?;
            mu
        }
        None => base.samples()[0],
    };
    let termination = loop {
        let truth = problem.solve_truth(mu)?;
        if !pair.add_trial(problem, &truth.p)? {
            break Termination::SnapshotDependent { mu };
        }
        let test_snapshot = pair.add_test(problem, mu, &truth.u)?;
        let outcome = match stabilize(problem, &mut pair, cfg) {
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
        let values: Vec<f64> = base
            .samples()
            .par_iter()
            .map(|&s| surrogate_at(problem, &pair, s, cfg.surrogate))
            .collect::<Result<_>>()?;
        let k = argmax(&values);
        records.push(Dg2Record {
            n: pair.n(),
            m: pair.m(),
            snapshot_mu: mu,
            test_snapshot,
            enrichments: outcome.records.len(),
            sigma_min: outcome.sigma_min,
            delta_max: outcome.delta_max,
            max_surrogate: values[k],
            argmax_mu: base.samples()[k],
            elapsed_s: clock.elapsed().as_secs_f64(),
        });
        if values[k] <= cfg.tol {
            break Termination::Tolerance;
        }
        if pair.n() >= cfg.n_max || pair.n() >= problem.trial_dim() {
            break Termination::MaxDimension;
        }
        mu = base.samples()[k];
    };
    Ok(Dg2Run {
        pair,
        records,
        termination,
    })
}

/// Random mixed problem used to exercise the mixed double greedy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub trial_dim: usize,
    pub test_dim: usize,
    /// Number of affine terms of `b_μ`.
    pub components: usize,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            trial_dim: 20,
            test_dim: 30,
            components: 3,
            seed: 7,
            lo: 0.2,
            hi: 1.4,
            samples: 100,
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let c = random_matrix(rng, n, n);
    DMatrix::identity(n, n) + c.transpose() * c * (0.5 / n as f64)
}

/// Dense random mixed problem with a reproducible seed.
///
/// `b_μ = Σ_k Θ_k(μ) B_k` with `Θ = (1, cos μ, sin μ, cos 2μ, ...)`, the
/// leading term dominant and the whole family scaled so that its largest
/// singular value in the reference norms is one. `a_μ = A_0 + μ A_1`, and
/// `f`, `g` have one constant and one oscillating term each. The truth
/// inf-sup constant is measured over the sample.
pub fn synthetic_saddle(params: &SyntheticParams) -> Result<GenericSaddle> {
    if params.trial_dim == 0 || params.test_dim < params.trial_dim {
        return Err(Error::config("test_dim", "needs 0 < trial_dim <= test_dim"));
    }
    if params.components == 0 {
        return Err(Error::config("components", "must be at least 1"));
    }
    let domain = ParameterDomain::equidistant(params.lo, params.hi, params.samples)?;
    let piece = CoverPiece::whole(&domain);
    let (nx, ny) = (params.trial_dim, params.test_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let ry = random_spd(&mut rng, ny);
    let rx = random_spd(&mut rng, nx);
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(params.components);
    for k in 0..params.components {
        let mut b = random_matrix(&mut rng, ny, nx);
        if k == 0 {
            for i in 0..nx {
                b[(i, i)] += 3.0;
            }
        } else {
            b *= 0.5;
        }
        blocks.push(b);
    }
    let mut theta = ThetaMap::new().with("1", |_| 1.0);
    for k in 1..params.components {
        let freq = k.div_ceil(2) as f64;
        theta = if k % 2 == 1 {
            theta.with(format!("cos{freq}"), move |mu: f64| (freq * mu).cos())
        } else {
            theta.with(format!("sin{freq}"), move |mu: f64| (freq * mu).sin())
        };
    }
    let fy = cholesky_spd(&ry)?;
    let fx = cholesky_spd(&rx)?;
    let normalized = |b: &DMatrix<f64>| {
        let d = fy.inv_t_mul(b);
        fx.inv_t_mul(&d.transpose()).transpose()
    };
    let assemble = |blocks: &[DMatrix<f64>], mu: f64| {
        let th = theta.eval(mu);
        let mut b = DMatrix::zeros(ny, nx);
        for (t, bk) in th.iter().zip(blocks) {
            b += bk * *t;
        }
        b
    };
    let mut smax: f64 = 0.0;
    for &mu in &piece.samples {
        let d = normalized(&assemble(&blocks, mu));
        smax = smax.max(d.singular_values().max());
    }
    let scale = 1.0 / (1.01 * smax);
    for b in &mut blocks {
        *b *= scale;
    }
    let mut beta = f64::INFINITY;
    for &mu in &piece.samples {
        beta = beta.min(min_singular(&normalized(&assemble(&blocks, mu)))?.sigma_min);
    }
    let operator = AffineOperator::new(
        blocks.iter().map(CsrMatrix::from_dense).collect(),
        theta.clone(),
    )?;
    let riesz_y = AffineOperator::new(vec![CsrMatrix::from_dense(&ry)], ThetaMap::constant())?;
    let rhs = AffineVector::new(
        vec![random_vector(&mut rng, ny), random_vector(&mut rng, ny)],
        ThetaMap::new().with("1", |_| 1.0).with("cos", f64::cos),
    )?;
    let base = TruthDiscretization::custom(CustomParts {
        operator,
        riesz_y,
        x_gramian: CsrMatrix::from_dense(&rx),
        rhs,
        piece,
        delta_truth: (1.0 - beta * beta).max(1e-12).sqrt().min(1.0 - 1e-12),
        beta_truth: beta,
    })?;
    let a0 = random_spd(&mut rng, ny);
    let a1 = {
        let d = DVector::from_fn(ny, |_, _| rng.random_range(0.0..1.0));
        DMatrix::from_diagonal(&d)
    };
    let a = AffineOperator::new(
        vec![CsrMatrix::from_dense(&a0), CsrMatrix::from_dense(&a1)],
        ThetaMap::new().with("1", |_| 1.0).with("mu", |mu| mu),
    )?;
    let g = AffineVector::new(
        vec![random_vector(&mut rng, nx), random_vector(&mut rng, nx)],
        ThetaMap::new().with("1", |_| 1.0).with("sin", f64::sin),
    )?;
    GenericSaddle::new(Arc::new(base), a, g)
}
