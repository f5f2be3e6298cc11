use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parametric_problem::{TruthDiscretization, XhatNorm};

/// Which trial norm the stability diagnostics refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// The problem's `X̂` norm (graph norm, or `L2` for transport).
    #[default]
    Graph,
    /// The parameter-independent native trial norm.
    Native,
}

/// Reduced (cross-)Gramians at one parameter.
#[derive(Debug, Clone)]
pub struct ReducedGramians {
    pub mu: f64,
    /// `m × n`, entries `b_μ(φ_j, ψ_i)`.
    pub b_n: DMatrix<f64>,
    /// `m × m` test Gramian.
    pub r_yn: DMatrix<f64>,
    /// `n × n` trial Gramian in the requested norm.
    pub r_xn: DMatrix<f64>,
    /// `n × n` penalty block `ωZᵀHZ` (convection-diffusion only).
    pub penalty_n: Option<DMatrix<f64>>,
    /// Reduced load `Yᵀ f(μ)`.
    pub f_n: DVector<f64>,
}

/// Offline data of the truth dual norm `‖R_Y⁻¹(f − B Zc)‖_Y` when `R_Y` is
/// parameter independent.
#[derive(Debug, Clone)]
struct DualOffline {
    /// `f_aᵀ R⁻¹ f_b`.
    ff: DMatrix<f64>,
    /// `R⁻¹ f_a`, one column per load component.
    rf: DMatrix<f64>,
}

/// Reduced trial/test bases with the cached products needed online.
///
/// Truth-size products (`B_k Z`, `R_l Y`, and `R⁻¹B_k Z` when the test
/// Gramian is constant) are extended column by column; the small reduced
/// tensors are rebuilt from them after every change.
#[derive(Debug, Clone)]
pub struct ReducedPair {
    z: DMatrix<f64>,
    y: DMatrix<f64>,
    bz: Vec<DMatrix<f64>>,
    wz: Vec<DMatrix<f64>>,
    ry: Vec<DMatrix<f64>>,
    dual: Option<DualOffline>,
    // reduced tensors
    yb: Vec<DMatrix<f64>>,
    yry: Vec<DMatrix<f64>>,
    yf: Vec<DVector<f64>>,
    /// `G_kl = (B_k Z)ᵀ R⁻¹ (B_l Z)`, flattened `k * m_B + l`.
    g: Vec<DMatrix<f64>>,
    /// `f_aᵀ R⁻¹ B_k Z`, flattened `a * m_B + k`.
    fw: Vec<DVector<f64>>,
    zpen: Option<DMatrix<f64>>,
    znat: DMatrix<f64>,
    zfix: Option<DMatrix<f64>>,
}

fn append_col(m: &mut DMatrix<f64>, v: &DVector<f64>) {
    let n = m.ncols();
    let owned = std::mem::replace(m, DMatrix::zeros(0, 0));
    let mut grown = owned.insert_column(n, 0.0);
    grown.set_column(n, v);
    *m = grown;
}

impl ReducedPair {
    /// Empty pair (`n = m = 0`).
    pub fn new(problem: &TruthDiscretization) -> Result<Self> {
        let (nx, ny) = (problem.trial_dim(), problem.test_dim());
        let mb = problem.operator.len();
        let dual = if problem.riesz_is_constant() {
            let mu = problem.piece.lo;
            let fmat = DMatrix::from_columns(&problem.rhs.components);
            let rf = problem.riesz_solve_mat(mu, &fmat)?;
            let ff = fmat.transpose() * &rf;
            Some(DualOffline {
                ff: (&ff + ff.transpose()) * 0.5,
                rf,
            })
        } else {
            None
        };
        let mut pair = ReducedPair {
            z: DMatrix::zeros(nx, 0),
            y: DMatrix::zeros(ny, 0),
            bz: vec![DMatrix::zeros(ny, 0); mb],
            wz: if problem.riesz_is_constant() {
                vec![DMatrix::zeros(ny, 0); mb]
            } else {
                Vec::new()
            },
            ry: vec![DMatrix::zeros(ny, 0); problem.riesz_y.len()],
            dual,
            yb: Vec::new(),
            yry: Vec::new(),
            yf: Vec::new(),
            g: Vec::new(),
            fw: Vec::new(),
            zpen: None,
            znat: DMatrix::zeros(0, 0),
            zfix: None,
        };
        pair.refresh(problem);
        Ok(pair)
    }

    /// Pair spanned by the given truth bases (columns are used as is).
    pub fn from_bases(
        problem: &TruthDiscretization,
        z: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> Result<Self> {
        let mut pair = Self::new(problem)?;
        pair.push_trial_columns(problem, z)?;
        pair.push_test_columns(problem, y)?;
        pair.refresh(problem);
        Ok(pair)
    }

    /// The pair restricted to the first `n` trial and `m` test vectors.
    pub fn truncated(&self, problem: &TruthDiscretization, n: usize, m: usize) -> Result<Self> {
        if n > self.n() || m > self.m() {
            return Err(Error::Argument(format!(
                "cannot truncate ({}, {}) to ({n}, {m})",
                self.n(),
                self.m()
            )));
        }
        let mut out = self.clone();
        out.z = self.z.columns(0, n).into_owned();
        out.y = self.y.columns(0, m).into_owned();
        out.bz = self
            .bz
            .iter()
            .map(|b| b.columns(0, n).into_owned())
            .collect();
        out.wz = self
            .wz
            .iter()
            .map(|w| w.columns(0, n).into_owned())
            .collect();
        out.ry = self
            .ry
            .iter()
            .map(|r| r.columns(0, m).into_owned())
            .collect();
        out.refresh(problem);
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.z.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Trial basis `Z` (truth coefficients in columns).
    pub fn trial_basis(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Test basis `Y`.
    pub fn test_basis(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// `B_k Z` for every operator component.
    pub fn operator_times_trial(&self) -> &[DMatrix<f64>] {
        &self.bz
    }

    fn push_trial_columns(
        &mut self,
        problem: &TruthDiscretization,
        z: &DMatrix<f64>,
    ) -> Result<()> {
        if z.nrows() != problem.trial_dim() {
            return Err(Error::Shape(
                "trial vector length differs from the trial dimension".into(),
            ));
        }
        let mu = problem.piece.lo;
        for v in z.column_iter() {
            let v = v.into_owned();
            for (k, bk) in problem.operator.components.iter().enumerate() {
                let b = bk.mul_vec(&v);
                if !self.wz.is_empty() {
                    let w = problem.riesz_solve(mu, &b)?;
                    append_col(&mut self.wz[k], &w);
                }
                append_col(&mut self.bz[k], &b);
            }
            append_col(&mut self.z, &v);
        }
        Ok(())
    }

    fn push_test_columns(&mut self, problem: &TruthDiscretization, y: &DMatrix<f64>) -> Result<()> {
        if y.nrows() != problem.test_dim() {
            return Err(Error::Shape(
                "test vector length differs from the test dimension".into(),
            ));
        }
        for v in y.column_iter() {
            let v = v.into_owned();
            for (l, rl) in problem.riesz_y.components.iter().enumerate() {
                append_col(&mut self.ry[l], &rl.mul_vec(&v));
            }
            append_col(&mut self.y, &v);
        }
        Ok(())
    }

    /// Appends one trial vector.
    pub fn append_trial(&mut self, problem: &TruthDiscretization, v: &DVector<f64>) -> Result<()> {
        self.push_trial_columns(
            problem,
            &DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
        )?;
        self.refresh(problem);
        Ok(())
    }

    /// Appends one test vector.
    pub fn append_test(&mut self, problem: &TruthDiscretization, v: &DVector<f64>) -> Result<()> {
        self.push_test_columns(
            problem,
            &DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
        )?;
        self.refresh(problem);
        Ok(())
    }

    /// Replaces the test basis, keeping the trial side.
    pub fn set_test_basis(
        &mut self,
        problem: &TruthDiscretization,
        y: &DMatrix<f64>,
    ) -> Result<()> {
        self.y = DMatrix::zeros(problem.test_dim(), 0);
        self.ry = vec![DMatrix::zeros(problem.test_dim(), 0); problem.riesz_y.len()];
        self.push_test_columns(problem, y)?;
        self.refresh(problem);
        Ok(())
    }

    fn refresh(&mut self, problem: &TruthDiscretization) {
        let yt = self.y.transpose();
        self.yb = self.bz.iter().map(|b| &yt * b).collect();
        self.yry = self
            .ry
            .iter()
            .map(|r| {
                let g = &yt * r;
                (&g + g.transpose()) * 0.5
            })
            .collect();
        self.yf = problem.rhs.components.iter().map(|f| &yt * f).collect();
        let mb = self.bz.len();
        self.g.clear();
        if !self.wz.is_empty() {
            for k in 0..mb {
                for l in 0..mb {
                    self.g.push(self.wz[k].transpose() * &self.bz[l]);
                }
            }
        }
        self.fw.clear();
        if let (Some(d), false) = (&self.dual, self.wz.is_empty()) {
            for a in 0..d.rf.ncols() {
                for k in 0..mb {
                    self.fw.push(self.bz[k].transpose() * d.rf.column(a));
                }
            }
        }
        let zt = self.z.transpose();
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        self.zpen = problem
            .penalty
            .as_ref()
            .map(|h| sym(&zt * h.mul_dense(&self.z)));
        self.znat = sym(&zt * problem.native_x.mul_dense(&self.z));
        self.zfix = match &problem.xhat {
            XhatNorm::Fixed(m) => Some(sym(&zt * m.mul_dense(&self.z))),
            XhatNorm::Graph => None,
        };
    }

    /// `Σ_kl Θ_k Θ_l G_kl`, the graph part of the reduced `X̂` Gramian.
    fn graph_part(&self, problem: &TruthDiscretization, mu: f64) -> Result<DMatrix<f64>> {
        let n = self.n();
        if self.wz.is_empty() {
            // Parameter-dependent test Gramian: one truth solve per trial vector.
            let bz = self.b_times_z(problem, mu);
            let w = problem.riesz_solve_mat(mu, &bz)?;
            let g = bz.transpose() * w;
            return Ok((&g + g.transpose()) * 0.5);
        }
        let th = problem.operator.theta.eval(mu);
        let mb = th.len();
        let mut g = DMatrix::zeros(n, n);
        for k in 0..mb {
            for l in 0..mb {
                g += &self.g[k * mb + l] * (th[k] * th[l]);
            }
        }
        Ok((&g + g.transpose()) * 0.5)
    }

    /// `B(μ) Z` at truth size.
    pub fn b_times_z(&self, problem: &TruthDiscretization, mu: f64) -> DMatrix<f64> {
        let th = problem.operator.theta.eval(mu);
        let mut out = DMatrix::zeros(problem.test_dim(), self.n());
        for (t, b) in th.iter().zip(&self.bz) {
            out += b * *t;
        }
        out
    }

    /// Reduced Gramians at `μ` in the requested trial norm.
    pub fn gramians(
        &self,
        problem: &TruthDiscretization,
        mu: f64,
        norm: NormKind,
    ) -> Result<ReducedGramians> {
        problem.piece.check(mu)?;
        if self.n() == 0 {
            return Err(Error::State("reduced pair has an empty trial basis".into()));
        }
        let (n, m) = (self.n(), self.m());
        let th = problem.operator.theta.eval(mu);
        let mut b_n = DMatrix::zeros(m, n);
        for (t, yb) in th.iter().zip(&self.yb) {
            b_n += yb * *t;
        }
        let thr = problem.riesz_y.theta.eval(mu);
        let mut r_yn = DMatrix::zeros(m, m);
        for (t, r) in thr.iter().zip(&self.yry) {
            r_yn += r * *t;
        }
        let thf = problem.rhs.theta.eval(mu);
        let mut f_n = DVector::zeros(m);
        for (t, f) in thf.iter().zip(&self.yf) {
            f_n += f * *t;
        }
        let r_xn = match norm {
            NormKind::Native => self.znat.clone(),
            NormKind::Graph => match &self.zfix {
                Some(x) => x.clone(),
                None => {
                    let mut g = self.graph_part(problem, mu)?;
                    if let Some(p) = &self.zpen {
                        g += p;
                    }
                    g
                }
            },
        };
        Ok(ReducedGramians {
            mu,
            b_n,
            r_yn,
            r_xn,
            penalty_n: self.zpen.clone(),
            f_n,
        })
    }

    /// Squared truth dual norm `‖R_Y⁻¹(f − B_μ Z c)‖²_Y` from offline data.
    ///
    /// Returns `None` when the test Gramian depends on `μ` (no offline split).
    pub fn truth_dual_sq(
        &self,
        problem: &TruthDiscretization,
        mu: f64,
        c: &DVector<f64>,
    ) -> Option<f64> {
        let d = self.dual.as_ref()?;
        let th = problem.operator.theta.eval(mu);
        let thf = problem.rhs.theta.eval(mu);
        let mb = th.len();
        let mut val = 0.0;
        for a in 0..thf.len() {
            for b in 0..thf.len() {
                val += thf[a] * thf[b] * d.ff[(a, b)];
            }
        }
        if self.n() > 0 {
            for a in 0..thf.len() {
                for k in 0..mb {
                    val -= 2.0 * thf[a] * th[k] * self.fw[a * mb + k].dot(c);
                }
            }
            let g = self.graph_part(problem, mu).ok()?;
            val += c.dot(&(g * c));
        }
        Some(val)
    }

    /// Truth trial vector `Z c`.
    pub fn lift_trial(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.z * c
    }

    /// Truth test vector `Y u`.
    pub fn lift_test(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.y * u
    }

    /// Truth test vectors `R_Y⁻¹ B_k Z` (only for a constant test Gramian).
    pub fn riesz_images(&self) -> &[DMatrix<f64>] {
        &self.wz
    }

    /// Reduced components of `Yₙᵀ B_k Zₙ` and `Yₙᵀ R_Y,k Yₙ`.
    pub(crate) fn reduced_blocks(&self) -> (&[DMatrix<f64>], &[DMatrix<f64>]) {
        (&self.yb, &self.yry)
    }
}
