use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AffineOperator, AffineVector, CoverPiece, ThetaMap};
use crate::error::{Error, Result};
use crate::fem_grid::{
    assemble, assemble_rhs, build_space, BoundaryData, ComponentKind, Continuity, EdgeSet, FESpace,
    Inflow, Source,
};
use crate::la_core::{BandedCholesky, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    ConvectionDiffusion,
    Transport,
    Custom,
}

/// Inner product on the trial space used for the graph-norm diagnostics.
#[derive(Debug, Clone)]
pub enum XhatNorm {
    /// A parameter-independent Gramian.
    Fixed(CsrMatrix),
    /// `‖B_μ q‖²_{Y'} + ⟨Hq, q⟩` with the penalty block `H` (if any).
    Graph,
}

/// Discrete realization of the outflow trace norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyNorm {
    /// Boundary mass scaled by the inverse test mesh width.
    #[default]
    ScaledTrace,
    /// Plain boundary mass.
    Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdParams {
    pub epsilon: f64,
    pub omega: f64,
    pub trial_level: u32,
    pub test_level: u32,
    pub penalty_norm: PenaltyNorm,
    pub delta_truth: f64,
    pub beta_truth: f64,
}

impl Default for CdParams {
    fn default() -> Self {
        CdParams {
            epsilon: 1.0 / 32.0,
            omega: 1e-2,
            trial_level: 5,
            test_level: 6,
            penalty_norm: PenaltyNorm::ScaledTrace,
            delta_truth: 0.5,
            beta_truth: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportParams {
    pub trial_level: u32,
    pub test_level: u32,
    pub source: Source,
    pub boundary: BoundaryData,
    pub delta_truth: f64,
    pub beta_truth: f64,
}

impl Default for TransportParams {
    fn default() -> Self {
        TransportParams {
            trial_level: 3,
            test_level: 4,
            source: Source::Constant(1.0),
            boundary: BoundaryData::Zero,
            delta_truth: 0.5,
            beta_truth: 1.0,
        }
    }
}

/// Ingredients of a problem given directly by matrices.
#[derive(Debug, Clone)]
pub struct CustomParts {
    pub operator: AffineOperator,
    pub riesz_y: AffineOperator,
    /// Reference trial Gramian, used both as `X̂` and native norm.
    pub x_gramian: CsrMatrix,
    pub rhs: AffineVector,
    pub piece: CoverPiece,
    pub delta_truth: f64,
    pub beta_truth: f64,
}

type FactorSlot = Arc<OnceLock<std::result::Result<Arc<BandedCholesky>, String>>>;

/// LRU cache of test-Gramian factorizations; each key is factored at most
/// once while resident.
#[derive(Debug)]
struct RieszCache {
    capacity: usize,
    inner: Mutex<(HashMap<u64, FactorSlot>, VecDeque<u64>)>,
}

impl RieszCache {
    fn new(capacity: usize) -> Self {
        RieszCache {
            capacity: capacity.max(1),
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    fn slot(&self, key: u64) -> FactorSlot {
        let mut guard = self.inner.lock().expect("cache lock poisoned");
        let (map, order) = &mut *guard;
        if let Some(s) = map.get(&key) {
            let s = s.clone();
            if let Some(pos) = order.iter().position(|&k| k == key) {
                order.remove(pos);
            }
            order.push_back(key);
            return s;
        }
        while order.len() >= self.capacity {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
        let s: FactorSlot = Arc::new(OnceLock::new());
        map.insert(key, s.clone());
        order.push_back(key);
        s
    }

    fn len(&self) -> usize {
        self.inner.lock().expect("cache lock poisoned").0.len()
    }
}

/// Truth-level problem on one cover piece.
#[derive(Debug)]
pub struct TruthDiscretization {
    pub kind: ProblemKind,
    pub piece: CoverPiece,
    pub trial: Option<FESpace>,
    pub test: Option<FESpace>,
    /// `B(μ)`, rows in the test space.
    pub operator: AffineOperator,
    /// Test-space Gramian `R_Y(μ)`.
    pub riesz_y: AffineOperator,
    pub xhat: XhatNorm,
    /// Parameter-independent trial norm (`ε|·|²_{H¹} + ‖·‖²` for CD, `L2` otherwise).
    pub native_x: CsrMatrix,
    /// `L2` Gramian of the trial space.
    pub trial_mass: CsrMatrix,
    /// Penalty block `ωH` (convection-diffusion only).
    pub penalty: Option<CsrMatrix>,
    pub rhs: AffineVector,
    pub epsilon: Option<f64>,
    pub omega: Option<f64>,
    pub delta_truth: f64,
    pub beta_truth: f64,
    riesz_constant: bool,
    cache: RieszCache,
}

fn check_truth_constants(delta: f64, beta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(
            "delta_truth",
            format!("{delta} not in (0, 1)"),
        ));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::config(
            "beta_truth",
            format!("{beta} must be positive"),
        ));
    }
    Ok(())
}

fn check_levels(trial: u32, test: u32) -> Result<()> {
    if test < trial {
        return Err(Error::config(
            "test_level",
            format!("{test} below trial level {trial}"),
        ));
    }
    Ok(())
}

/// Convection-diffusion `-εΔp + b(μ)·∇p + p = 1` with strong inflow
/// constraints and a weak outflow penalty.
pub fn build_cd_problem(params: &CdParams, piece: &CoverPiece) -> Result<TruthDiscretization> {
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(Error::config(
            "epsilon",
            format!("{} must be positive", params.epsilon),
        ));
    }
    if !(params.omega > 0.0 && params.omega.is_finite()) {
        return Err(Error::config(
            "omega",
            format!("{} must be positive", params.omega),
        ));
    }
    check_levels(params.trial_level, params.test_level)?;
    check_truth_constants(params.delta_truth, params.beta_truth)?;
    let eps = params.epsilon;
    let trial = build_space(params.trial_level, Continuity::Continuous, piece.inflow)?;
    let test = build_space(params.test_level, Continuity::Continuous, EdgeSet::ALL)?;

    let stiff = assemble(&trial, &test, ComponentKind::Stiff)?.scaled(eps);
    let conv_x = assemble(&trial, &test, ComponentKind::ConvX)?;
    let conv_y = assemble(&trial, &test, ComponentKind::ConvY)?;
    let mass = assemble(&trial, &test, ComponentKind::Mass)?;
    let theta = ThetaMap::new()
        .with("1", |_| 1.0)
        .with("cos", f64::cos)
        .with("sin", f64::sin)
        .with("1", |_| 1.0);
    let operator = AffineOperator::new(vec![stiff, conv_x, conv_y, mass], theta)?;

    let ry = CsrMatrix::linear_combination(
        &[eps, 1.0],
        &[
            &assemble(&test, &test, ComponentKind::Stiff)?,
            &assemble(&test, &test, ComponentKind::Mass)?,
        ],
    )?;
    let riesz_y = AffineOperator::new(vec![ry], ThetaMap::constant())?;

    let trial_mass = assemble(&trial, &trial, ComponentKind::Mass)?;
    let native_x = CsrMatrix::linear_combination(
        &[eps, 1.0],
        &[
            &assemble(&trial, &trial, ComponentKind::Stiff)?,
            &trial_mass,
        ],
    )?;
    let scale = match params.penalty_norm {
        PenaltyNorm::ScaledTrace => 1.0 / test.grid.h(),
        PenaltyNorm::Trace => 1.0,
    };
    let mut penalty = CsrMatrix::zeros(trial.ndofs(), trial.ndofs());
    for e in piece.outflow.edges() {
        let em = assemble(&trial, &trial, ComponentKind::EdgeMass(e))?;
        penalty = CsrMatrix::linear_combination(&[1.0, params.omega * scale], &[&penalty, &em])?;
    }
    let f = assemble_rhs(&test, Source::Constant(1.0), None)?;
    let rhs = AffineVector::new(vec![f], ThetaMap::constant())?;

    Ok(TruthDiscretization {
        kind: ProblemKind::ConvectionDiffusion,
        piece: piece.clone(),
        trial: Some(trial),
        test: Some(test),
        operator,
        riesz_y,
        xhat: XhatNorm::Graph,
        native_x,
        trial_mass,
        penalty: Some(penalty),
        rhs,
        epsilon: Some(eps),
        omega: Some(params.omega),
        delta_truth: params.delta_truth,
        beta_truth: params.beta_truth,
        riesz_constant: true,
        cache: RieszCache::new(1),
    })
}

/// Transport `b(μ)·∇p + p = f`, `p = p_b` on the inflow boundary, posed
/// ultraweakly: trial space `L2` (discontinuous Q1), test space constrained on
/// the outflow edges.
pub fn build_transport_problem(
    params: &TransportParams,
    piece: &CoverPiece,
) -> Result<TruthDiscretization> {
    if piece.outflow.is_empty() {
        return Err(Error::config(
            "outflow",
            "test space needs constraints on the outflow edges (singular Riesz map otherwise)",
        ));
    }
    check_levels(params.trial_level, params.test_level)?;
    check_truth_constants(params.delta_truth, params.beta_truth)?;
    let trial = build_space(params.trial_level, Continuity::Discontinuous, EdgeSet::NONE)?;
    let test = build_space(params.test_level, Continuity::Continuous, piece.outflow)?;

    let adj_x = assemble(&trial, &test, ComponentKind::AdjConvX)?.scaled(-1.0);
    let adj_y = assemble(&trial, &test, ComponentKind::AdjConvY)?.scaled(-1.0);
    let mass = assemble(&trial, &test, ComponentKind::Mass)?;
    let operator = AffineOperator::new(vec![adj_x, adj_y, mass], ThetaMap::cos_sin_one())?;

    let tt = |k| assemble(&test, &test, k);
    let gxy = CsrMatrix::linear_combination(
        &[1.0, 1.0],
        &[&tt(ComponentKind::GradXY)?, &tt(ComponentKind::GradYX)?],
    )?;
    let cx = CsrMatrix::linear_combination(
        &[-1.0, -1.0],
        &[&tt(ComponentKind::ConvX)?, &tt(ComponentKind::AdjConvX)?],
    )?;
    let cy = CsrMatrix::linear_combination(
        &[-1.0, -1.0],
        &[&tt(ComponentKind::ConvY)?, &tt(ComponentKind::AdjConvY)?],
    )?;
    let riesz_theta = ThetaMap::new()
        .with("cos*cos", |m: f64| m.cos() * m.cos())
        .with("cos*sin", |m: f64| m.cos() * m.sin())
        .with("sin*sin", |m: f64| m.sin() * m.sin())
        .with("cos", f64::cos)
        .with("sin", f64::sin)
        .with("1", |_| 1.0);
    let riesz_y = AffineOperator::new(
        vec![
            tt(ComponentKind::GradXX)?,
            gxy,
            tt(ComponentKind::GradYY)?,
            cx,
            cy,
            tt(ComponentKind::Mass)?,
        ],
        riesz_theta,
    )?;

    let mut comps = vec![assemble_rhs(&test, params.source, None)?];
    let mut theta = ThetaMap::constant();
    if params.boundary != BoundaryData::Zero {
        for (w, name) in [((1.0, 0.0), "cos"), ((0.0, 1.0), "sin")] {
            let inflow = Inflow {
                edges: piece.inflow,
                data: params.boundary,
                weights: w,
            };
            comps.push(assemble_rhs(&test, Source::Constant(0.0), Some(inflow))?);
            theta = if name == "cos" {
                theta.with("cos", f64::cos)
            } else {
                theta.with("sin", f64::sin)
            };
        }
    }
    let rhs = AffineVector::new(comps, theta)?;
    let trial_mass = assemble(&trial, &trial, ComponentKind::Mass)?;

    Ok(TruthDiscretization {
        kind: ProblemKind::Transport,
        piece: piece.clone(),
        trial: Some(trial),
        test: Some(test),
        operator,
        riesz_y,
        xhat: XhatNorm::Graph,
        native_x: trial_mass.clone(),
        trial_mass,
        penalty: None,
        rhs,
        epsilon: None,
        omega: None,
        delta_truth: params.delta_truth,
        beta_truth: params.beta_truth,
        riesz_constant: false,
        cache: RieszCache::new(piece.samples.len()),
    })
}

impl TruthDiscretization {
    /// Problem given directly by affine matrices (no finite element spaces).
    pub fn custom(parts: CustomParts) -> Result<Self> {
        check_truth_constants(parts.delta_truth, parts.beta_truth)?;
        let (ny, nx) = (parts.operator.nrows(), parts.operator.ncols());
        if parts.riesz_y.nrows() != ny || parts.riesz_y.ncols() != ny {
            return Err(Error::Shape(
                "test Gramian does not match the operator rows".into(),
            ));
        }
        if parts.x_gramian.nrows() != nx || parts.x_gramian.ncols() != nx || parts.rhs.dim() != ny {
            return Err(Error::Shape(
                "trial Gramian or data does not match the operator".into(),
            ));
        }
        let mut probe = parts.piece.samples.clone();
        probe.extend([parts.piece.lo, parts.piece.hi]);
        let riesz_constant = parts.riesz_y.varying_count(&probe) == 0;
        let capacity = if riesz_constant {
            1
        } else {
            parts.piece.samples.len()
        };
        Ok(TruthDiscretization {
            kind: ProblemKind::Custom,
            piece: parts.piece,
            trial: None,
            test: None,
            operator: parts.operator,
            riesz_y: parts.riesz_y,
            xhat: XhatNorm::Fixed(parts.x_gramian.clone()),
            native_x: parts.x_gramian.clone(),
            trial_mass: parts.x_gramian,
            penalty: None,
            rhs: parts.rhs,
            epsilon: None,
            omega: None,
            delta_truth: parts.delta_truth,
            beta_truth: parts.beta_truth,
            riesz_constant,
            cache: RieszCache::new(capacity),
        })
    }

    /// Same discretization with another right-hand side and an empty
    /// factorization cache.
    pub fn with_rhs(&self, rhs: AffineVector) -> Result<Self> {
        if rhs.dim() != self.test_dim() {
            return Err(Error::Shape(format!(
                "right-hand side of length {} for test dimension {}",
                rhs.dim(),
                self.test_dim()
            )));
        }
        Ok(TruthDiscretization {
            kind: self.kind,
            piece: self.piece.clone(),
            trial: self.trial.clone(),
            test: self.test.clone(),
            operator: self.operator.clone(),
            riesz_y: self.riesz_y.clone(),
            xhat: self.xhat.clone(),
            native_x: self.native_x.clone(),
            trial_mass: self.trial_mass.clone(),
            penalty: self.penalty.clone(),
            rhs,
            epsilon: self.epsilon,
            omega: self.omega,
            delta_truth: self.delta_truth,
            beta_truth: self.beta_truth,
            riesz_constant: self.riesz_constant,
            cache: RieszCache::new(self.cache.capacity),
        })
    }

    pub fn trial_dim(&self) -> usize {
        self.operator.ncols()
    }

    pub fn test_dim(&self) -> usize {
        self.operator.nrows()
    }

    pub fn samples(&self) -> &[f64] {
        &self.piece.samples
    }

    /// True when the test Gramian does not depend on `μ` within the piece.
    pub fn riesz_is_constant(&self) -> bool {
        self.riesz_constant
    }

    /// `Σ Θ_k(μ) B_k`.
    pub fn operator_at(&self, mu: f64) -> Result<CsrMatrix> {
        self.piece.check(mu)?;
        Ok(self.operator.assemble(mu))
    }

    pub fn riesz_y_at(&self, mu: f64) -> Result<CsrMatrix> {
        self.piece.check(mu)?;
        Ok(self.riesz_y.assemble(mu))
    }

    pub fn rhs_at(&self, mu: f64) -> Result<DVector<f64>> {
        self.piece.check(mu)?;
        Ok(self.rhs.assemble(mu))
    }

    fn factor_at(&self, mu: f64) -> Result<Arc<BandedCholesky>> {
        self.piece.check(mu)?;
        let key = if self.riesz_constant { 0 } else { mu.to_bits() };
        let slot = self.cache.slot(key);
        let out = slot.get_or_init(|| {
            BandedCholesky::factor(&self.riesz_y.assemble(mu))
                .map(Arc::new)
                .map_err(|e| e.to_string())
        });
        out.clone().map_err(Error::Singular)
    }

    /// `R_Y(μ)⁻¹ w`.
    pub fn riesz_solve(&self, mu: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.test_dim() {
            return Err(Error::Shape(format!(
                "vector of length {} for test dimension {}",
                w.len(),
                self.test_dim()
            )));
        }
        let f = self.factor_at(mu)?;
        let x = f.solve(w);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite Riesz solve".into()));
        }
        Ok(x)
    }

    /// Column-wise `R_Y(μ)⁻¹ W`.
    pub fn riesz_solve_mat(&self, mu: f64, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let f = self.factor_at(mu)?;
        let mut out = DMatrix::zeros(w.nrows(), w.ncols());
        for j in 0..w.ncols() {
            out.set_column(j, &f.solve(&w.column(j).into_owned()));
        }
        Ok(out)
    }

    /// Number of cached test-Gramian factorizations.
    pub fn cached_factorizations(&self) -> usize {
        self.cache.len()
    }

    /// Trial Gramian of the configured `X̂` norm at `μ` (dense, truth size).
    ///
    /// Intended for diagnostics and tests only; the graph norm costs one
    /// Riesz solve per trial dof.
    pub fn xhat_dense(&self, mu: f64) -> Result<DMatrix<f64>> {
        match &self.xhat {
            XhatNorm::Fixed(m) => Ok(m.to_dense()),
            XhatNorm::Graph => {
                let b = self.operator_at(mu)?.to_dense();
                let w = self.riesz_solve_mat(mu, &b)?;
                let mut g = b.transpose() * w;
                if let Some(h) = &self.penalty {
                    g += h.to_dense();
                }
                Ok((&g + g.transpose()) * 0.5)
            }
        }
    }

    /// `‖q‖²_{X̂_μ}` for a truth trial vector.
    pub fn xhat_norm_sq(&self, mu: f64, q: &DVector<f64>) -> Result<f64> {
        match &self.xhat {
            XhatNorm::Fixed(m) => Ok(m.bilinear(q, q)),
            XhatNorm::Graph => {
                let bq = self.operator_at(mu)?.mul_vec(q);
                let v = self.riesz_solve(mu, &bq)?;
                let pen = self.penalty.as_ref().map_or(0.0, |h| h.bilinear(q, q));
                Ok(bq.dot(&v) + pen)
            }
        }
    }

    /// `‖P_{Y_𝒩} R_Y⁻¹ B_μ q‖_Y / ‖q‖_{L2}`, the measured isometry ratio.
    pub fn isometry_ratio(&self, mu: f64, q: &DVector<f64>) -> Result<f64> {
        let bq = self.operator_at(mu)?.mul_vec(q);
        let v = self.riesz_solve(mu, &bq)?;
        let den = self.trial_mass.bilinear(q, q);
        if den <= 0.0 {
            return Err(Error::Argument("zero trial vector".into()));
        }
        Ok((bq.dot(&v).max(0.0) / den).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{cover_pieces, ParameterDomain};
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn piece(lo: f64, hi: f64, n: usize) -> CoverPiece {
        cover_pieces(&ParameterDomain::equidistant(lo, hi, n).unwrap())
            .unwrap()
            .remove(0)
    }

    #[test]
    fn cd_component_counts() {
        let p = piece(0.2, 1.2, 5);
        let prob = build_cd_problem(
            &CdParams {
                trial_level: 3,
                test_level: 4,
                ..Default::default()
            },
            &p,
        )
        .unwrap();
        assert_eq!(prob.operator.len(), 4);
        assert_eq!(prob.operator.varying_count(&p.samples), 2);
        assert!(prob.riesz_is_constant());
    }

    #[test]
    fn cd_rejects_bad_parameters() {
        let p = piece(0.2, 1.2, 5);
        let bad_eps = CdParams {
            epsilon: -1.0,
            ..Default::default()
        };
        assert!(
            matches!(build_cd_problem(&bad_eps, &p), Err(Error::Config { field, .. }) if field == "epsilon")
        );
        let bad_omega = CdParams {
            omega: 0.0,
            ..Default::default()
        };
        assert!(
            matches!(build_cd_problem(&bad_omega, &p), Err(Error::Config { field, .. }) if field == "omega")
        );
    }

    #[test]
    fn transport_requires_outflow_constraints() {
        let mut p = piece(0.2, 1.2, 5);
        p.outflow = EdgeSet::NONE;
        assert!(build_transport_problem(&TransportParams::default(), &p)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn transport_operator_at_half_pi() {
        let p = piece(0.2, FRAC_PI_2, 5);
        let prob = build_transport_problem(&TransportParams::default(), &p).unwrap();
        let b = prob.operator_at(FRAC_PI_2).unwrap();
        let expected = CsrMatrix::linear_combination(
            &[1.0, 1.0],
            &[&prob.operator.components[1], &prob.operator.components[2]],
        )
        .unwrap();
        let diff = CsrMatrix::linear_combination(&[1.0, -1.0], &[&b, &expected]).unwrap();
        assert!(diff.max_abs() < 1e-15);
    }

    #[test]
    fn domain_is_enforced() {
        let p = piece(0.2, 1.2, 5);
        let prob = build_transport_problem(&TransportParams::default(), &p).unwrap();
        assert!(matches!(prob.operator_at(2.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn riesz_solve_of_zero() {
        let p = piece(0.2, 1.2, 5);
        let prob = build_transport_problem(&TransportParams::default(), &p).unwrap();
        let z = DVector::zeros(prob.test_dim());
        assert_eq!(prob.riesz_solve(0.7, &z).unwrap().amax(), 0.0);
        assert_eq!(prob.cached_factorizations(), 1);
        prob.riesz_solve(0.7, &z).unwrap();
        assert_eq!(prob.cached_factorizations(), 1);
    }

    #[test]
    fn transport_truth_pair_is_square() {
        for level in 1..=3 {
            let p = piece(0.2, 1.2, 3);
            let prob = build_transport_problem(
                &TransportParams {
                    trial_level: level,
                    test_level: level + 1,
                    ..Default::default()
                },
                &p,
            )
            .unwrap();
            assert_eq!(prob.trial_dim(), prob.test_dim());
        }
    }
}
