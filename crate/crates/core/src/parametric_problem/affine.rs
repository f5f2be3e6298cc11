use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::la_core::CsrMatrix;

type ThetaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficient functions `Θ_k(μ)` of an affine expansion.
#[derive(Clone)]
pub struct ThetaMap {
    names: Vec<String>,
    funcs: Vec<ThetaFn>,
}

impl fmt::Debug for ThetaMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThetaMap")
            .field("names", &self.names)
            .finish()
    }
}

impl ThetaMap {
    pub fn new() -> Self {
        ThetaMap {
            names: Vec::new(),
            funcs: Vec::new(),
        }
    }

    pub fn with(
        mut self,
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.names.push(name.into());
        self.funcs.push(Arc::new(f));
        self
    }

    pub fn constant() -> Self {
        ThetaMap::new().with("1", |_| 1.0)
    }

    /// `(cos μ, sin μ, 1)`.
    pub fn cos_sin_one() -> Self {
        ThetaMap::new()
            .with("cos", f64::cos)
            .with("sin", f64::sin)
            .with("1", |_| 1.0)
    }

    /// Symmetric products `Θ_k Θ_l`, `k ≤ l`, of this map with itself.
    pub fn quadratic(&self) -> Self {
        let mut out = ThetaMap::new();
        for k in 0..self.len() {
            for l in k..self.len() {
                let (a, b) = (self.funcs[k].clone(), self.funcs[l].clone());
                out = out.with(format!("{}*{}", self.names[k], self.names[l]), move |mu| {
                    a(mu) * b(mu)
                });
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn eval(&self, mu: f64) -> Vec<f64> {
        self.funcs.iter().map(|f| f(mu)).collect()
    }
}

impl Default for ThetaMap {
    fn default() -> Self {
        Self::new()
    }
}

/// `B(μ) = Σ_k Θ_k(μ) B_k` with parameter-independent sparse components.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    /// Components `B_k`, all of equal shape.
    pub components: Vec<CsrMatrix>,
    /// Coefficient functions, one per component.
    pub theta: ThetaMap,
}

impl AffineOperator {
    pub fn new(components: Vec<CsrMatrix>, theta: ThetaMap) -> Result<Self> {
        if components.is_empty() || components.len() != theta.len() {
            return Err(Error::Shape(format!(
                "{} components for {} coefficient functions",
                components.len(),
                theta.len()
            )));
        }
        let (r, c) = (components[0].nrows(), components[0].ncols());
        if components.iter().any(|m| m.nrows() != r || m.ncols() != c) {
            return Err(Error::Shape("affine components differ in shape".into()));
        }
        Ok(AffineOperator { components, theta })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.components[0].nrows()
    }

    pub fn ncols(&self) -> usize {
        self.components[0].ncols()
    }

    /// Assembled `Σ Θ_k(μ) B_k` (no domain check).
    pub fn assemble(&self, mu: f64) -> CsrMatrix {
        let w = self.theta.eval(mu);
        let refs: Vec<&CsrMatrix> = self.components.iter().collect();
        CsrMatrix::linear_combination(&w, &refs).expect("components validated at construction")
    }

    /// `B(μ) x` accumulated component by component.
    pub fn apply(&self, mu: f64, x: &DVector<f64>) -> DVector<f64> {
        let w = self.theta.eval(mu);
        let mut y = DVector::zeros(self.nrows());
        for (wk, bk) in w.iter().zip(&self.components) {
            if *wk != 0.0 {
                y.axpy(*wk, &bk.mul_vec(x), 1.0);
            }
        }
        y
    }

    /// Number of components whose coefficient is not constant on `samples`.
    pub fn varying_count(&self, samples: &[f64]) -> usize {
        let vals: Vec<Vec<f64>> = samples.iter().map(|&m| self.theta.eval(m)).collect();
        (0..self.len())
            .filter(|&k| vals.iter().any(|v| (v[k] - vals[0][k]).abs() > 1e-14))
            .count()
    }
}

/// `f(μ) = Σ_k Θ_k(μ) f_k`.
#[derive(Debug, Clone)]
pub struct AffineVector {
    pub components: Vec<DVector<f64>>,
    pub theta: ThetaMap,
}

impl AffineVector {
    pub fn new(components: Vec<DVector<f64>>, theta: ThetaMap) -> Result<Self> {
        if components.is_empty() || components.len() != theta.len() {
            return Err(Error::Shape(
                "affine vector components and coefficients disagree".into(),
            ));
        }
        Ok(AffineVector { components, theta })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].len()
    }

    pub fn assemble(&self, mu: f64) -> DVector<f64> {
        let w = self.theta.eval(mu);
        let mut y = DVector::zeros(self.dim());
        for (wk, fk) in w.iter().zip(&self.components) {
            y.axpy(*wk, fk, 1.0);
        }
        y
    }

    pub fn scaled(&self, s: f64) -> Self {
        AffineVector {
            components: self.components.iter().map(|c| c * s).collect(),
            theta: self.theta.clone(),
        }
    }
}
