use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// How an [`SpdFactor`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    #[default]
    Cholesky,
    Spectral,
}

/// Factor `L` with `A = LᵀL`.
///
/// For [`FactorKind::Cholesky`] `L` is lower triangular with a positive
/// diagonal; for [`FactorKind::Spectral`] `L = Λ^{1/2} Vᵀ` with the
/// eigenvectors of `A` in the columns of `V`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    /// The factor `L`.
    pub factor: DMatrix<f64>,
    /// Construction route.
    pub kind: FactorKind,
}

/// Smallest singular value together with its right singular vector.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    /// Smallest singular value (nonnegative).
    pub sigma_min: f64,
    /// Unit right singular vector, sign-normalized.
    pub right_vector: DVector<f64>,
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
}

/// Flips `v` so that its entry of largest magnitude (first one on ties) is positive.
pub fn normalize_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Cholesky factorization `A = LᵀL` with `L` lower triangular.
pub fn cholesky_spd(a: &DMatrix<f64>) -> Result<SpdFactor> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Shape(format!(
            "{}x{} is not a nonempty square matrix",
            n,
            a.ncols()
        )));
    }
    let tol = 1e-12 * a.norm();
    let mut l = DMatrix::<f64>::zeros(n, n);
    // Work from the trailing corner: (LᵀL)_{ij} = Σ_{k ≥ max(i,j)} L_{ki} L_{kj}.
    for i in (0..n).rev() {
        let mut d = a[(i, i)];
        for k in i + 1..n {
            d -= l[(k, i)] * l[(k, i)];
        }
        if d <= tol {
            return Err(Error::NotSpd { row: i, pivot: d });
        }
        let lii = d.sqrt();
        l[(i, i)] = lii;
        for j in 0..i {
            let mut s = a[(i, j)];
            for k in i + 1..n {
                s -= l[(k, i)] * l[(k, j)];
            }
            l[(i, j)] = s / lii;
        }
    }
    Ok(SpdFactor {
        factor: l,
        kind: FactorKind::Cholesky,
    })
}

/// Symmetric eigen-decomposition with eigenvalues sorted descending.
pub fn spectral_spd(a: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(
            "spectral decomposition needs a square matrix".into(),
        ));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("symmetric eigen-iteration did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let eigenvalues = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        normalize_sign(&mut v);
        eigenvectors.set_column(c, &v);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

impl SpdFactor {
    /// Spectral factor `L = Λ^{1/2} Vᵀ`; fails if an eigenvalue is not positive.
    pub fn spectral(a: &DMatrix<f64>) -> Result<Self> {
        let sd = spectral_spd(a)?;
        let n = a.nrows();
        let tol = 1e-12 * a.norm();
        let mut factor = sd.eigenvectors.transpose();
        for i in 0..n {
            let lam = sd.eigenvalues[i];
            if lam <= tol {
                return Err(Error::NotSpd { row: i, pivot: lam });
            }
            factor.row_mut(i).scale_mut(lam.sqrt());
        }
        Ok(SpdFactor {
            factor,
            kind: FactorKind::Spectral,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.factor.transpose() * &self.factor
    }

    /// `L⁻ᵀ B`.
    pub fn inv_t_mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self.kind {
            FactorKind::Cholesky => {
                let lt = self.factor.transpose();
                lt.solve_upper_triangular(b).expect("positive diagonal")
            }
            FactorKind::Spectral => {
                // L⁻ᵀ = Λ^{-1/2} Vᵀ with L = Λ^{1/2} Vᵀ.
                let mut out = &self.factor * b;
                for i in 0..out.nrows() {
                    let s = self.factor.row(i).norm_squared();
                    out.row_mut(i).scale_mut(1.0 / s);
                }
                out
            }
        }
    }

    /// `L⁻¹ B`.
    pub fn inv_mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self.kind {
            FactorKind::Cholesky => self
                .factor
                .solve_lower_triangular(b)
                .expect("positive diagonal"),
            FactorKind::Spectral => {
                // L⁻¹ = V Λ^{-1/2} = Lᵀ Λ^{-1}.
                let mut scaled = b.clone();
                for i in 0..scaled.nrows() {
                    let s = self.factor.row(i).norm_squared();
                    scaled.row_mut(i).scale_mut(1.0 / s);
                }
                self.factor.transpose() * scaled
            }
        }
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        let y = self.inv_t_mul(&m);
        self.inv_mul(&y).column(0).into_owned()
    }

    /// `A⁻¹ B` for a block of right-hand sides.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.inv_mul(&self.inv_t_mul(b))
    }
}

/// Smallest singular value and right singular vector of a tall matrix `D`.
///
/// Computed from the symmetric eigenproblem of `DᵀD`.
pub fn min_singular(d: &DMatrix<f64>) -> Result<SingularTriplet> {
    let (m, n) = d.shape();
    if n == 0 || m < n {
        return Err(Error::Shape(format!(
            "min_singular needs m >= n >= 1, got {m}x{n}"
        )));
    }
    let dtd = d.transpose() * d;
    let sd = spectral_spd(&dtd)?;
    let lam = sd.eigenvalues[n - 1].max(0.0);
    let mut v = sd.eigenvectors.column(n - 1).into_owned();
    v /= v.norm();
    normalize_sign(&mut v);
    Ok(SingularTriplet {
        sigma_min: lam.sqrt(),
        right_vector: v,
    })
}

/// Largest generalized eigenpair of `A x = λ M x` with `M` SPD.
///
/// The eigenvector is returned `M`-normalized and sign-normalized.
pub fn max_generalized_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let lf = cholesky_spd(m)?;
    // C = L⁻ᵀ A L⁻¹ has the same spectrum.
    let c = lf.inv_t_mul(&lf.inv_t_mul(a).transpose()).transpose();
    let c = (&c + c.transpose()) * 0.5;
    let sd = spectral_spd(&c)?;
    let y = DMatrix::from_column_slice(c.nrows(), 1, sd.eigenvectors.column(0).as_slice());
    let mut x = lf.inv_mul(&y).column(0).into_owned();
    let nrm = (x.transpose() * m * &x)[(0, 0)].sqrt();
    x /= nrm;
    normalize_sign(&mut x);
    Ok((sd.eigenvalues[0], x))
}

/// Eigenvalues within this (relative) distance of the extreme one span a
/// single cluster in the `*_space` variants.
pub const CLUSTER_TOL: f64 = 1e-10;

fn cluster_width(extreme: f64, tol: f64) -> f64 {
    tol * extreme.abs().max(1.0)
}

/// Smallest singular value of `D` and an orthonormal basis of the right
/// singular vectors whose squared singular values lie within `tol` of the
/// smallest one.
pub fn min_singular_space(d: &DMatrix<f64>, tol: f64) -> Result<(f64, DMatrix<f64>)> {
    let (m, n) = d.shape();
    if n == 0 || m < n {
        return Err(Error::Shape(format!(
            "min_singular_space needs m >= n >= 1, got {m}x{n}"
        )));
    }
    let sd = spectral_spd(&(d.transpose() * d))?;
    let lam = sd.eigenvalues[n - 1];
    let width = cluster_width(lam, tol);
    let first = (0..n)
        .find(|&i| sd.eigenvalues[i] <= lam + width)
        .unwrap_or(n - 1);
    Ok((
        lam.max(0.0).sqrt(),
        sd.eigenvectors.columns(first, n - first).into_owned(),
    ))
}

/// Largest eigenvalue of `A x = λ M x` and an `M`-orthonormal basis of the
/// eigenvectors whose eigenvalues lie within `tol` of it.
pub fn max_generalized_eigenspace(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    tol: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let lf = cholesky_spd(m)?;
    let c = lf.inv_t_mul(&lf.inv_t_mul(a).transpose()).transpose();
    let c = (&c + c.transpose()) * 0.5;
    let sd = spectral_spd(&c)?;
    let lam = sd.eigenvalues[0];
    let width = cluster_width(lam, tol);
    let count = (0..c.nrows())
        .take_while(|&i| sd.eigenvalues[i] >= lam - width)
        .count();
    Ok((
        lam,
        lf.inv_mul(&sd.eigenvectors.columns(0, count).into_owned()),
    ))
}

/// A representative of the span of the `M`-orthonormal columns of `basis`
/// that does not depend on the choice of basis.
///
/// Takes the `M`-projection of the first coordinate axis that is (up to a
/// relative `1e-6`) closest to the span, `M`-normalizes it and applies the
/// sign convention. For a one-dimensional span this is the sign-normalized
/// column itself.
pub fn canonical_direction(basis: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let qm = basis.transpose() * m;
    let n = m.nrows();
    let score = |j: usize| qm.column(j).norm_squared() / m[(j, j)].max(f64::MIN_POSITIVE);
    let best = (0..n).map(score).fold(0.0, f64::max);
    let j = (0..n)
        .find(|&j| score(j) >= best * (1.0 - 1e-6))
        .unwrap_or(0);
    let c = qm.column(j).into_owned();
    let mut q = basis * &c / c.norm();
    normalize_sign(&mut q);
    q
}

/// Anything that can act as a Gramian on coefficient vectors.
pub trait Gramian {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl Gramian for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

impl Gramian for super::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.mul_vec(v)
    }
}

/// Orthonormalizes `v` against the `G`-orthonormal columns of `basis`.
///
/// Two passes of modified Gram–Schmidt; rejects vectors whose residual
/// `G`-norm drops below `1e-10` of the input norm.
pub fn gram_schmidt_in<G: Gramian + ?Sized>(
    g: &G,
    basis: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if v.len() != g.dim() || (basis.ncols() > 0 && basis.nrows() != g.dim()) {
        return Err(Error::Shape(
            "Gram–Schmidt operands disagree in length".into(),
        ));
    }
    let input = v.dot(&g.apply(v)).max(0.0).sqrt();
    if input == 0.0 {
        return Err(Error::LinearlyDependent);
    }
    let mut w = v.clone();
    for _pass in 0..2 {
        for j in 0..basis.ncols() {
            let b = basis.column(j);
            let gw = g.apply(&w);
            let c = b.dot(&gw);
            w.axpy(-c, &b, 1.0);
        }
    }
    let nrm = w.dot(&g.apply(&w)).max(0.0).sqrt();
    if nrm < 1e-10 * input {
        return Err(Error::LinearlyDependent);
    }
    Ok(w / nrm)
}

/// `G`-orthogonal projection residual of `v` against an arbitrary basis,
/// normalized; uses the Gram system of `basis` so no orthonormality is assumed.
pub fn orthonormalize_against<G: Gramian + ?Sized>(
    g: &G,
    basis: &DMatrix<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let input = v.dot(&g.apply(v)).max(0.0).sqrt();
    if input == 0.0 {
        return Err(Error::LinearlyDependent);
    }
    let mut w = v.clone();
    if basis.ncols() > 0 {
        let mut gb = DMatrix::zeros(basis.nrows(), basis.ncols());
        for j in 0..basis.ncols() {
            gb.set_column(j, &g.apply(&basis.column(j).into_owned()));
        }
        let gram = basis.transpose() * &gb;
        let gram = (&gram + gram.transpose()) * 0.5;
        let f = cholesky_spd(&gram)?;
        for _pass in 0..2 {
            let c = f.solve(&(gb.transpose() * &w));
            w -= basis * c;
        }
    }
    let nrm = w.dot(&g.apply(&w)).max(0.0).sqrt();
    if nrm < 1e-10 * input {
        return Err(Error::LinearlyDependent);
    }
    Ok(w / nrm)
}
