//! Numerical kernels shared by every other module.
//!
//! - dense SPD factorizations (`A = LᵀL`, Cholesky or spectral),
//! - smallest singular triplets via the eigenproblem of `DᵀD`,
//! - Gramian-weighted Gram–Schmidt,
//! - sparse storage and banded direct solvers for truth-level systems.
//!
//! Singular and eigenvectors follow one sign convention: the entry of largest
//! magnitude is positive.

mod banded;
mod dense;
mod sparse;

use nalgebra::DVector;

pub use banded::{rcm_ordering, BandedCholesky, BandedLu};
pub use dense::{
    canonical_direction, cholesky_spd, gram_schmidt_in, max_generalized_eigen,
    max_generalized_eigenspace, min_singular, min_singular_space, normalize_sign,
    orthonormalize_against, spectral_spd, FactorKind, Gramian, SingularTriplet, SpdFactor,
    SpectralDecomposition, CLUSTER_TOL,
};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};

/// Relative residual threshold above which one refinement step is taken.
const REFINE_TOL: f64 = 1e-13;

/// Solves a sparse symmetric (possibly indefinite) system `K x = rhs`.
///
/// Uses a reordered banded LU with partial pivoting followed by one step of
/// iterative refinement when the residual is not already at round-off level.
pub fn solve_sym_indefinite(k: &CsrMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = BandedLu::factor(k)?;
    solve_refined(k, &lu, rhs)
}

/// Solve with an existing factorization plus one refinement step if needed.
pub fn solve_refined(k: &CsrMatrix, lu: &BandedLu, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != k.nrows() {
        return Err(Error::Shape(
            "right-hand side length differs from matrix size".into(),
        ));
    }
    let mut x = lu.solve(rhs);
    let knorm = k.frobenius_norm();
    let r = rhs - k.mul_vec(&x);
    if r.norm() > REFINE_TOL * (knorm * x.norm() + rhs.norm()) {
        x += lu.solve(&r);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let b = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let x = solve_sym_indefinite(&CsrMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn hand_elimination_example() {
        let k = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let x = solve_sym_indefinite(&k, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(x[0].abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let k =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        let r = solve_sym_indefinite(&k, &DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(r, Err(Error::Singular(_))));
    }
}
