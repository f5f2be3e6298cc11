//! Affine parametric problems on the unit square.
//!
//! - coefficient maps `Θ(μ)` and affine operators `Σ Θ_k(μ) B_k`,
//! - the parameter interval with its inflow/outflow cover,
//! - truth discretizations of convection-diffusion (weak outflow penalty) and
//!   pure transport, each built for one cover piece,
//! - cached Riesz solves for the test-space inner product.
//!
//! The convection direction is `b(μ) = (cos μ, sin μ)`. Per-μ factorizations
//! of the transport test Gramian are the dominant offline cost; they are kept
//! in an LRU cache sized to the sample set.

mod affine;
mod problem;

pub use affine::{AffineOperator, AffineVector, ThetaMap};
pub use problem::{
    build_cd_problem, build_transport_problem, CdParams, CustomParts, PenaltyNorm, ProblemKind,
    TransportParams, TruthDiscretization, XhatNorm,
};

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::fem_grid::{Edge, EdgeSet};

/// Tolerance used when testing membership of a parameter in an interval.
const MU_TOL: f64 = 1e-12;

/// Parameter interval with an equidistant training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    pub lo: f64,
    pub hi: f64,
    /// Training sample `𝒮`, ascending.
    pub samples: Vec<f64>,
}

impl ParameterDomain {
    /// `count` equidistant points including both endpoints.
    pub fn equidistant(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::config(
                "parameter_interval",
                format!("[{lo}, {hi}] is empty"),
            ));
        }
        if count < 2 {
            return Err(Error::config("sample_count", format!("{count} < 2")));
        }
        let samples = (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect();
        Ok(ParameterDomain { lo, hi, samples })
    }

    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.lo - MU_TOL && mu <= self.hi + MU_TOL
    }
}

/// A sub-interval on which inflow and outflow edges do not change.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverPiece {
    pub lo: f64,
    pub hi: f64,
    /// Edges with `n · b(μ) ≤ 0`.
    pub inflow: EdgeSet,
    /// Edges with `n · b(μ) ≥ 0`.
    pub outflow: EdgeSet,
    /// Training parameters falling into this piece.
    pub samples: Vec<f64>,
}

impl CoverPiece {
    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.lo - MU_TOL && mu <= self.hi + MU_TOL
    }

    pub fn check(&self, mu: f64) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::Domain {
                mu,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// A piece covering `[lo, hi]` for a problem without inflow structure.
    pub fn whole(domain: &ParameterDomain) -> Self {
        CoverPiece {
            lo: domain.lo,
            hi: domain.hi,
            inflow: EdgeSet::NONE,
            outflow: EdgeSet::NONE,
            samples: domain.samples.clone(),
        }
    }
}

/// Splits the domain at `π/2`; the split point belongs to the left piece.
pub fn cover_pieces(domain: &ParameterDomain) -> Result<Vec<CoverPiece>> {
    if domain.lo <= 0.0 || domain.hi >= PI {
        return Err(Error::config(
            "parameter_interval",
            format!(
                "[{}, {}] must lie strictly inside (0, pi)",
                domain.lo, domain.hi
            ),
        ));
    }
    let mut pieces = Vec::new();
    if domain.lo <= FRAC_PI_2 {
        pieces.push(CoverPiece {
            lo: domain.lo,
            hi: domain.hi.min(FRAC_PI_2),
            inflow: EdgeSet::of(&[Edge::Bottom, Edge::Left]),
            outflow: EdgeSet::of(&[Edge::Top, Edge::Right]),
            samples: domain
                .samples
                .iter()
                .copied()
                .filter(|&m| m <= FRAC_PI_2)
                .collect(),
        });
    }
    if domain.hi > FRAC_PI_2 {
        pieces.push(CoverPiece {
            lo: domain.lo.max(FRAC_PI_2),
            hi: domain.hi,
            inflow: EdgeSet::of(&[Edge::Bottom, Edge::Right]),
            outflow: EdgeSet::of(&[Edge::Top, Edge::Left]),
            samples: domain
                .samples
                .iter()
                .copied()
                .filter(|&m| m > FRAC_PI_2)
                .collect(),
        });
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece_of(pieces: &[CoverPiece], mu: f64) -> &CoverPiece {
        pieces.iter().find(|p| p.samples.contains(&mu)).unwrap()
    }

    #[test]
    fn inflow_edges_follow_the_direction() {
        let d = ParameterDomain {
            lo: 0.2,
            hi: PI - 0.2,
            samples: vec![0.3, 2.8],
        };
        let pieces = cover_pieces(&d).unwrap();
        assert_eq!(pieces.len(), 2);
        assert_eq!(
            piece_of(&pieces, 0.3).inflow,
            EdgeSet::of(&[Edge::Bottom, Edge::Left])
        );
        assert_eq!(
            piece_of(&pieces, 2.8).inflow,
            EdgeSet::of(&[Edge::Bottom, Edge::Right])
        );
    }

    #[test]
    fn edge_sets_satisfy_sign_conditions() {
        let d = ParameterDomain::equidistant(0.2, PI - 0.2, 41).unwrap();
        for p in cover_pieces(&d).unwrap() {
            for &mu in &p.samples {
                let b = (mu.cos(), mu.sin());
                for e in Edge::ALL {
                    let (nx, ny) = e.normal();
                    let nb = nx * b.0 + ny * b.1;
                    assert_eq!(
                        p.inflow.contains(e),
                        nb < 0.0 || (nb == 0.0 && p.inflow.contains(e))
                    );
                    assert!(!p.outflow.contains(e) || nb >= -1e-15);
                }
                assert_eq!(p.inflow.complement(), p.outflow);
            }
        }
    }

    #[test]
    fn samples_partitioned() {
        let d = ParameterDomain::equidistant(0.2, PI - 0.2, 101).unwrap();
        let pieces = cover_pieces(&d).unwrap();
        let total: usize = pieces.iter().map(|p| p.samples.len()).sum();
        assert_eq!(total, 101);
        assert!(pieces[0].samples.contains(&FRAC_PI_2) || !d.samples.contains(&FRAC_PI_2));
    }

    #[test]
    fn degenerate_domains_rejected() {
        let d = ParameterDomain::equidistant(0.0, 1.0, 5).unwrap();
        assert!(cover_pieces(&d).unwrap_err().is_config());
        assert!(ParameterDomain::equidistant(1.0, 1.0, 5)
            .unwrap_err()
            .is_config());
        assert!(ParameterDomain::equidistant(0.2, 1.0, 1)
            .unwrap_err()
            .is_config());
    }
}
