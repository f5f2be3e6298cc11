use rayon::prelude::*;

use super::{Edge, FESpace, ShapeEval};
use crate::error::Result;
use crate::la_core::CsrMatrix;

/// Bilinear form assembled into a matrix with entries `⟨op φ_j, ψ_i⟩`
/// (row `i` in the test space, column `j` in the trial space).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    /// `⟨φ, ψ⟩`
    Mass,
    /// `⟨∇φ, ∇ψ⟩`
    Stiff,
    /// `⟨∂ₓφ, ψ⟩`
    ConvX,
    /// `⟨∂_yφ, ψ⟩`
    ConvY,
    /// `⟨φ, ∂ₓψ⟩`
    AdjConvX,
    /// `⟨φ, ∂_yψ⟩`
    AdjConvY,
    /// `⟨∂ₓφ, ∂ₓψ⟩`
    GradXX,
    /// `⟨∂_yφ, ∂_yψ⟩`
    GradYY,
    /// `⟨∂ₓφ, ∂_yψ⟩`
    GradXY,
    /// `⟨∂_yφ, ∂ₓψ⟩`
    GradYX,
    /// `∫_e φ ψ ds` over one boundary edge.
    EdgeMass(Edge),
}

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

fn integrand(kind: ComponentKind, phi: &ShapeEval, psi: &ShapeEval) -> f64 {
    match kind {
        ComponentKind::Mass | ComponentKind::EdgeMass(_) => phi.val * psi.val,
        ComponentKind::Stiff => phi.dx * psi.dx + phi.dy * psi.dy,
        ComponentKind::ConvX => phi.dx * psi.val,
        ComponentKind::ConvY => phi.dy * psi.val,
        ComponentKind::AdjConvX => phi.val * psi.dx,
        ComponentKind::AdjConvY => phi.val * psi.dy,
        ComponentKind::GradXX => phi.dx * psi.dx,
        ComponentKind::GradYY => phi.dy * psi.dy,
        ComponentKind::GradXY => phi.dx * psi.dy,
        ComponentKind::GradYX => phi.dy * psi.dx,
    }
}

/// Assembles one component on the finer of the two grids with 2×2 Gauss
/// points per fine cell (exact for all Q1×Q1 integrands).
pub fn assemble(trial: &FESpace, test: &FESpace, kind: ComponentKind) -> Result<CsrMatrix> {
    let fine = trial.grid.level.max(test.grid.level);
    let nf = 1usize << fine;
    let h = 1.0 / nf as f64;
    let rows: Vec<Vec<(usize, usize, f64)>> = match kind {
        ComponentKind::EdgeMass(edge) => vec![edge_mass(trial, test, edge, fine)],
        _ => (0..nf)
            .into_par_iter()
            .map(|fj| {
                let mut t = Vec::with_capacity(nf * 64);
                for fi in 0..nf {
                    let mut local = [[0.0; 4]; 4];
                    let mut ids = ([0usize; 4], [0usize; 4]);
                    for gy in GAUSS2 {
                        for gx in GAUSS2 {
                            let x = (fi as f64 + gx) * h;
                            let y = (fj as f64 + gy) * h;
                            let phis = trial.shapes_at(fine, fi, fj, x, y);
                            let psis = test.shapes_at(fine, fi, fj, x, y);
                            let w = 0.25 * h * h;
                            for (a, psi) in psis.iter().enumerate() {
                                ids.0[a] = psi.full;
                                for (b, phi) in phis.iter().enumerate() {
                                    ids.1[b] = phi.full;
                                    local[a][b] += w * integrand(kind, phi, psi);
                                }
                            }
                        }
                    }
                    for a in 0..4 {
                        let Some(r) = test.free_index(ids.0[a]) else {
                            continue;
                        };
                        for b in 0..4 {
                            let Some(c) = trial.free_index(ids.1[b]) else {
                                continue;
                            };
                            if local[a][b] != 0.0 {
                                t.push((r, c, local[a][b]));
                            }
                        }
                    }
                }
                t
            })
            .collect(),
    };
    let triplets: Vec<_> = rows.into_iter().flatten().collect();
    Ok(CsrMatrix::from_triplets(
        test.ndofs(),
        trial.ndofs(),
        &triplets,
    ))
}

/// Fine-cell index and physical point along `edge` at arclength fraction `s` of segment `k`.
pub(crate) fn edge_point(edge: Edge, nf: usize, k: usize, s: f64) -> (usize, usize, f64, f64) {
    let h = 1.0 / nf as f64;
    let t = (k as f64 + s) * h;
    match edge {
        Edge::Bottom => (k, 0, t, 0.0),
        Edge::Top => (k, nf - 1, t, 1.0),
        Edge::Left => (0, k, 0.0, t),
        Edge::Right => (nf - 1, k, 1.0, t),
    }
}

fn edge_mass(trial: &FESpace, test: &FESpace, edge: Edge, fine: u32) -> Vec<(usize, usize, f64)> {
    let nf = 1usize << fine;
    let h = 1.0 / nf as f64;
    let mut t = Vec::new();
    for k in 0..nf {
        for g in GAUSS2 {
            let (fi, fj, x, y) = edge_point(edge, nf, k, g);
            let phis = trial.shapes_at(fine, fi, fj, x, y);
            let psis = test.shapes_at(fine, fi, fj, x, y);
            for psi in &psis {
                let Some(r) = test.free_index(psi.full) else {
                    continue;
                };
                for phi in &phis {
                    let Some(c) = trial.free_index(phi.full) else {
                        continue;
                    };
                    let v = 0.5 * h * phi.val * psi.val;
                    if v != 0.0 {
                        t.push((r, c, v));
                    }
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::super::{build_space, Continuity, EdgeSet};
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn mass_sums_to_area() {
        let x = build_space(2, Continuity::Discontinuous, EdgeSet::NONE).unwrap();
        let y = build_space(3, Continuity::Continuous, EdgeSet::NONE).unwrap();
        let m = assemble(&x, &y, ComponentKind::Mass).unwrap();
        let total: f64 = m.triplets().iter().map(|t| t.2).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_kills_constants() {
        let s = build_space(3, Continuity::Continuous, EdgeSet::NONE).unwrap();
        let k = assemble(&s, &s, ComponentKind::Stiff).unwrap();
        let r = k.mul_vec(&DVector::from_element(s.ndofs(), 1.0));
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn edge_mass_has_unit_length() {
        let s = build_space(2, Continuity::Continuous, EdgeSet::NONE).unwrap();
        let e = assemble(&s, &s, ComponentKind::EdgeMass(Edge::Top)).unwrap();
        let one = DVector::from_element(s.ndofs(), 1.0);
        assert!((e.bilinear(&one, &one) - 1.0).abs() < 1e-14);
    }
}
