//! Uniform grids on the unit square with bilinear (Q1) elements.
//!
//! Continuous spaces number one dof per vertex, discontinuous spaces four dofs
//! per cell. Strongly constrained boundary dofs are removed from the free
//! index set; [`FESpace::prolong`] maps free vectors back to full vectors.

mod assemble;
mod rhs;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use assemble::{assemble, ComponentKind};
pub use rhs::{assemble_rhs, BoundaryData, Inflow, Source};

use crate::error::{Error, Result};

/// One side of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    /// Outward unit normal.
    pub fn normal(self) -> (f64, f64) {
        match self {
            Edge::Left => (-1.0, 0.0),
            Edge::Right => (1.0, 0.0),
            Edge::Bottom => (0.0, -1.0),
            Edge::Top => (0.0, 1.0),
        }
    }

    fn bit(self) -> u8 {
        match self {
            Edge::Left => 1,
            Edge::Right => 2,
            Edge::Bottom => 4,
            Edge::Top => 8,
        }
    }
}

/// A subset of the four boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EdgeSet(u8);

impl EdgeSet {
    pub const NONE: EdgeSet = EdgeSet(0);
    pub const ALL: EdgeSet = EdgeSet(15);

    pub fn of(edges: &[Edge]) -> Self {
        EdgeSet(edges.iter().fold(0, |b, e| b | e.bit()))
    }

    pub fn contains(self, e: Edge) -> bool {
        self.0 & e.bit() != 0
    }

    pub fn complement(self) -> Self {
        EdgeSet(!self.0 & 15)
    }

    pub fn edges(self) -> Vec<Edge> {
        Edge::ALL
            .into_iter()
            .filter(|&e| self.contains(e))
            .collect()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Uniform grid of `4^level` square cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    /// Refinement level.
    pub level: u32,
}

impl Grid {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 || level > 12 {
            return Err(Error::config("level", format!("{level} not in 1..=12")));
        }
        Ok(Grid { level })
    }

    /// Cells per side.
    pub fn n(&self) -> usize {
        1 << self.level
    }

    /// Mesh width `2^-level`.
    pub fn h(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn cells(&self) -> usize {
        self.n() * self.n()
    }

    pub fn vertices(&self) -> usize {
        (self.n() + 1) * (self.n() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Continuous,
    Discontinuous,
}

/// Bilinear finite element space with eliminated Dirichlet dofs.
#[derive(Debug, Clone)]
pub struct FESpace {
    /// Underlying grid.
    pub grid: Grid,
    /// Inter-element continuity.
    pub continuity: Continuity,
    /// Edges carrying strong zero constraints (continuous spaces only).
    pub dirichlet_edges: EdgeSet,
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

/// Builds a Q1 space; constraints are ignored for discontinuous spaces.
pub fn build_space(
    level: u32,
    continuity: Continuity,
    dirichlet_edges: EdgeSet,
) -> Result<FESpace> {
    let grid = Grid::new(level)?;
    let n = grid.n();
    let (n_full, constrained): (usize, Box<dyn Fn(usize) -> bool>) = match continuity {
        Continuity::Continuous => (
            grid.vertices(),
            Box::new(move |v| {
                let (i, j) = (v % (n + 1), v / (n + 1));
                (i == 0 && dirichlet_edges.contains(Edge::Left))
                    || (i == n && dirichlet_edges.contains(Edge::Right))
                    || (j == 0 && dirichlet_edges.contains(Edge::Bottom))
                    || (j == n && dirichlet_edges.contains(Edge::Top))
            }),
        ),
        Continuity::Discontinuous => (4 * grid.cells(), Box::new(|_| false)),
    };
    let mut full_to_free = vec![None; n_full];
    let mut free_to_full = Vec::new();
    for (v, slot) in full_to_free.iter_mut().enumerate() {
        if !constrained(v) {
            *slot = Some(free_to_full.len());
            free_to_full.push(v);
        }
    }
    let dirichlet_edges = match continuity {
        Continuity::Continuous => dirichlet_edges,
        Continuity::Discontinuous => EdgeSet::NONE,
    };
    Ok(FESpace {
        grid,
        continuity,
        dirichlet_edges,
        full_to_free,
        free_to_full,
    })
}

/// Local node order within a cell: (0,0), (1,0), (0,1), (1,1).
const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Value and gradient of one shape function at a point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShapeEval {
    pub full: usize,
    pub val: f64,
    pub dx: f64,
    pub dy: f64,
}

impl FESpace {
    /// Number of free dofs.
    pub fn ndofs(&self) -> usize {
        self.free_to_full.len()
    }

    /// Number of dofs before elimination.
    pub fn nfull(&self) -> usize {
        self.full_to_free.len()
    }

    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.full_to_free[full]
    }

    pub fn full_index(&self, free: usize) -> usize {
        self.free_to_full[free]
    }

    /// Extends a free coefficient vector by zeros on constrained dofs.
    pub fn prolong(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.nfull());
        for (k, &f) in self.free_to_full.iter().enumerate() {
            full[f] = free[k];
        }
        full
    }

    /// Drops the constrained entries of a full vector.
    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.ndofs(), self.free_to_full.iter().map(|&f| full[f]))
    }

    /// Full dof of local node `a` in cell `(ci, cj)`.
    fn local_dof(&self, ci: usize, cj: usize, a: usize) -> usize {
        let n = self.grid.n();
        match self.continuity {
            Continuity::Continuous => {
                let (di, dj) = LOCAL[a];
                (cj + dj) * (n + 1) + ci + di
            }
            Continuity::Discontinuous => 4 * (cj * n + ci) + a,
        }
    }

    /// Shape functions of the cell containing `(x, y)`, where the point lies in
    /// cell `(fi, fj)` of the grid at `fine_level ≥ level`.
    pub(crate) fn shapes_at(
        &self,
        fine_level: u32,
        fi: usize,
        fj: usize,
        x: f64,
        y: f64,
    ) -> [ShapeEval; 4] {
        let shift = fine_level - self.grid.level;
        let (ci, cj) = (fi >> shift, fj >> shift);
        let h = self.grid.h();
        let xi = (x - ci as f64 * h) / h;
        let eta = (y - cj as f64 * h) / h;
        let mut out = [ShapeEval {
            full: 0,
            val: 0.0,
            dx: 0.0,
            dy: 0.0,
        }; 4];
        for (a, &(di, dj)) in LOCAL.iter().enumerate() {
            let (fx, gx) = if di == 0 { (1.0 - xi, -1.0) } else { (xi, 1.0) };
            let (fy, gy) = if dj == 0 {
                (1.0 - eta, -1.0)
            } else {
                (eta, 1.0)
            };
            out[a] = ShapeEval {
                full: self.local_dof(ci, cj, a),
                val: fx * fy,
                dx: gx * fy / h,
                dy: fx * gy / h,
            };
        }
        out
    }

    /// Nodal interpolant of `f` as a free coefficient vector.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let n = self.grid.n();
        let h = self.grid.h();
        let mut full = DVector::zeros(self.nfull());
        match self.continuity {
            Continuity::Continuous => {
                for j in 0..=n {
                    for i in 0..=n {
                        full[j * (n + 1) + i] = f(i as f64 * h, j as f64 * h);
                    }
                }
            }
            Continuity::Discontinuous => {
                for cj in 0..n {
                    for ci in 0..n {
                        for (a, &(di, dj)) in LOCAL.iter().enumerate() {
                            full[4 * (cj * n + ci) + a] =
                                f((ci + di) as f64 * h, (cj + dj) as f64 * h);
                        }
                    }
                }
            }
        }
        self.restrict(&full)
    }

    /// Evaluates a free coefficient vector at a point of the closed square.
    pub fn evaluate(&self, coeffs: &DVector<f64>, x: f64, y: f64) -> f64 {
        let n = self.grid.n();
        let ci = ((x * n as f64).floor() as usize).min(n - 1);
        let cj = ((y * n as f64).floor() as usize).min(n - 1);
        self.shapes_at(self.grid.level, ci, cj, x, y)
            .iter()
            .filter_map(|s| self.free_index(s.full).map(|k| coeffs[k] * s.val))
            .sum()
    }
}

/// `L2` distance between two coefficient vectors of the same space.
pub fn l2_distance(space: &FESpace, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != space.ndofs() || b.len() != space.ndofs() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {} for a space with {} dofs",
            a.len(),
            b.len(),
            space.ndofs()
        )));
    }
    let m = assemble(space, space, ComponentKind::Mass)?;
    let d = a - b;
    Ok(m.bilinear(&d, &d).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_one_dof_counts() {
        assert_eq!(
            build_space(1, Continuity::Continuous, EdgeSet::NONE)
                .unwrap()
                .ndofs(),
            9
        );
        assert_eq!(
            build_space(1, Continuity::Continuous, EdgeSet::ALL)
                .unwrap()
                .ndofs(),
            1
        );
        assert_eq!(
            build_space(1, Continuity::Discontinuous, EdgeSet::NONE)
                .unwrap()
                .ndofs(),
            16
        );
    }

    #[test]
    fn level_zero_is_rejected() {
        assert!(matches!(
            build_space(0, Continuity::Continuous, EdgeSet::NONE),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn grid_counts() {
        let g = Grid::new(3).unwrap();
        assert_eq!(g.cells(), 64);
        assert_eq!(g.vertices(), 81);
        assert_eq!(g.h(), 0.125);
    }

    #[test]
    fn prolong_restrict_round_trip() {
        let s = build_space(
            2,
            Continuity::Continuous,
            EdgeSet::of(&[Edge::Left, Edge::Top]),
        )
        .unwrap();
        let v = DVector::from_fn(s.ndofs(), |i, _| i as f64);
        assert_eq!(s.restrict(&s.prolong(&v)), v);
        assert_eq!(s.ndofs(), 25 - 9);
    }

    #[test]
    fn distance_of_constant_one() {
        let s = build_space(2, Continuity::Discontinuous, EdgeSet::NONE).unwrap();
        let one = DVector::from_element(s.ndofs(), 1.0);
        let zero = DVector::zeros(s.ndofs());
        assert!((l2_distance(&s, &one, &zero).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(l2_distance(&s, &one, &one).unwrap(), 0.0);
    }
}
