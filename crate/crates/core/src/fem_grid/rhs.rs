use nalgebra::DVector;

use super::assemble::edge_point;
use super::{EdgeSet, FESpace};
use crate::error::{Error, Result};

/// Piecewise constant source terms with grid- or diagonal-aligned jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Constant(f64),
    /// `upper` where `x < y`, `lower` where `x ≥ y`.
    DiagonalJump {
        upper: f64,
        lower: f64,
    },
    /// `left` where `x < at`, `right` where `x ≥ at`; `at` must be a grid line.
    StepX {
        at: f64,
        left: f64,
        right: f64,
    },
}

/// Boundary data `p_b` for the inflow functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryData {
    Zero,
    /// `1 - y` for `x ≤ 1/2`, zero for `x > 1/2`.
    JumpAtHalf,
}

impl BoundaryData {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::JumpAtHalf => {
                if x <= 0.5 {
                    1.0 - y
                } else {
                    0.0
                }
            }
        }
    }

    /// Evaluation on the segment side selected by `s ∈ (0,1)`; avoids
    /// sampling exactly at a jump.
    fn eval_interior(&self, x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> f64 {
        let mx = 0.5 * (x0 + x1);
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::JumpAtHalf => {
                let y = y0 + s * (y1 - y0);
                if mx <= 0.5 {
                    1.0 - y
                } else {
                    0.0
                }
            }
        }
    }
}

/// Inflow functional `-∫_{edges} (n · w) p_b ψ ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inflow {
    pub edges: EdgeSet,
    pub data: BoundaryData,
    /// Direction weights `w`.
    pub weights: (f64, f64),
}

/// Symmetric degree-2 rule on the reference triangle (exact for quadratics).
const TRI3: [(f64, f64); 3] = [
    (1.0 / 6.0, 1.0 / 6.0),
    (2.0 / 3.0, 1.0 / 6.0),
    (1.0 / 6.0, 2.0 / 3.0),
];
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Load vector `⟨f, ψ_i⟩` plus an optional inflow functional.
pub fn assemble_rhs(
    test: &FESpace,
    source: Source,
    inflow: Option<Inflow>,
) -> Result<DVector<f64>> {
    let level = test.grid.level;
    let n = test.grid.n();
    let h = test.grid.h();
    if let Source::StepX { at, .. } = source {
        let k = at * n as f64;
        if (k - k.round()).abs() > 1e-12 || !(0.0..=1.0).contains(&at) {
            return Err(Error::Data(format!(
                "jump at x = {at} is not a grid line of level {level}"
            )));
        }
    }
    let mut full = DVector::zeros(test.nfull());
    let mut add = |fi: usize, fj: usize, x: f64, y: f64, w: f64| {
        for s in test.shapes_at(level, fi, fj, x, y) {
            full[s.full] += w * s.val;
        }
    };
    for cj in 0..n {
        for ci in 0..n {
            let (x0, y0) = (ci as f64 * h, cj as f64 * h);
            match source {
                Source::Constant(c) => {
                    if c != 0.0 {
                        for gy in GAUSS2 {
                            for gx in GAUSS2 {
                                add(ci, cj, x0 + gx * h, y0 + gy * h, 0.25 * h * h * c);
                            }
                        }
                    }
                }
                Source::StepX { at, left, right } => {
                    let c = if x0 + 0.5 * h < at { left } else { right };
                    for gy in GAUSS2 {
                        for gx in GAUSS2 {
                            add(ci, cj, x0 + gx * h, y0 + gy * h, 0.25 * h * h * c);
                        }
                    }
                }
                Source::DiagonalJump { upper, lower } => {
                    if ci == cj {
                        // Lower triangle (x ≥ y): vertices (x0,y0), (x0+h,y0), (x0+h,y0+h).
                        for &(a, b) in &TRI3 {
                            let x = x0 + h * (a + b);
                            let y = y0 + h * b;
                            add(ci, cj, x, y, h * h / 6.0 * lower);
                        }
                        // Upper triangle (x < y): vertices (x0,y0), (x0+h,y0+h), (x0,y0+h).
                        for &(a, b) in &TRI3 {
                            let x = x0 + h * a;
                            let y = y0 + h * (a + b);
                            add(ci, cj, x, y, h * h / 6.0 * upper);
                        }
                    } else {
                        let c = if ci > cj { lower } else { upper };
                        for gy in GAUSS2 {
                            for gx in GAUSS2 {
                                add(ci, cj, x0 + gx * h, y0 + gy * h, 0.25 * h * h * c);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(inf) = inflow {
        if inf.data != BoundaryData::Zero {
            for edge in inf.edges.edges() {
                let (nx, ny) = edge.normal();
                let nw = nx * inf.weights.0 + ny * inf.weights.1;
                if nw == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let (_, _, xa, ya) = edge_point(edge, n, k, 0.0);
                    let (_, _, xb, yb) = edge_point(edge, n, k, 1.0);
                    for g in GAUSS2 {
                        let (fi, fj, x, y) = edge_point(edge, n, k, g);
                        let pb = inf.data.eval_interior(xa, ya, xb, yb, g);
                        add(fi, fj, x, y, -0.5 * h * nw * pb);
                    }
                }
            }
        }
    }
    Ok(test.restrict(&full))
}
