//! Direct solvers for truth-level sparse systems.
//!
//! Both factorizations first apply a reverse Cuthill–McKee permutation and then
//! work on a dense band:
//! - [`BandedCholesky`] for SPD Riesz Gramians,
//! - [`BandedLu`] with partial pivoting for symmetric indefinite saddle systems.

use std::collections::VecDeque;

use nalgebra::DVector;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let adj = a.adjacency();
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |i: usize| adj[i].len();
    while order.len() < n {
        // Start each component from an unvisited node of minimal degree.
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree(i), i))
            .expect("unvisited node exists");
        let root = pseudo_peripheral(&adj, start, &visited);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree(w), w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], start: usize, blocked: &[bool]) -> usize {
    let mut root = start;
    let mut best_depth = 0;
    for _ in 0..8 {
        let (depth, last_level) = bfs_levels(adj, root, blocked);
        if depth <= best_depth && best_depth > 0 {
            break;
        }
        best_depth = depth;
        let next = last_level
            .into_iter()
            .min_by_key(|&v| (adj[v].len(), v))
            .unwrap_or(root);
        if next == root {
            break;
        }
        root = next;
    }
    root
}

fn bfs_levels(adj: &[Vec<usize>], root: usize, blocked: &[bool]) -> (usize, Vec<usize>) {
    let mut level = vec![usize::MAX; adj.len()];
    level[root] = 0;
    let mut frontier = vec![root];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj[v] {
                if !blocked[w] && level[w] == usize::MAX {
                    level[w] = depth + 1;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return (depth, frontier);
        }
        depth += 1;
        frontier = next;
    }
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

fn bandwidth(a: &CsrMatrix, inv: &[usize]) -> usize {
    let mut bw = 0;
    for i in 0..a.nrows() {
        for (j, _) in a.row(i) {
            bw = bw.max(inv[i].abs_diff(inv[j]));
        }
    }
    bw
}

/// Cholesky factor `P A Pᵀ = G Gᵀ` of an SPD matrix, stored by rows of `G` in a band.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    perm: Vec<usize>,
    // Row i holds G[i, i-bw..=i] at offsets 0..=bw.
    band: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape("Cholesky needs a square matrix".into()));
        }
        let perm = rcm_ordering(a);
        let inv = inverse_permutation(&perm);
        let bw = bandwidth(a, &inv);
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                if pj <= pi {
                    band[pi * w + (pj + bw - pi)] = v;
                }
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= 1e-14 * scale {
                        return Err(Error::Singular(format!(
                            "non-positive pivot {s:e} in banded Cholesky"
                        )));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, perm, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = y[i];
            for j in j0..i {
                s -= self.band[i * w + (j + bw - i)] * y[j];
            }
            y[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            y[i] /= self.band[i * w + bw];
            let yi = y[i];
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                y[j] -= self.band[i * w + (j + bw - i)] * yi;
            }
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// LU factorization with partial pivoting of a permuted banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    perm: Vec<usize>,
    pivots: Vec<usize>,
    // Row i holds columns i-kl ..= i+kl+ku at offsets 0..width.
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape("LU needs a square matrix".into()));
        }
        let perm = rcm_ordering(a);
        let inv = inverse_permutation(&perm);
        let bw = bandwidth(a, &inv);
        let (kl, ku) = (bw, bw);
        let w = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                band[pi * w + (pj + kl - pi)] += v;
            }
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[k * w + kl].abs();
            for i in k + 1..=last {
                let v = band[i * w + (k + kl - i)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot at step {k}")));
            }
            pivots[k] = p;
            let cend = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=cend {
                    band.swap(k * w + (j + kl - k), p * w + (j + kl - p));
                }
            }
            let piv = band[k * w + kl];
            let (head, tail) = band.split_at_mut((k + 1) * w);
            let row_k = &head[k * w..];
            for i in k + 1..=last {
                let ri = &mut tail[(i - k - 1) * w..(i - k) * w];
                let off = kl - (i - k);
                let l = ri[off] / piv;
                ri[off] = l;
                if l == 0.0 {
                    continue;
                }
                // Columns k+1..=cend: row k offset (j+kl-k), row i offset (j+kl-i).
                let len = cend - k;
                let src = &row_k[kl + 1..kl + 1 + len];
                let dst = &mut ri[off + 1..off + 1 + len];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            perm,
            pivots,
            band,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let w = 2 * kl + ku + 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    y[i] -= self.band[i * w + (k + kl - i)] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.band[k * w + (j + kl - k)] * y[j];
            }
            y[k] = s / self.band[k * w + kl];
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplace_1d(7);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves_tridiagonal() {
        let a = laplace_1d(6);
        let x0 = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let b = a.mul_vec(&x0);
        let x = BandedCholesky::factor(&a).unwrap().solve(&b);
        assert!((x - x0).norm() < 1e-12);
    }

    #[test]
    fn lu_handles_zero_diagonal() {
        let k = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let x = BandedLu::factor(&k)
            .unwrap()
            .solve(&DVector::from_vec(vec![1.0, 0.0]));
        assert!((x[0] - 0.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let k =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            BandedCholesky::factor(&k),
            Err(Error::Singular(_))
        ));
    }
}
