//! Sparse assembly and direct solution of the linear systems produced by the
//! implicit sub-steps.
//!
//! Matrices are assembled from triplets into compressed sparse row form.
//! Solution goes through a reverse Cuthill-McKee reordering followed by a
//! banded LU factorization with partial pivoting, then one or two sweeps of
//! iterative refinement. Systems in this crate are small (a few thousand
//! unknowns on desk-scale grids), so a band solver is fast and, unlike a
//! Krylov method, fully deterministic.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Stored entry at `(i, j)`, zero when not in the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Rows with no stored entry (or only exact zeros).
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.row(i).all(|(_, a)| a == 0.0))
            .collect()
    }
}

/// A matrix together with its right-hand side.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != matrix.dim() {
            return Err(Error::Logic(format!(
                "rhs length {} does not match dimension {}",
                rhs.len(),
                matrix.dim()
            )));
        }
        Ok(Self { matrix, rhs })
    }

    pub fn solve(&self, tol: f64) -> Result<Vec<f64>> {
        solve(&self.matrix, &self.rhs, tol)
    }
}

/// Builds a CSR matrix, summing duplicate entries. Column order within a row is
/// ascending, so the result does not depend on triplet order beyond the
/// floating-point order of duplicate sums.
pub fn assemble(triplets: &[(usize, usize, f64)], n: usize) -> Result<CsrMatrix> {
    let mut counts = vec![0usize; n + 1];
    for &(r, c, v) in triplets {
        if r >= n || c >= n {
            return Err(Error::IndexOutOfRange { row: r, col: c, n });
        }
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite entry {v} at ({r}, {c})")));
        }
        counts[r + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    // stable bucket by row keeps the insertion order of duplicates
    let mut slots = counts.clone();
    let mut entries = vec![(0usize, 0.0f64); triplets.len()];
    for &(r, c, v) in triplets {
        entries[slots[r]] = (c, v);
        slots[r] += 1;
    }

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let row = &mut entries[counts[i]..counts[i + 1]];
        row.sort_by_key(|&(c, _)| c);
        let mut k = 0;
        while k < row.len() {
            let col = row[k].0;
            let mut sum = 0.0;
            while k < row.len() && row[k].0 == col {
                sum += row[k].1;
                k += 1;
            }
            col_idx.push(col);
            values.push(sum);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    })
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Normwise backward error `|r| / (|A| |x| + |b|)` in the max norm, with the
/// residual it was computed from.
fn backward_error(a: &CsrMatrix, a_norm: f64, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let scale = a_norm * norm_inf(x) + norm_inf(b);
    let rn = norm_inf(&r);
    let err = if scale > 0.0 { rn / scale } else { rn };
    (r, err)
}

/// Solves `A x = b` to normwise backward error `tol`.
///
/// Fails with [`Error::Singular`] on a structurally zero row, a zero pivot, or
/// when refinement cannot reach `tol`.
pub fn solve(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Logic(format!(
            "rhs length {} does not match dimension {n}",
            b.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if let Some(&row) = a.zero_rows().first() {
        return Err(Error::Singular {
            reason: format!("row {row} is structurally zero"),
            residual: f64::INFINITY,
        });
    }
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }

    let perm = reverse_cuthill_mckee(a);
    let lu = BandLu::factor(a, &perm)?;

    let a_norm = (0..n).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut x = lu.solve(b);
    let (mut r, mut rel) = backward_error(a, a_norm, &x, b);
    for _ in 0..3 {
        if rel <= tol * 1e-2 {
            break;
        }
        let dx = lu.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let (r_new, rel_new) = backward_error(a, a_norm, &candidate, b);
        if !(rel_new < rel) {
            break;
        }
        x = candidate;
        r = r_new;
        rel = rel_new;
    }
    if !rel.is_finite() || rel > tol {
        return Err(Error::Singular {
            reason: "residual above tolerance after refinement".into(),
            residual: rel,
        });
    }
    Ok(x)
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern. Returns `perm`
/// with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, v) in a.row(i) {
            if i != j && v != 0.0 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    // components are seeded from their minimum-degree node, ties by index
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&i| (degree[i], i));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let depth = level[last];
    let frontier = (0..adj.len()).filter(|&v| level[v] == depth).collect();
    (frontier, depth)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let (_, mut depth) = bfs_levels(current, adj);
    for _ in 0..8 {
        let (frontier, _) = bfs_levels(current, adj);
        let candidate = frontier
            .into_iter()
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(current);
        let (_, cand_depth) = bfs_levels(candidate, adj);
        if cand_depth <= depth {
            break;
        }
        current = candidate;
        depth = cand_depth;
    }
    current
}

/// LU factors of `P A P^T` stored in band form, with row interchanges.
struct BandLu {
    n: usize,
    kl: usize,
    /// Upper bandwidth of the factor: `ku + kl` after pivoting fill.
    ku_total: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    fn factor(a: &CsrMatrix, perm: &[usize]) -> Result<Self> {
        let n = a.dim();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, v) in a.row(old_i) {
                if v == 0.0 {
                    continue;
                }
                let j = inv[old_j];
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let ku_total = ku + kl;
        let width = kl + ku_total + 1;
        let mut band = vec![0.0; n * width];
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, v) in a.row(old_i) {
                let j = inv[old_j];
                band[i * width + (j + kl - i)] += v;
            }
        }
        let scale = band.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let mut pivots = vec![0usize; n];
        let idx = |r: usize, c: usize| r * width + (c + kl - r);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[idx(k, k)].abs();
            for r in k + 1..=last_row {
                let v = band[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[k] = p;
            if best == 0.0 || best <= scale * 1e-300 {
                return Err(Error::Singular {
                    reason: format!("zero pivot at reordered row {k} (original {})", perm[k]),
                    residual: f64::INFINITY,
                });
            }
            let last_col = (k + ku_total).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    band.swap(idx(k, c), idx(p, c));
                }
            }
            let pivot = band[idx(k, k)];
            for r in k + 1..=last_row {
                let lrk = band[idx(r, k)] / pivot;
                if lrk == 0.0 {
                    continue;
                }
                band[idx(r, k)] = lrk;
                for c in k + 1..=last_col {
                    let ukc = band[idx(k, c)];
                    if ukc != 0.0 {
                        band[idx(r, c)] -= lrk * ukc;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku_total,
            width,
            band,
            pivots,
            perm: perm.to_vec(),
        })
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.band[r * self.width + (c + self.kl - r)]
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    y[r] -= self.at(r, k) * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for c in k + 1..=(k + self.ku_total).min(n - 1) {
                s -= self.at(k, c) * y[c];
            }
            y[k] = s / self.at(k, k);
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_triplets(n: usize) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        t
    }

    #[test]
    fn duplicates_are_summed() {
        let a = assemble(&[(0, 0, 1.0), (0, 0, 1.0)], 1).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn empty_triplets_give_structurally_zero_matrix() {
        let a = assemble(&[], 2).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.zero_rows(), vec![0, 1]);
        let err = solve(&a, &[1.0, 1.0], DEFAULT_TOLERANCE).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn laplacian_pattern_is_tridiagonal() {
        let a = assemble(&laplacian_triplets(4), 4).unwrap();
        for i in 0..4usize {
            for j in 0..4 {
                let expected = match i.abs_diff(j) {
                    0 => 2.0,
                    1 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(a.get(i, j), expected, "({i},{j})");
            }
        }
        assert_eq!(a.nnz(), 10);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = assemble(&[(0, 3, 1.0)], 2).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { row: 0, col: 3, n: 2 }));
    }

    #[test]
    fn identity_returns_rhs() {
        let t: Vec<_> = (0..5).map(|i| (i, i, 1.0)).collect();
        let a = assemble(&t, 5).unwrap();
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.25];
        assert_eq!(solve(&a, &b, DEFAULT_TOLERANCE).unwrap(), b);
    }

    #[test]
    fn manufactured_quadratic_on_laplacian() {
        // u_i = i^2 on a Dirichlet-padded grid: -u_{i-1} + 2u_i - u_{i+1} = -2
        // with boundary values folded into the first and last rows.
        let n = 40;
        let a = assemble(&laplacian_triplets(n), n).unwrap();
        let exact: Vec<f64> = (1..=n).map(|i| (i * i) as f64).collect();
        let mut b = vec![-2.0; n];
        b[0] += 0.0; // u_0 = 0
        b[n - 1] += ((n + 1) * (n + 1)) as f64;
        let x = solve(&a, &b, DEFAULT_TOLERANCE).unwrap();
        for (xi, ei) in x.iter().zip(&exact) {
            assert!((xi - ei).abs() <= 1e-12 * ei.abs().max(1.0), "{xi} vs {ei}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] x = [2, 3]  ->  x = [3, 2]
        let a = assemble(&[(0, 1, 1.0), (1, 0, 1.0)], 2).unwrap();
        let x = solve(&a, &[2.0, 3.0], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_rank_deficient_is_rejected() {
        let a = assemble(&[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 2.0)], 2).unwrap();
        assert!(solve(&a, &[1.0, 1.0], DEFAULT_TOLERANCE).is_err());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = assemble(&laplacian_triplets(9), 9).unwrap();
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn two_dimensional_grid_matches_dense_elimination() {
        // 5-point Laplacian plus a non-symmetric advection part on a 6x5 grid,
        // checked against dense Gaussian elimination.
        let (nx, ny) = (6, 5);
        let n = nx * ny;
        let id = |i: usize, j: usize| j * nx + i;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let c = id(i, j);
                t.push((c, c, 4.5));
                if i > 0 {
                    t.push((c, id(i - 1, j), -1.3));
                }
                if i + 1 < nx {
                    t.push((c, id(i + 1, j), -0.7));
                }
                if j > 0 {
                    t.push((c, id(i, j - 1), -1.0));
                }
                if j + 1 < ny {
                    t.push((c, id(i, j + 1), -1.0));
                }
            }
        }
        let a = assemble(&t, n).unwrap();
        let b: Vec<f64> = (0..n).map(|k| ((k * 7 % 11) as f64) - 3.0).collect();
        let x = solve(&a, &b, DEFAULT_TOLERANCE).unwrap();

        let mut dense = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = a.get(i, j);
            }
            dense[i][n] = b[i];
        }
        for k in 0..n {
            let p = (k..n)
                .max_by(|&r, &s| dense[r][k].abs().total_cmp(&dense[s][k].abs()))
                .unwrap();
            dense.swap(k, p);
            for r in k + 1..n {
                let f = dense[r][k] / dense[k][k];
                for c in k..=n {
                    dense[r][c] -= f * dense[k][c];
                }
            }
        }
        let mut y = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| dense[k][c] * y[c]).sum();
            y[k] = (dense[k][n] - s) / dense[k][k];
        }
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).abs() < 1e-12 * yi.abs().max(1.0));
        }
    }
}
