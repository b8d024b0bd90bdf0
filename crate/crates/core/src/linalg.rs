//! Sparse storage helpers and a direct banded LU solver with bandwidth-reducing reordering.

use std::collections::VecDeque;

use sprs::{CsMat, TriMat};
use thiserror::Error;

use crate::numeric::Real;

pub type SparseMatrix<T> = CsMat<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// `y = A x`.
pub fn spmv<T: Real>(a: &CsMat<T>, x: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); a.rows()];
    spmv_add(a, T::one(), x, &mut y);
    y
}

/// `y += s * A x` for a CSR or CSC matrix.
pub fn spmv_add<T: Real>(a: &CsMat<T>, s: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(a.cols(), x.len());
    debug_assert_eq!(a.rows(), y.len());
    if a.is_csr() {
        for (i, row) in a.outer_iterator().enumerate() {
            let mut acc = T::zero();
            for (j, &v) in row.iter() {
                acc += v * x[j];
            }
            y[i] += s * acc;
        }
    } else {
        for (j, col) in a.outer_iterator().enumerate() {
            let xj = s * x[j];
            for (i, &v) in col.iter() {
                y[i] += v * xj;
            }
        }
    }
}

/// `xᵀ A y`.
pub fn bilinear<T: Real>(a: &CsMat<T>, x: &[T], y: &[T]) -> T {
    crate::numeric::dot(x, &spmv(a, y))
}

/// Iterates `(row, col, value)` over stored entries.
pub fn entries<T: Real>(a: &CsMat<T>) -> impl Iterator<Item = (usize, usize, T)> + '_ {
    let csr = a.is_csr();
    a.outer_iterator().enumerate().flat_map(move |(o, v)| {
        v.iter()
            .map(move |(i, &x)| if csr { (o, i, x) } else { (i, o, x) })
            .collect::<Vec<_>>()
    })
}

/// Linear combination `Σ s_k A_k` of equally shaped matrices.
pub fn combine<T: Real>(shape: (usize, usize), terms: &[(T, &CsMat<T>)]) -> CsMat<T> {
    let mut tri = TriMat::new(shape);
    for &(s, m) in terms {
        if s == T::zero() {
            continue;
        }
        for (i, j, v) in entries(m) {
            tri.add_triplet(i, j, s * v);
        }
    }
    tri.to_csr()
}

/// Block-diagonal matrix `diag(A, B)`.
pub fn block_diag<T: Real>(a: &CsMat<T>, b: &CsMat<T>) -> CsMat<T> {
    let (ra, ca) = (a.rows(), a.cols());
    let mut tri = TriMat::new((ra + b.rows(), ca + b.cols()));
    for (i, j, v) in entries(a) {
        tri.add_triplet(i, j, v);
    }
    for (i, j, v) in entries(b) {
        tri.add_triplet(ra + i, ca + j, v);
    }
    tri.to_csr()
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn rcm_ordering<T: Real>(a: &CsMat<T>) -> Vec<usize> {
    let n = a.rows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in entries(a) {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for list in &mut adj {
        list.sort_by_key(|&k| (degree[k], k));
    }

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&k| (degree[k], k));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    (last, dist[last])
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let (mut far, mut ecc) = bfs_levels(adj, seed);
    for _ in 0..8 {
        let (next_far, next_ecc) = bfs_levels(adj, far);
        if next_ecc <= ecc {
            break;
        }
        far = next_far;
        ecc = next_ecc;
    }
    far
}

/// LU factorization with partial pivoting of a reordered banded matrix.
///
/// Row `i` of `ab` stores columns `i - kl ..= i + ku + kl`; pivoting widens the upper band by `kl`.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<T>,
    piv: Vec<usize>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn factor(a: &CsMat<T>) -> Result<Self, LinalgError> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsMat<T>, perm: Vec<usize>) -> Result<Self, LinalgError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(LinalgError::NotSquare { rows: n, cols: a.cols() });
        }
        if perm.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: perm.len() });
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        let mut max_abs = T::zero();
        for (i, j, v) in entries(a) {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
            max_abs = max_abs.max(v.abs());
        }
        let width = 2 * kl + ku + 1;
        let mut ab = vec![T::zero(); n * width];
        for (i, j, v) in entries(a) {
            let (pi, pj) = (inv[i], inv[j]);
            ab[pi * width + (pj + kl - pi)] += v;
        }
        let threshold = max_abs * T::epsilon();
        let mut piv = vec![0usize; n];
        let idx = |row: usize, col: usize| row * width + (col + kl - row);

        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = ab[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > threshold) {
                return Err(LinalgError::Singular { pivot: k });
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    ab.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = ab[idx(k, k)];
            for i in k + 1..=last_row {
                let l = ab[idx(i, k)] / pivot;
                ab[idx(i, k)] = l;
                if l != T::zero() {
                    for j in k + 1..=last_col {
                        let u = ab[idx(k, j)];
                        ab[idx(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, width, ab, piv, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Lower and (pre-pivoting) upper bandwidths after reordering.
    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
        }
        let (kl, ku, width) = (self.kl, self.ku, self.width);
        let idx = |row: usize, col: usize| row * width + (col + kl - row);
        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != T::zero() {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.ab[idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.ab[idx(k, j)] * x[j];
            }
            x[k] = acc / self.ab[idx(k, k)];
        }
        let mut out = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        Ok(out)
    }
}

/// Solves `A x = b` once.
pub fn solve<T: Real>(a: &CsMat<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    BandedLu::factor(a)?.solve(b)
}

/// Solves a small dense system in place by Gaussian elimination with partial pivoting.
pub fn solve_dense_small<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>, LinalgError> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(k);
        if a[p][k] == T::zero() || !a[p][k].is_finite() {
            return Err(LinalgError::Singular { pivot: k });
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                let v = a[k][j];
                a[i][j] -= l * v;
            }
            let bk = b[k];
            b[i] -= l * bk;
        }
    }
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k][j] * b[j];
        }
        b[k] = acc / a[k][k];
    }
    Ok(b)
}

/// Eigenpairs of a small symmetric matrix by cyclic Jacobi rotations, ascending.
/// Column `k` of the returned vectors belongs to eigenvalue `k`.
pub fn symmetric_eigen_small<T: Real>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut v: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
    for _sweep in 0..64 {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: T = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let two = T::one() + T::one();
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, seed: u64) -> CsMat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tri = TriMat::new((n, n));
        for i in 0..n {
            tri.add_triplet(i, i, 0.1 + rng.gen::<f64>());
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                tri.add_triplet(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        tri.to_csr()
    }

    #[test]
    fn banded_lu_solves_random_unsymmetric_systems() {
        for seed in 0..5 {
            let a = random_sparse(60, seed);
            let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
            let b = spmv(&a, &x);
            let y = solve(&a, &b).unwrap();
            let err = y.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "seed {seed}: {err}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut tri = TriMat::new((3, 3));
        tri.add_triplet(0, 1, 1.0);
        tri.add_triplet(1, 0, 1.0);
        tri.add_triplet(2, 2, 2.0);
        tri.add_triplet(1, 2, 1.0);
        let a: CsMat<f64> = tri.to_csr();
        let x = solve(&a, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut tri = TriMat::new((2, 2));
        tri.add_triplet(0, 0, 1.0);
        tri.add_triplet(0, 1, 1.0);
        tri.add_triplet(1, 0, 1.0);
        tri.add_triplet(1, 1, 1.0);
        let a: CsMat<f64> = tri.to_csr();
        assert!(matches!(BandedLu::factor(&a), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_path() {
        let n = 50;
        let labels: Vec<usize> = (0..n).map(|i| (i * 17) % n).collect();
        let mut tri = TriMat::new((n, n));
        for i in 0..n {
            tri.add_triplet(labels[i], labels[i], 2.0);
            if i + 1 < n {
                tri.add_triplet(labels[i], labels[i + 1], -1.0);
                tri.add_triplet(labels[i + 1], labels[i], -1.0);
            }
        }
        let a: CsMat<f64> = tri.to_csr();
        let lu = BandedLu::factor(&a).unwrap();
        assert_eq!(lu.bandwidths(), (1, 1));
    }

    #[test]
    fn dense_small_solver() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x: Vec<f64> = solve_dense_small(a, vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_eigen_reconstructs() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]];
        let (vals, vecs): (Vec<f64>, _) = symmetric_eigen_small(a.clone());
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i][j] * vecs[j][k]).sum();
                assert!((av - vals[k] * vecs[i][k]).abs() < 1e-13);
            }
        }
        let trace: f64 = vals.iter().sum();
        assert!((trace - 8.0).abs() < 1e-13);
    }
}
