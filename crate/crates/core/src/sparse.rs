//! Symmetric sparse matrices and an envelope (skyline) Cholesky factor
//! under reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

/// Compressed sparse row matrix with sorted, deduplicated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[r.clone()].binary_search(&j) {
            Ok(k) => self.val[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// `self + shift * diag(d)`.
    pub fn add_diagonal(&self, shift: f64, d: &[f64]) -> Self {
        let mut t: Vec<_> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect();
        t.extend(d.iter().enumerate().map(|(i, &di)| (i, i, shift * di)));
        Self::from_triplets(self.n, t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Reverse Cuthill–McKee permutation: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree = |i: usize| adj[i].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree(i), i))
            .unwrap();
        let start = pseudo_peripheral(&adj, start);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<_> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| (degree(v), v));
            for v in nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level
}

fn pseudo_peripheral(adj: &[Vec<usize>], mut start: usize) -> usize {
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(adj, start);
        let (far, e) = level
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != usize::MAX)
            .map(|(i, &l)| (i, l))
            .max_by_key(|&(i, l)| (l, std::cmp::Reverse(adj[i].len()), std::cmp::Reverse(i)))
            .unwrap();
        if e <= ecc {
            break;
        }
        ecc = e;
        start = far;
    }
    start
}

#[derive(Debug, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot} at row {row})")]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored row-wise over the envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let c = inv[j];
                if c <= new {
                    data[offset[new] + c - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let (fi, oi) = (first[i], offset[i]);
            for j in fi..=i {
                let (fj, oj) = (first[j], offset[j]);
                let k0 = fi.max(fj);
                let mut s = data[oi + j - fi];
                for k in k0..j {
                    s -= data[oi + k - fi] * data[oj + k - fj];
                }
                if j < i {
                    data[oi + j - fi] = s / data[oj + j - fj];
                } else {
                    if !(s > 0.0) {
                        return Err(NotPositiveDefinite { row: perm[i], pivot: s });
                    }
                    data[oi + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { perm, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let (fi, oi) = (self.first[i], self.offset[i]);
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[oi + k - fi] * y[k];
            }
            y[i] = s / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, oi) = (self.first[i], self.offset[i]);
            y[i] /= self.data[oi + i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.data[oi + k - fi] * xi;
            }
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
    use proptest::prelude::*;

    fn laplacian_path(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_merge_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![2.0, -1.0]);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let m = laplacian_path(17, 0.1);
        let mut p = reverse_cuthill_mckee(&m);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_indefinite() {
        let m = laplacian_path(5, -3.0);
        assert!(SkylineCholesky::factor(&m).is_err());
    }

    proptest! {
        #[test]
        fn cholesky_solves_random_spd(n in 2usize..30, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 0.5));
                for _ in 0..2 {
                    let j = rng.gen_range(0..n);
                    if j != i {
                        let w: f64 = rng.gen_range(0.1..1.0);
                        t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
                    }
                }
            }
            let a = CsrMatrix::from_triplets(n, t);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = SkylineCholesky::factor(&a).unwrap().solve(&b);
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-10);
            }
        }
    }
}
