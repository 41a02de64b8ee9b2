//! Envelope (skyline) Cholesky factorization with reverse Cuthill–McKee ordering.
//!
//! The symbolic part (ordering and envelope) depends only on the sparsity
//! pattern and is shared by every numeric factorization on the same mesh, so
//! refactoring with a new conductivity costs only the numeric sweep.
//!
//! With `P` the RCM permutation and `L_p` the envelope factor of `P A Pᵀ`, the
//! factor exposed here is `L = Pᵀ L_p`, so that `A + shift·I = L Lᵀ`. Vectors in
//! the range of `Lᵀ` ("latent" vectors) live in permuted index order; they are
//! only ever combined with each other, never with nodal vectors.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{AetError, Result};
use crate::sparse::{SparseSymmetricMatrix, SparsityPattern};

/// Pivots below this fraction of the (shifted) diagonal entry count as failures.
const PIVOT_TOLERANCE: f64 = 1e-11;

#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `inv_perm[old] = new`.
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    pattern: Arc<SparsityPattern>,
}

impl SymbolicCholesky {
    pub fn new(pattern: Arc<SparsityPattern>) -> Self {
        let n = pattern.dim();
        let perm = reverse_cuthill_mckee(&pattern);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &j in pattern.row(old) {
                let jn = inv_perm[j];
                if jn < first[new] {
                    first[new] = jn;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        Self {
            n,
            perm,
            inv_perm,
            first,
            offset,
            pattern,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.offset[self.n]
    }

    /// Numeric factorization of `a + shift·I`.
    pub fn factor(self: &Arc<Self>, a: &SparseSymmetricMatrix, shift: f64) -> Result<CholeskyFactor> {
        if a.pattern().as_ref() != self.pattern.as_ref() {
            return Err(AetError::Shape(
                "matrix pattern differs from the symbolic factorization".into(),
            ));
        }
        let n = self.n;
        let mut l = vec![0.0; self.envelope_size()];
        let pattern = a.pattern();
        let values = a.values();
        for (new, &old) in self.perm.iter().enumerate() {
            let range = pattern.row_range(old);
            for (&j, &v) in pattern.row(old).iter().zip(&values[range]) {
                let jn = self.inv_perm[j];
                if jn <= new {
                    l[self.offset[new] + (jn - self.first[new])] = v;
                }
            }
        }
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let row_i = &l[oi + (k0 - fi)..oi + (j - fi)];
                let row_j = &l[oj + (k0 - fj)..oj + (j - fj)];
                let s: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let ljj = l[oj + (j - fj)];
                let idx = oi + (j - fi);
                l[idx] = (l[idx] - s) / ljj;
            }
            let row_i = &l[oi..oi + (i - fi)];
            let s: f64 = row_i.iter().map(|x| x * x).sum();
            let diag = l[oi + (i - fi)] + shift;
            let pivot = diag - s;
            if !(pivot > PIVOT_TOLERANCE * diag.abs()) || !pivot.is_finite() {
                return Err(AetError::NotPositiveDefinite {
                    row: self.perm[i],
                    pivot,
                    shift,
                });
            }
            l[oi + (i - fi)] = pivot.sqrt();
        }
        Ok(CholeskyFactor {
            symbolic: self.clone(),
            l,
            shift,
        })
    }
}

/// Reverse Cuthill–McKee ordering, component by component, each started from a
/// pseudo-peripheral node of minimum degree.
fn reverse_cuthill_mckee(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.dim();
    let degree: Vec<usize> = (0..n).map(|i| pattern.row(i).len() - 1).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> (usize, usize) {
        // returns (last node of last level, depth)
        let mut level = vec![start];
        let mut marks = vec![start];
        seen[start] = true;
        let mut depth = 0;
        let mut last = start;
        loop {
            let mut next = Vec::new();
            for &v in &level {
                for &w in pattern.row(v) {
                    if !seen[w] {
                        seen[w] = true;
                        marks.push(w);
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            last = *next.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            level = next;
            depth += 1;
        }
        for v in marks {
            seen[v] = false;
        }
        (last, depth)
    };

    let mut scratch = vec![false; n];
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let mut start = seed;
        let (mut far, mut depth) = bfs_levels(start, &mut scratch);
        for _ in 0..8 {
            let (far2, depth2) = bfs_levels(far, &mut scratch);
            if depth2 <= depth {
                break;
            }
            start = far;
            far = far2;
            depth = depth2;
        }
        let _ = far;
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = pattern
                .row(v)
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Lower-triangular factor `L` with `L Lᵀ = A + shift·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    l: Vec<f64>,
    shift: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    fn forward_permuted(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for i in 0..s.n {
            let fi = s.first[i];
            let oi = s.offset[i];
            let row = &self.l[oi..oi + (i - fi)];
            let acc: f64 = row.iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - acc) / self.l[oi + (i - fi)];
        }
    }

    fn backward_permuted(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for i in (0..s.n).rev() {
            let fi = s.first[i];
            let oi = s.offset[i];
            y[i] /= self.l[oi + (i - fi)];
            let xi = y[i];
            let row = &self.l[oi..oi + (i - fi)];
            for (yj, lij) in y[fi..i].iter_mut().zip(row) {
                *yj -= lij * xi;
            }
        }
    }

    fn to_permuted(&self, v: &[f64]) -> Vec<f64> {
        self.symbolic.perm.iter().map(|&old| v[old]).collect()
    }

    fn from_permuted(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (new, &old) in self.symbolic.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// Solves `(A + shift·I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim());
        let mut y = self.to_permuted(b);
        self.forward_permuted(&mut y);
        self.backward_permuted(&mut y);
        self.from_permuted(&y)
    }

    /// `L⁻¹ b` (nodal vector in, latent vector out).
    pub fn solve_l(&self, b: &[f64]) -> Vec<f64> {
        let mut y = self.to_permuted(b);
        self.forward_permuted(&mut y);
        y
    }

    /// `L⁻ᵀ y` (latent vector in, nodal vector out).
    pub fn solve_lt(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        self.backward_permuted(&mut x);
        self.from_permuted(&x)
    }

    /// `Lᵀ v` (nodal vector in, latent vector out); `‖Lᵀv‖² = vᵀ(A + shift·I)v`.
    pub fn apply_lt(&self, v: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let vp = self.to_permuted(v);
        let mut out = vec![0.0; s.n];
        for i in 0..s.n {
            let fi = s.first[i];
            let oi = s.offset[i];
            let row = &self.l[oi..=oi + (i - fi)];
            for (k, lik) in row.iter().enumerate() {
                out[fi + k] += lik * vp[i];
            }
        }
        out
    }

    /// `L y` (latent vector in, nodal vector out).
    pub fn apply_l(&self, y: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut out = vec![0.0; s.n];
        for i in 0..s.n {
            let fi = s.first[i];
            let oi = s.offset[i];
            let row = &self.l[oi..=oi + (i - fi)];
            out[i] = row.iter().zip(&y[fi..=i]).map(|(a, b)| a * b).sum();
        }
        self.from_permuted(&out)
    }

    /// Dense `L` in original row ordering, column order latent (test helper).
    pub fn to_dense_l(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.apply_l(&e);
            for r in 0..n {
                out[r * n + c] = col[r];
            }
        }
        out
    }
}

/// Factors `a + shift·I`, building the symbolic structure on the fly.
pub fn cholesky_factor(a: &SparseSymmetricMatrix, shift: f64) -> Result<CholeskyFactor> {
    let symbolic = Arc::new(SymbolicCholesky::new(a.pattern().clone()));
    symbolic.factor(a, shift)
}
