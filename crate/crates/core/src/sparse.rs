//! Symmetric sparse matrices over a fixed P1 sparsity pattern.
//!
//! All finite-element matrices on one mesh share a [`SparsityPattern`] that
//! records, for every triangle, where its 3×3 element block lands in the CSR
//! value array. Reassembling with a new coefficient is then a single pass
//! over the triangles with no searching.

use std::sync::Arc;

use crate::error::{AetError, Result};

/// CSR layout (full symmetric storage, sorted columns, diagonal always present).
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag_pos: Vec<usize>,
    element_slots: Vec<[usize; 9]>,
}

impl SparsityPattern {
    /// Pattern of the P1 connectivity of `triangles` over `n` nodes.
    pub fn from_triangles(n: usize, triangles: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in triangles {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let find = |i: usize, j: usize, row_ptr: &[usize], col_idx: &[usize]| -> usize {
            let lo = row_ptr[i];
            let hi = row_ptr[i + 1];
            lo + col_idx[lo..hi].binary_search(&j).expect("entry in pattern")
        };
        let diag_pos = (0..n).map(|i| find(i, i, &row_ptr, &col_idx)).collect();
        let element_slots = triangles
            .iter()
            .map(|tri| {
                let mut slots = [0usize; 9];
                for (a, &ia) in tri.iter().enumerate() {
                    for (b, &ib) in tri.iter().enumerate() {
                        slots[3 * a + b] = find(ia, ib, &row_ptr, &col_idx);
                    }
                }
                slots
            })
            .collect();
        Self {
            n,
            row_ptr,
            col_idx,
            diag_pos,
            element_slots,
        }
    }

    /// Pattern holding only the diagonal.
    pub fn diagonal(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            diag_pos: (0..n).collect(),
            element_slots: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub(crate) fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub(crate) fn element_slots(&self) -> &[[usize; 9]] {
        &self.element_slots
    }
}

/// Symmetric matrix stored in full over a shared [`SparsityPattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseSymmetricMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsityPattern::diagonal(n));
        Self {
            pattern,
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from a dense row-major square array, keeping entries with
    /// `|a_ij| > 0` (plus the diagonal). Intended for small test problems.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(AetError::Shape(format!(
                "dense array of length {} is not {n}x{n}",
                dense.len()
            )));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..n {
                let v = dense[i * n + j];
                if v != 0.0 || i == j {
                    if i == j {
                        diag_pos.push(col_idx.len());
                    }
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let pattern = SparsityPattern {
            n,
            row_ptr,
            col_idx,
            diag_pos,
            element_slots: Vec::new(),
        };
        Ok(Self {
            pattern: Arc::new(pattern),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.pattern
            .diag_pos
            .iter()
            .map(|&p| self.values[p])
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.pattern.row_range(i);
        match self.pattern.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.pattern.row_range(i) {
                acc += self.values[k] * x[self.pattern.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        dot(x, &ax)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Entrywise sum; both operands must share the same pattern.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.pattern != other.pattern {
            return Err(AetError::Shape("matrices have different sparsity patterns".into()));
        }
        Ok(Self {
            pattern: self.pattern.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.pattern.row_range(i).map(|k| self.values[k]).sum())
            .collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for k in self.pattern.row_range(i) {
                let j = self.pattern.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in self.pattern.row_range(i) {
                out[i * n + self.pattern.col_idx[k]] = self.values[k];
            }
        }
        out
    }

    pub(crate) fn set_diagonal(&mut self, i: usize, value: f64) {
        let k = self.pattern.diag_pos[i];
        self.values[k] = value;
    }

    /// Sets row and column `node` to the identity row (used to ground one node).
    pub(crate) fn ground(&mut self, node: usize) {
        for i in 0..self.dim() {
            let range = self.pattern.row_range(i);
            for k in range {
                let j = self.pattern.col_idx[k];
                if i == node || j == node {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
