//! Discrete forward operator `K_{ij} = −η ∫ p(·,t_i) φ_j`, stacked over sources.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::cholesky::CholeskyFactor;
use crate::error::{AetError, Result};
use crate::fem::assemble_mass;
use crate::io::{header_value, parse_header, read_binary, write_binary};
use crate::mesh::TriangleMesh;
use crate::sparse::{dot, norm2, SparseSymmetricMatrix};
use crate::wave::WaveRecord;

/// Dense row-major operator from nodal fields to stacked time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardMatrix {
    rows: usize,
    cols: usize,
    eta: f64,
    /// Samples per source block.
    samples: usize,
    data: Vec<f64>,
    provenance: String,
}

impl ForwardMatrix {
    pub fn from_rows(rows: usize, cols: usize, eta: f64, samples: usize, data: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if data.len() != rows * cols || samples == 0 || rows % samples != 0 {
            return Err(AetError::Shape(format!(
                "{} entries for a {rows}x{cols} operator with {samples} samples per source",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            eta,
            samples,
            data,
            provenance: provenance.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn samples_per_source(&self) -> usize {
        self.samples
    }

    pub fn sources(&self) -> usize {
        self.rows / self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows belonging to source block `s`.
    pub fn block(&self, s: usize) -> &[f64] {
        &self.data[s * self.samples * self.cols..(s + 1) * self.samples * self.cols]
    }

    /// `K h`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.cols);
        self.data.par_chunks(self.cols).map(|r| dot(r, h)).collect()
    }

    /// `Kᵀ y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let chunk = 64;
        self.data
            .par_chunks(self.cols * chunk)
            .zip(y.par_chunks(chunk))
            .map(|(block, ys)| {
                let mut acc = vec![0.0; self.cols];
                for (r, &yi) in block.chunks(self.cols).zip(ys) {
                    if yi != 0.0 {
                        for (a, v) in acc.iter_mut().zip(r) {
                            *a += yi * v;
                        }
                    }
                }
                acc
            })
            .reduce(
                || vec![0.0; self.cols],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        *x += y;
                    }
                    a
                },
            )
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self − other` entrywise.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(AetError::Shape(format!(
                "{}x{} vs {}x{} operators",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            provenance: format!("{} - {}", self.provenance, other.provenance),
            ..self.clone()
        })
    }

    /// Rows of the listed source blocks only.
    pub fn select_sources(&self, sources: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(sources.len() * self.samples * self.cols);
        for &s in sources {
            if s >= self.sources() {
                return Err(AetError::InvalidInput(format!("source {s} not in operator")));
            }
            data.extend_from_slice(self.block(s));
        }
        Self::from_rows(sources.len() * self.samples, self.cols, self.eta, self.samples, data, self.provenance.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_binary(
            path,
            &format!(
                "K rows={} cols={} eta={} samples={}",
                self.rows, self.cols, self.eta, self.samples
            ),
            &self.data,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (header, data) = read_binary(path)?;
        let map = parse_header(path, &header, "K")?;
        let rows: usize = header_value(path, &map, "rows")?;
        let cols: usize = header_value(path, &map, "cols")?;
        let eta: f64 = header_value(path, &map, "eta")?;
        let samples: usize = map.get("samples").and_then(|v| v.parse().ok()).unwrap_or(rows);
        Self::from_rows(rows, cols, eta, samples, data, path.display().to_string())
    }
}

/// Stacks `−η M p(·,t_i)` over sources (outer) and times (inner).
pub fn assemble_forward_matrix(mesh: &TriangleMesh, waves: &[WaveRecord], eta: f64) -> Result<ForwardMatrix> {
    let mass = assemble_mass(mesh, None)?;
    assemble_with_mass(&mass, waves, eta, "waves")
}

/// As [`assemble_forward_matrix`] with a prepared mass matrix.
pub fn assemble_with_mass(mass: &SparseSymmetricMatrix, waves: &[WaveRecord], eta: f64, provenance: &str) -> Result<ForwardMatrix> {
    let first = waves
        .first()
        .ok_or_else(|| AetError::InvalidInput("no wave records to assemble".into()))?;
    for w in waves {
        if !w.same_discretization(first) {
            return Err(AetError::Shape(format!(
                "wave for source {} has a different time grid or node count than source {}",
                w.source(),
                first.source()
            )));
        }
    }
    let n = mass.dim();
    if first.node_count() != n {
        return Err(AetError::Shape(format!(
            "waves have {} nodes, mesh has {n}",
            first.node_count()
        )));
    }
    let samples = first.samples();
    let mut data = vec![0.0; waves.len() * samples * n];
    data.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
        let w = &waves[r / samples];
        mass.mul_vec_into(w.row(r % samples), row);
        for v in row.iter_mut() {
            *v *= -eta;
        }
    });
    ForwardMatrix::from_rows(waves.len() * samples, n, eta, samples, data, provenance)
}

/// Largest singular value of `(K1 − K2) L⁻ᵀ` with `M = L Lᵀ`.
pub fn operator_norm_diff(k1: &ForwardMatrix, k2: &ForwardMatrix, metric_mass: &SparseSymmetricMatrix) -> Result<f64> {
    let factor = crate::cholesky::cholesky_factor(metric_mass, 0.0)?;
    operator_norm_diff_with(k1, k2, &factor)
}

/// As [`operator_norm_diff`] with a prepared mass factor.
pub fn operator_norm_diff_with(k1: &ForwardMatrix, k2: &ForwardMatrix, mass_factor: &CholeskyFactor) -> Result<f64> {
    let d = k1.difference(k2)?;
    if d.cols != mass_factor.dim() {
        return Err(AetError::Shape("operator columns do not match the mass matrix".into()));
    }
    if d.data.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let apply = |x: &[f64]| {
        let v = mass_factor.solve_lt(x);
        mass_factor.solve_l(&d.apply_transpose(&d.apply(&v)))
    };
    Ok(largest_eigenvalue(apply, d.cols, 1e-10)?.sqrt())
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by Lanczos
/// iteration with full reorthogonalization (a Krylov-accelerated power method).
pub fn largest_eigenvalue<F>(apply: F, n: usize, tol: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let max_steps = n.min(300);
    // Deterministic, generic start vector.
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let qn = norm2(&q);
    q.iter_mut().for_each(|v| *v /= qn);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut previous = f64::NAN;
    for step in 0..max_steps {
        let mut w = apply(&basis[step]);
        let alpha = dot(&w, &basis[step]);
        alphas.push(alpha);
        for b in &basis {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        for b in &basis {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let beta = norm2(&w);
        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let top = SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = top.abs().max(f64::MIN_POSITIVE);
        if beta <= 1e-14 * scale || (previous.is_finite() && (top - previous).abs() <= tol * scale) {
            return Ok(top.max(0.0));
        }
        previous = top;
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    if previous.is_finite() && n <= max_steps {
        return Ok(previous.max(0.0));
    }
    Err(AetError::NoConvergence {
        what: "largest eigenvalue iteration",
        iterations: max_steps,
        residual: f64::NAN,
    })
}
