use std::ops::{Deref, DerefMut};
use std::path::Path;

use crate::error::{AetError, Result};
use crate::io::{read_text, write_text};

/// Coefficient vector over mesh nodes (conductivity, potential, power density, weights).
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fails unless every value is strictly positive.
    pub fn require_positive(&self, what: &str) -> Result<()> {
        match self.0.iter().position(|v| !(*v > 0.0)) {
            Some(i) => Err(AetError::InvalidInput(format!(
                "{what} must be strictly positive, got {} at node {i}",
                self.0[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.0.len() * 24);
        for v in &self.0 {
            out.push_str(&format!("{v:e}\n"));
        }
        write_text(path, &out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let values = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|e| AetError::Format {
                    path: path.to_path_buf(),
                    msg: format!("line {}: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(values))
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
