//! Square Cartesian grid `[-L, L]²` and bilinear transfer to mesh nodes.

use crate::error::{AetError, Result};
use crate::field::NodalField;
use crate::mesh::TriangleMesh;

/// `points` per side over `[-half_width, half_width]²`; the damping layer
/// occupies everything outside `[-inner_half_width, inner_half_width]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    half_width: f64,
    inner_half_width: f64,
    points: usize,
}

impl CartesianGrid {
    pub fn new(half_width: f64, inner_half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0) || !(inner_half_width > 0.0) || inner_half_width >= half_width {
            return Err(AetError::InvalidInput(format!(
                "need 0 < L' < L, got L = {half_width}, L' = {inner_half_width}"
            )));
        }
        if points < 3 {
            return Err(AetError::InvalidInput(format!("grid needs at least 3 points per side, got {points}")));
        }
        Ok(Self {
            half_width,
            inner_half_width,
            points,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn inner_half_width(&self) -> f64 {
        self.inner_half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        -self.half_width + index as f64 * self.spacing()
    }

    /// Flat index of grid point `(ix, iy)` (row-major, `y` rows).
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.points + ix
    }

    /// True when the disk of radius `r` about the origin fits in the inner square.
    pub fn contains_disk(&self, r: f64) -> bool {
        r <= self.inner_half_width
    }

    /// Bilinear stencil (four flat indices and weights) at `(x, y)`.
    pub fn stencil(&self, x: f64, y: f64) -> Result<([usize; 4], [f64; 4])> {
        let l = self.half_width;
        let eps = 1e-12 * l;
        if !(x >= -l - eps && x <= l + eps && y >= -l - eps && y <= l + eps) {
            return Err(AetError::OutsideGrid { x, y, half_width: l });
        }
        let h = self.spacing();
        let last = self.points - 2;
        let fx = ((x + l) / h).clamp(0.0, (self.points - 1) as f64);
        let fy = ((y + l) / h).clamp(0.0, (self.points - 1) as f64);
        let ix = (fx.floor() as usize).min(last);
        let iy = (fy.floor() as usize).min(last);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        Ok((
            [
                self.index(ix, iy),
                self.index(ix + 1, iy),
                self.index(ix, iy + 1),
                self.index(ix + 1, iy + 1),
            ],
            [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty],
        ))
    }

    /// Bilinear interpolation of `values` (length `len()`) at `(x, y)`.
    pub fn interpolate(&self, values: &[f64], x: f64, y: f64) -> Result<f64> {
        let (idx, w) = self.stencil(x, y)?;
        Ok((0..4).map(|k| w[k] * values[idx[k]]).sum())
    }

    /// Samples `f` at every grid point.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.points {
            let y = self.coordinate(iy);
            for ix in 0..self.points {
                out.push(f(self.coordinate(ix), y));
            }
        }
        out
    }
}

/// Precomputed bilinear stencils from a grid to every node of a mesh.
#[derive(Debug, Clone)]
pub struct GridToMesh {
    stencils: Vec<([usize; 4], [f64; 4])>,
}

impl GridToMesh {
    pub fn new(grid: &CartesianGrid, mesh: &TriangleMesh) -> Result<Self> {
        let stencils = mesh
            .nodes()
            .iter()
            .map(|&[x, y]| grid.stencil(x, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stencils })
    }

    pub fn apply_into(&self, values: &[f64], out: &mut [f64]) {
        for (o, (idx, w)) in out.iter_mut().zip(&self.stencils) {
            *o = w[0] * values[idx[0]] + w[1] * values[idx[1]] + w[2] * values[idx[2]] + w[3] * values[idx[3]];
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.stencils.len()];
        self.apply_into(values, &mut out);
        out
    }
}

/// Bilinear interpolation of a grid field at every mesh node.
pub fn interpolate_grid_to_mesh(grid: &CartesianGrid, values: &[f64], mesh: &TriangleMesh) -> Result<NodalField> {
    if values.len() != grid.len() {
        return Err(AetError::Shape(format!(
            "grid field has {} values, grid has {}",
            values.len(),
            grid.len()
        )));
    }
    Ok(NodalField::new(GridToMesh::new(grid, mesh)?.apply(values)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn reproduces_constants_and_linears() {
        let grid = CartesianGrid::new(1.6, 1.1, 65).unwrap();
        let mesh = generate_disk_mesh(1.0, 400).unwrap();
        let five = interpolate_grid_to_mesh(&grid, &vec![5.0; grid.len()], &mesh).unwrap();
        assert!(five.iter().all(|v| (v - 5.0).abs() < 1e-14));
        let x1 = grid.sample(|x, _| x);
        let nodal = interpolate_grid_to_mesh(&grid, &x1, &mesh).unwrap();
        for (v, p) in nodal.iter().zip(mesh.nodes()) {
            assert!((v - p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_refinement() {
        let mesh = generate_disk_mesh(1.0, 800).unwrap();
        let f = |x: f64, y: f64| (-(x * x + 2.0 * y * y) / 0.3).exp();
        let err = |n: usize| {
            let grid = CartesianGrid::new(1.6, 1.1, n).unwrap();
            let v = interpolate_grid_to_mesh(&grid, &grid.sample(f), &mesh).unwrap();
            v.iter()
                .zip(mesh.nodes())
                .map(|(v, p)| (v - f(p[0], p[1])).abs())
                .fold(0.0, f64::max)
        };
        let coarse = err(33);
        let fine = err(65);
        let ratio = coarse / fine;
        assert!(ratio > 3.0 && ratio < 5.5, "ratio {ratio}");
    }

    #[test]
    fn outside_points_fail() {
        let grid = CartesianGrid::new(0.5, 0.4, 11).unwrap();
        let mesh = generate_disk_mesh(1.0, 30).unwrap();
        assert!(matches!(
            interpolate_grid_to_mesh(&grid, &vec![0.0; grid.len()], &mesh),
            Err(AetError::OutsideGrid { .. })
        ));
        assert!(CartesianGrid::new(1.0, 1.2, 10).is_err());
    }
}
