//! Image metrics on nodal fields: region means, super-level components,
//! overlap with a disk, angular harmonics and rasterization.

use crate::fem::lumped_mass;
use crate::mesh::TriangleMesh;
use crate::sampler::Disk;

/// Lumped-mass weighted mean of `f` over the nodes where `select` holds.
pub fn region_mean<F: Fn(f64, f64) -> bool>(mesh: &TriangleMesh, f: &[f64], select: F) -> f64 {
    let m = lumped_mass(mesh);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &[x, y]) in mesh.nodes().iter().enumerate() {
        if select(x, y) {
            num += m[i] * f[i];
            den += m[i];
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Node indices of the largest (by lumped area) edge-connected component of `{f > level}`.
pub fn largest_superlevel_component(mesh: &TriangleMesh, f: &[f64], level: f64) -> Vec<usize> {
    let m = lumped_mass(mesh);
    let neighbors = mesh.neighbors();
    let mut seen = vec![false; f.len()];
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    for start in 0..f.len() {
        if seen[start] || !(f[start] > level) {
            continue;
        }
        let mut component = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < component.len() {
            for &j in &neighbors[component[k]] {
                if !seen[j] && f[j] > level {
                    seen[j] = true;
                    component.push(j);
                }
            }
            k += 1;
        }
        let area: f64 = component.iter().map(|&i| m[i]).sum();
        if area > best.0 {
            best = (area, component);
        }
    }
    best.1
}

/// Lumped-area centroid of a node set.
pub fn centroid(mesh: &TriangleMesh, nodes: &[usize]) -> Option<[f64; 2]> {
    let m = lumped_mass(mesh);
    let mut acc = [0.0; 3];
    for &i in nodes {
        let [x, y] = mesh.nodes()[i];
        acc[0] += m[i] * x;
        acc[1] += m[i] * y;
        acc[2] += m[i];
    }
    (acc[2] > 0.0).then(|| [acc[0] / acc[2], acc[1] / acc[2]])
}

/// Lumped-area Jaccard index between a node set and a disk.
pub fn jaccard_with_disk(mesh: &TriangleMesh, nodes: &[usize], disk: Disk) -> f64 {
    let m = lumped_mass(mesh);
    let mut in_set = vec![false; mesh.node_count()];
    nodes.iter().for_each(|&i| in_set[i] = true);
    let (mut inter, mut union) = (0.0, 0.0);
    for (i, &[x, y]) in mesh.nodes().iter().enumerate() {
        let d = disk.contains(x, y);
        if in_set[i] && d {
            inter += m[i];
        }
        if in_set[i] || d {
            union += m[i];
        }
    }
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Energy `|c_k|²` of angular harmonics `k = 0..=max_k` of `f` on the annulus
/// `r_lo ≤ r ≤ r_hi`, averaged over radii. The field is interpolated on a polar
/// grid so the mesh's own ring structure does not alias into the spectrum.
pub fn angular_spectrum(mesh: &TriangleMesh, f: &[f64], r_lo: f64, r_hi: f64, max_k: usize) -> Vec<f64> {
    let radii = 24;
    let angles = (8 * max_k).max(64);
    let mut points = Vec::with_capacity(radii * angles);
    for i in 0..radii {
        let r = r_lo + (r_hi - r_lo) * (i as f64 + 0.5) / radii as f64;
        for j in 0..angles {
            let t = 2.0 * std::f64::consts::PI * j as f64 / angles as f64;
            points.push([r * t.cos(), r * t.sin()]);
        }
    }
    let values = PointLocator::new(mesh).interpolate(f, &points);
    let mut energy = vec![0.0; max_k + 1];
    for ring in values.chunks(angles) {
        for (k, e) in energy.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in ring.iter().enumerate() {
                if v.is_finite() {
                    let a = 2.0 * std::f64::consts::PI * (k * j) as f64 / angles as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
            }
            *e += (re * re + im * im) / (angles * angles * radii) as f64;
        }
    }
    energy
}

/// Bucket grid over triangle bounding boxes for point location.
pub struct PointLocator<'a> {
    mesh: &'a TriangleMesh,
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let cells = ((mesh.triangles().len() as f64).sqrt().ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cells * cells];
        let r = mesh.radius();
        let cell = |v: f64| (((v + r) / (2.0 * r) * cells as f64).floor().max(0.0) as usize).min(cells - 1);
        let nodes = mesh.nodes();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let ps = tri.map(|i| nodes[i]);
            let (x0, x1) = (ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
            for cy in cell(y0)..=cell(y1) {
                for cx in cell(x0)..=cell(x1) {
                    buckets[cy * cells + cx].push(t);
                }
            }
        }
        Self { mesh, cells, buckets }
    }

    /// P1 interpolant of `f` at each point; NaN outside the mesh.
    pub fn interpolate(&self, f: &[f64], points: &[[f64; 2]]) -> Vec<f64> {
        let r = self.mesh.radius();
        let nodes = self.mesh.nodes();
        points
            .iter()
            .map(|&[x, y]| {
                if x.abs() > r || y.abs() > r {
                    return f64::NAN;
                }
                let cell = |v: f64| (((v + r) / (2.0 * r) * self.cells as f64).floor().max(0.0) as usize).min(self.cells - 1);
                for &t in &self.buckets[cell(y) * self.cells + cell(x)] {
                    let tri = self.mesh.triangles()[t];
                    let [a, b, c] = tri.map(|i| nodes[i]);
                    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                    let l1 = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y - a[1])) / det;
                    let l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
                    let l0 = 1.0 - l1 - l2;
                    if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                        return l0 * f[tri[0]] + l1 * f[tri[1]] + l2 * f[tri[2]];
                    }
                }
                f64::NAN
            })
            .collect()
    }
}

/// Samples a P1 field on a `pixels × pixels` raster of `[−R, R]²`; pixels
/// outside the mesh are NaN.
pub fn rasterize(mesh: &TriangleMesh, f: &[f64], pixels: usize) -> Vec<f64> {
    let r = mesh.radius();
    let step = 2.0 * r / (pixels - 1).max(1) as f64;
    let mut out = vec![f64::NAN; pixels * pixels];
    let nodes = mesh.nodes();
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| nodes[i]);
        let xmin = a[0].min(b[0]).min(c[0]);
        let xmax = a[0].max(b[0]).max(c[0]);
        let ymin = a[1].min(b[1]).min(c[1]);
        let ymax = a[1].max(b[1]).max(c[1]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let i0 = (((xmin + r) / step).ceil().max(0.0)) as usize;
        let i1 = (((xmax + r) / step).floor() as isize).min(pixels as isize - 1);
        let j0 = (((ymin + r) / step).ceil().max(0.0)) as usize;
        let j1 = (((ymax + r) / step).floor() as isize).min(pixels as isize - 1);
        for j in j0 as isize..=j1 {
            for i in i0 as isize..=i1 {
                let x = -r + i as f64 * step;
                let y = -r + j as f64 * step;
                let l1 = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y - a[1])) / det;
                let l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                    // Row 0 is the top of the image.
                    let row = pixels - 1 - j as usize;
                    out[row * pixels + i as usize] = l0 * f[tri[0]] + l1 * f[tri[1]] + l2 * f[tri[2]];
                }
            }
        }
    }
    out
}

/// Linear least-squares fit `y = a + b·x`; returns `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Slope and R² of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, _, r2) = linear_fit(&lx, &ly);
    (slope, r2)
}
