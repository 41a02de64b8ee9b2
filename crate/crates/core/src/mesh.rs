//! Unstructured P1 triangulation of the disk.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::cholesky::SymbolicCholesky;
use crate::error::{AetError, Result};
use crate::io::{read_text, write_text};
use crate::sparse::SparsityPattern;

/// Tolerance for boundary nodes lying on the circle.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;
/// Required minimum interior angle of generated meshes.
pub const MIN_ANGLE_DEGREES: f64 = 20.0;
const SMOOTHING_SWEEPS: usize = 4;
const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    radius: f64,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    boundary_edges: Vec<[usize; 2]>,
    areas: Vec<f64>,
    /// Gradients of the three barycentric basis functions on each triangle.
    gradients: Vec<[[f64; 2]; 3]>,
    pattern: Arc<SparsityPattern>,
    symbolic: OnceLock<Arc<SymbolicCholesky>>,
}

impl TriangleMesh {
    /// Builds a mesh from raw parts, orienting triangles counter-clockwise and
    /// checking the invariants (positive areas, conforming edges, boundary on the circle).
    pub fn new(
        radius: f64,
        nodes: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary_nodes: Vec<usize>,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(AetError::Mesh(format!("radius must be positive, got {radius}")));
        }
        let n = nodes.len();
        for tri in triangles.iter_mut() {
            if tri.iter().any(|&i| i >= n) {
                return Err(AetError::Mesh(format!("triangle {tri:?} references a missing node")));
            }
            if signed_double_area(&nodes, *tri) < 0.0 {
                tri.swap(1, 2);
            }
            if !(signed_double_area(&nodes, *tri) > 0.0) {
                return Err(AetError::Mesh(format!("degenerate triangle {tri:?}")));
            }
        }
        if boundary_nodes.len() < 3 {
            return Err(AetError::Mesh("boundary needs at least 3 nodes".into()));
        }
        for &b in &boundary_nodes {
            let [x, y] = nodes[b];
            if ((x * x + y * y).sqrt() - radius).abs() > BOUNDARY_TOLERANCE * radius.max(1.0) {
                return Err(AetError::Mesh(format!("boundary node {b} is off the circle")));
            }
        }
        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(AetError::Mesh(format!("edge {e:?} shared by {c} triangles")));
        }
        let boundary_edges: Vec<[usize; 2]> = (0..boundary_nodes.len())
            .map(|k| [boundary_nodes[k], boundary_nodes[(k + 1) % boundary_nodes.len()]])
            .collect();
        let open_edges = edge_count.values().filter(|&&c| c == 1).count();
        if open_edges != boundary_edges.len()
            || boundary_edges
                .iter()
                .any(|&[a, b]| edge_count.get(&[a.min(b), a.max(b)]) != Some(&1))
        {
            return Err(AetError::Mesh(
                "open edges of the triangulation do not match the boundary polygon".into(),
            ));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut gradients = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [p0, p1, p2] = tri.map(|i| nodes[i]);
            let d = signed_double_area(&nodes, *tri);
            areas.push(0.5 * d);
            gradients.push([
                [(p1[1] - p2[1]) / d, (p2[0] - p1[0]) / d],
                [(p2[1] - p0[1]) / d, (p0[0] - p2[0]) / d],
                [(p0[1] - p1[1]) / d, (p1[0] - p0[0]) / d],
            ]);
        }
        let pattern = Arc::new(SparsityPattern::from_triangles(n, &triangles));
        Ok(Self {
            radius,
            nodes,
            triangles,
            boundary_nodes,
            boundary_edges,
            areas,
            gradients,
            pattern,
            symbolic: OnceLock::new(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn gradients(&self) -> &[[[f64; 2]; 3]] {
        &self.gradients
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Fill-reducing ordering and envelope shared by every factorization on this mesh.
    pub fn symbolic_cholesky(&self) -> Arc<SymbolicCholesky> {
        self.symbolic
            .get_or_init(|| Arc::new(SymbolicCholesky::new(self.pattern.clone())))
            .clone()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn is_boundary(&self) -> Vec<bool> {
        let mut flags = vec![false; self.node_count()];
        for &b in &self.boundary_nodes {
            flags[b] = true;
        }
        flags
    }

    /// `b_i = ∫_∂Ω φ_i ds`.
    pub fn boundary_mass_vector(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.node_count()];
        for &[i, j] in &self.boundary_edges {
            let len = self.edge_length(i, j);
            b[i] += 0.5 * len;
            b[j] += 0.5 * len;
        }
        b
    }

    /// `F_i = ∫_∂Ω f φ_i ds` for `f` given by nodal values (only boundary entries are read).
    pub fn boundary_load(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for &[i, j] in &self.boundary_edges {
            let len = self.edge_length(i, j);
            out[i] += len * (2.0 * f[i] + f[j]) / 6.0;
            out[j] += len * (f[i] + 2.0 * f[j]) / 6.0;
        }
        out
    }

    /// `∫_∂Ω f g ds` for piecewise-linear boundary traces.
    pub fn boundary_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let load = self.boundary_load(f);
        self.boundary_nodes.iter().map(|&i| load[i] * g[i]).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[i, j]| self.edge_length(i, j))
            .sum()
    }

    fn edge_length(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.nodes[i];
        let [xj, yj] = self.nodes[j];
        ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_min_angle(&self.nodes, *t))
            .fold(180.0, f64::min)
    }

    /// Nodal values of a function of position.
    pub fn nodal<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&[x, y]| f(x, y)).collect()
    }

    /// Node-adjacency lists (edges of the triangulation).
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        (0..self.node_count())
            .map(|i| self.pattern.row(i).iter().copied().filter(|&j| j != i).collect())
            .collect()
    }

    /// Writes the plain-text mesh file.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = format!(
            "nodes {} triangles {} boundary {}\n",
            self.node_count(),
            self.triangles.len(),
            self.boundary_nodes.len()
        );
        for [x, y] in &self.nodes {
            s.push_str(&format!("{x:e} {y:e}\n"));
        }
        for [a, b, c] in &self.triangles {
            s.push_str(&format!("{a} {b} {c}\n"));
        }
        for b in &self.boundary_nodes {
            s.push_str(&format!("{b}\n"));
        }
        write_text(path, &s)
    }

    /// Reads a mesh file; the disk radius is taken from the boundary nodes.
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let fmt = |msg: String| AetError::Format {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| fmt("empty file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "nodes" || h[2] != "triangles" || h[4] != "boundary" {
            return Err(fmt(format!("bad header '{header}'")));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| fmt(format!("{e}")));
        let (n, t, b) = (parse_usize(h[1])?, parse_usize(h[3])?, parse_usize(h[5])?);
        let mut next_fields = |count: usize| -> Result<Vec<String>> {
            let (i, line) = lines.next().ok_or_else(|| fmt("unexpected end of file".into()))?;
            let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if parts.len() != count {
                return Err(fmt(format!("line {}: expected {count} fields", i + 1)));
            }
            Ok(parts)
        };
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let p = next_fields(2)?;
            let x = p[0].parse::<f64>().map_err(|e| fmt(format!("{e}")))?;
            let y = p[1].parse::<f64>().map_err(|e| fmt(format!("{e}")))?;
            nodes.push([x, y]);
        }
        let mut triangles = Vec::with_capacity(t);
        for _ in 0..t {
            let p = next_fields(3)?;
            triangles.push([parse_usize(&p[0])?, parse_usize(&p[1])?, parse_usize(&p[2])?]);
        }
        let mut boundary = Vec::with_capacity(b);
        for _ in 0..b {
            let p = next_fields(1)?;
            boundary.push(parse_usize(&p[0])?);
        }
        let &first = boundary.first().ok_or_else(|| fmt("no boundary nodes".into()))?;
        let [x, y] = *nodes.get(first).ok_or_else(|| fmt("boundary index out of range".into()))?;
        TriangleMesh::new((x * x + y * y).sqrt(), nodes, triangles, boundary)
    }
}

fn signed_double_area(nodes: &[[f64; 2]], [a, b, c]: [usize; 3]) -> f64 {
    let [x0, y0] = nodes[a];
    let [x1, y1] = nodes[b];
    let [x2, y2] = nodes[c];
    (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
}

fn triangle_min_angle(nodes: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let mut worst = 180.0f64;
    for k in 0..3 {
        let p = nodes[tri[k]];
        let q = nodes[tri[(k + 1) % 3]];
        let r = nodes[tri[(k + 2) % 3]];
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let cos = (u[0] * v[0] + u[1] * v[1])
            / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
        worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
    }
    worst
}

/// Number of nodes on each concentric ring (ring 1 innermost), aiming at
/// `target` nodes including the center.
fn ring_layout(target: usize) -> Vec<usize> {
    let rest = target - 1;
    if rest <= 17 {
        return vec![rest];
    }
    let candidates = {
        let r = ((rest as f64) / 3.0).sqrt();
        [r.floor().max(1.0) as usize, r.ceil() as usize]
    };
    let layout = |rings: usize| -> Vec<usize> {
        let scale = rest as f64 / (3 * rings * (rings + 1)) as f64;
        let mut counts: Vec<usize> = (1..=rings)
            .map(|k| ((6 * k) as f64 * scale).round().max(3.0) as usize)
            .collect();
        // put the rounding remainder on the outer rings
        let mut total: usize = counts.iter().sum();
        let mut k = rings - 1;
        while total != rest {
            if total < rest {
                counts[k] += 1;
                total += 1;
            } else if counts[k] > 3 {
                counts[k] -= 1;
                total -= 1;
            }
            k = if k == 0 { rings - 1 } else { k - 1 };
        }
        counts
    };
    let aniso = |rings: usize| (rest as f64 / (3 * rings * (rings + 1)) as f64).ln().abs();
    let best = if aniso(candidates[0]) <= aniso(candidates[1]) {
        candidates[0]
    } else {
        candidates[1]
    };
    layout(best)
}

fn delaunay(points: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let pts: Vec<delaunator::Point> = points
        .iter()
        .map(|&[x, y]| delaunator::Point { x, y })
        .collect();
    let tri = delaunator::triangulate(&pts);
    tri.triangles
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect()
}

/// Deterministic disk mesh: polar ring seeding, Delaunay triangulation and
/// area-weighted centroid (Lloyd-type) smoothing of interior nodes.
pub fn generate_disk_mesh(radius: f64, target_nodes: usize) -> Result<TriangleMesh> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(AetError::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    if target_nodes < 4 {
        return Err(AetError::InvalidInput(format!(
            "target_nodes must be at least 4, got {target_nodes}"
        )));
    }
    if target_nodes > MAX_NODES {
        return Err(AetError::Mesh(format!(
            "target of {target_nodes} nodes is beyond the supported {MAX_NODES}"
        )));
    }
    let rings = ring_layout(target_nodes);
    let ring_count = rings.len();
    let mut points = vec![[0.0, 0.0]];
    let mut boundary = Vec::new();
    for (k, &count) in rings.iter().enumerate() {
        let r = radius * (k + 1) as f64 / ring_count as f64;
        // golden-ratio phase shift avoids cocircular quadruples between rings
        let phase = ((k as f64) * 0.618_033_988_75).fract() * 2.0 * PI / count as f64;
        for j in 0..count {
            let a = phase + 2.0 * PI * j as f64 / count as f64;
            if k + 1 == ring_count {
                boundary.push(points.len());
            }
            points.push([r * a.cos(), r * a.sin()]);
        }
    }
    let is_boundary = {
        let mut f = vec![false; points.len()];
        boundary.iter().for_each(|&b| f[b] = true);
        f
    };
    let mut triangles = delaunay(&points);
    for _ in 0..SMOOTHING_SWEEPS {
        let mut acc = vec![[0.0f64; 3]; points.len()];
        for &[a, b, c] in &triangles {
            let area = 0.5 * signed_double_area(&points, [a, b, c]).abs();
            let cx = (points[a][0] + points[b][0] + points[c][0]) / 3.0;
            let cy = (points[a][1] + points[b][1] + points[c][1]) / 3.0;
            for v in [a, b, c] {
                acc[v][0] += area * cx;
                acc[v][1] += area * cy;
                acc[v][2] += area;
            }
        }
        for (i, p) in points.iter_mut().enumerate() {
            if !is_boundary[i] && acc[i][2] > 0.0 && i != 0 {
                *p = [acc[i][0] / acc[i][2], acc[i][1] / acc[i][2]];
            }
        }
        triangles = delaunay(&points);
    }
    let mesh = TriangleMesh::new(radius, points, triangles, boundary)?;
    let n = mesh.node_count() as f64;
    if (n - target_nodes as f64).abs() > 0.15 * target_nodes as f64 {
        return Err(AetError::Mesh(format!(
            "produced {n} nodes, not within 15% of the target {target_nodes}"
        )));
    }
    let min_angle = mesh.min_angle_degrees();
    if min_angle < MIN_ANGLE_DEGREES {
        return Err(AetError::Mesh(format!(
            "minimum angle {min_angle:.2} degrees is below {MIN_ANGLE_DEGREES}"
        )));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(mesh: &TriangleMesh) {
        assert!(mesh.areas().iter().all(|&a| a > 0.0));
        for &b in mesh.boundary_nodes() {
            let [x, y] = mesh.nodes()[b];
            assert!(((x * x + y * y).sqrt() - mesh.radius()).abs() < 1e-9);
        }
        let mut edges: HashMap<[usize; 2], usize> = HashMap::new();
        for t in mesh.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let boundary: usize = edges.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary, mesh.boundary_edges().len());
        assert!(edges.values().all(|&c| c == 1 || c == 2));
    }

    #[test]
    fn smallest_disk_mesh() {
        let mesh = generate_disk_mesh(1.0, 4).unwrap();
        assert_eq!(mesh.node_count(), 4);
        assert_eq!(mesh.triangles().len(), 3);
        assert_eq!(mesh.boundary_nodes().len(), 3);
        check_invariants(&mesh);
    }

    #[test]
    fn area_of_500_node_mesh_is_close_to_pi() {
        let mesh = generate_disk_mesh(1.0, 500).unwrap();
        check_invariants(&mesh);
        let rel = (mesh.total_area() - PI).abs() / PI;
        assert!(rel < 0.01, "{rel}");
        assert!(mesh.total_area() < PI);
        assert!(mesh.min_angle_degrees() >= MIN_ANGLE_DEGREES);
    }

    #[test]
    fn node_counts_track_target_over_a_range() {
        for target in [5, 7, 12, 19, 20, 30, 47, 100, 333, 1000, 2500] {
            let mesh = generate_disk_mesh(1.0, target).unwrap_or_else(|e| panic!("{target}: {e}"));
            check_invariants(&mesh);
            let n = mesh.node_count() as f64;
            assert!((n - target as f64).abs() <= 0.15 * target as f64, "{target} -> {n}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate_disk_mesh(1.0, 3).is_err());
        assert!(generate_disk_mesh(0.0, 100).is_err());
        assert!(generate_disk_mesh(-1.0, 100).is_err());
        assert!(generate_disk_mesh(1.0, MAX_NODES + 1).is_err());
    }

    #[test]
    fn deterministic_generation() {
        let a = generate_disk_mesh(1.0, 300).unwrap();
        let b = generate_disk_mesh(1.0, 300).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn boundary_mass_sums_to_perimeter() {
        let mesh = generate_disk_mesh(2.0, 400).unwrap();
        let total: f64 = mesh.boundary_mass_vector().iter().sum();
        assert!((total - mesh.boundary_length()).abs() < 1e-12);
        assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 0.01);
    }

    #[test]
    fn file_round_trip() {
        let mesh = generate_disk_mesh(1.0, 60).unwrap();
        let dir = std::env::temp_dir().join(format!("aet-mesh-{}", std::process::id()));
        let path = dir.join("mesh.txt");
        mesh.write(&path).unwrap();
        let back = TriangleMesh::read(&path).unwrap();
        assert_eq!(back.nodes(), mesh.nodes());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary_nodes(), mesh.boundary_nodes());
        let _ = std::fs::remove_dir_all(dir);
    }
}
