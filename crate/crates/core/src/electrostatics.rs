//! Neumann conductivity problem, power densities and boundary power signals.
//!
//! The pure Neumann system is made nonsingular by grounding one node; the
//! solution is then shifted so its boundary trace has zero mean, which gives
//! the same discrete solution as a Lagrange-multiplier formulation.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cholesky::{CholeskyFactor, SymbolicCholesky};
use crate::error::{AetError, Result};
use crate::fem::{assemble_mass, element_gradients, stiffness_nodal, stiffness_product};
use crate::field::NodalField;
use crate::io::{read_text, write_text};
use crate::mesh::TriangleMesh;
use crate::sparse::{dot, norm2, SparseSymmetricMatrix};
use crate::wave::WaveRecord;

/// Smallest conductivity accepted by the forward solver.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Boundary flux density `f` with `∫_∂Ω f ds = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurrent {
    id: String,
    values: Vec<f64>,
}

impl BoundaryCurrent {
    /// Uses nodal `values` (interior entries are ignored and zeroed).
    pub fn new(mesh: &TriangleMesh, id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(AetError::Shape(format!(
                "boundary current has {} values for {} nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        let mut trace = vec![0.0; values.len()];
        for &b in mesh.boundary_nodes() {
            trace[b] = values[b];
        }
        let b = mesh.boundary_mass_vector();
        let mean = dot(&b, &trace);
        let scale: f64 = b.iter().zip(&trace).map(|(w, v)| w * v.abs()).sum();
        if mean.abs() > 1e-10 * scale.max(1.0) {
            return Err(AetError::InvalidInput(format!(
                "boundary current integrates to {mean:e}; it must have zero mean"
            )));
        }
        Ok(Self { id: id.into(), values: trace })
    }

    /// Samples `f` on the boundary and removes its boundary mean.
    pub fn projected<F: Fn(f64, f64) -> f64>(mesh: &TriangleMesh, id: impl Into<String>, f: F) -> Self {
        let mut values = vec![0.0; mesh.node_count()];
        for &b in mesh.boundary_nodes() {
            let [x, y] = mesh.nodes()[b];
            values[b] = f(x, y);
        }
        let bm = mesh.boundary_mass_vector();
        let mean = dot(&bm, &values) / mesh.boundary_length();
        for &b in mesh.boundary_nodes() {
            values[b] -= mean;
        }
        Self { id: id.into(), values }
    }

    /// The three currents `x₁`, `x₂` and `(x₁ + x₂)/√2`.
    pub fn standard_set(mesh: &TriangleMesh) -> Vec<Self> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![
            Self::projected(mesh, "x1", |x, _| x),
            Self::projected(mesh, "x2", |_, y| y),
            Self::projected(mesh, "diag", move |x, y| s * (x + y)),
        ]
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Nodal values, zero away from the boundary.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F_i = ∫_∂Ω f φ_i ds`.
    pub fn load(&self, mesh: &TriangleMesh) -> Vec<f64> {
        mesh.boundary_load(&self.values)
    }
}

/// Factorization of the grounded Neumann stiffness matrix for one conductivity.
#[derive(Debug, Clone)]
pub struct NeumannSolver {
    factor: CholeskyFactor,
    ground: usize,
    boundary_mass: Vec<f64>,
    boundary_length: f64,
}

impl NeumannSolver {
    pub fn new(mesh: &TriangleMesh, sigma: &NodalField) -> Result<Self> {
        check_sigma(mesh, sigma)?;
        Self::from_stiffness(mesh, stiffness_nodal(mesh, sigma))
    }

    /// Grounds and factors an assembled Neumann stiffness matrix.
    pub fn from_stiffness(mesh: &TriangleMesh, k: SparseSymmetricMatrix) -> Result<Self> {
        Self::from_stiffness_with(mesh, k, &mesh.symbolic_cholesky())
    }

    /// Solves `K u = load` with `u[ground] = 0`; `load` must sum to zero.
    pub fn solve_grounded(&self, load: &[f64]) -> Vec<f64> {
        let mut rhs = load.to_vec();
        rhs[self.ground] = 0.0;
        self.factor.solve(&rhs)
    }

    /// Neumann solution with zero-mean boundary trace.
    pub fn solve_load(&self, load: &[f64]) -> Vec<f64> {
        let mut u = self.solve_grounded(load);
        self.gauge(&mut u);
        u
    }

    /// Shifts `u` by a constant so that `∫_∂Ω u ds = 0`.
    pub fn gauge(&self, u: &mut [f64]) {
        let mean = dot(&self.boundary_mass, u) / self.boundary_length;
        for v in u.iter_mut() {
            *v -= mean;
        }
    }

    pub fn solve(&self, mesh: &TriangleMesh, f: &BoundaryCurrent) -> Vec<f64> {
        self.solve_load(&f.load(mesh))
    }
}

fn ground_node(mesh: &TriangleMesh) -> usize {
    // Node nearest the center: far from the boundary data.
    mesh.nodes()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1[0].hypot(a.1[1])).total_cmp(&b.1[0].hypot(b.1[1])))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn check_sigma(mesh: &TriangleMesh, sigma: &NodalField) -> Result<()> {
    if sigma.len() != mesh.node_count() {
        return Err(AetError::Shape(format!(
            "conductivity has {} values for {} nodes",
            sigma.len(),
            mesh.node_count()
        )));
    }
    if let Some((i, v)) = sigma.iter().enumerate().find(|(_, v)| !(**v >= SIGMA_FLOOR)) {
        return Err(AetError::InvalidInput(format!(
            "conductivity {v} at node {i} is below the floor {SIGMA_FLOOR:e}"
        )));
    }
    Ok(())
}

/// Potential `u` for conductivity `σ` and current `f`, gauged to a zero-mean trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution {
    pub u: NodalField,
    pub sigma: NodalField,
    pub current_id: String,
}

impl PotentialSolution {
    /// Boundary trace `g` (zero away from the boundary).
    pub fn trace(&self, mesh: &TriangleMesh) -> Vec<f64> {
        let mut g = vec![0.0; self.u.len()];
        for &b in mesh.boundary_nodes() {
            g[b] = self.u[b];
        }
        g
    }

    /// `∫_∂Ω g ds`.
    pub fn trace_integral(&self, mesh: &TriangleMesh) -> f64 {
        dot(&mesh.boundary_mass_vector(), &self.trace(mesh))
    }
}

/// Solves `−∇·σ∇u = 0`, `σ∂_ν u = f`, `∫_∂Ω u = 0`.
pub fn solve_neumann(mesh: &TriangleMesh, sigma: &NodalField, f: &BoundaryCurrent) -> Result<PotentialSolution> {
    let solver = NeumannSolver::new(mesh, sigma)?;
    Ok(PotentialSolution {
        u: NodalField::new(solver.solve(mesh, f)),
        sigma: sigma.clone(),
        current_id: f.id().to_string(),
    })
}

/// Load vector `r_i = Σ_T |∇u_T|² ∫_T σ φ_i`, i.e. `M h` for the projected power density.
pub fn power_density_load(mesh: &TriangleMesh, sigma: &[f64], u: &[f64]) -> Vec<f64> {
    let grads = element_gradients(mesh, u);
    let mut r = vec![0.0; mesh.node_count()];
    for ((tri, area), g) in mesh.triangles().iter().zip(mesh.areas()).zip(&grads) {
        let q = g[0] * g[0] + g[1] * g[1];
        let s = sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]];
        for &i in tri {
            r[i] += q * area * (sigma[i] + s) / 12.0;
        }
    }
    r
}

/// `H = σ|∇u|²`, L²-projected onto P1 with a prepared mass factorization.
pub fn power_density_with(mesh: &TriangleMesh, mass_factor: &CholeskyFactor, sigma: &[f64], u: &[f64]) -> NodalField {
    NodalField::new(mass_factor.solve(&power_density_load(mesh, sigma, u)))
}

/// `H = σ|∇u|²`, L²-projected onto P1.
pub fn power_density(mesh: &TriangleMesh, sigma: &NodalField, u: &PotentialSolution) -> Result<NodalField> {
    check_sigma(mesh, sigma)?;
    if u.u.len() != mesh.node_count() {
        return Err(AetError::Shape("potential does not match the mesh".into()));
    }
    let mass = assemble_mass(mesh, None)?;
    let factor = mesh.symbolic_cholesky().factor(&mass, 0.0)?;
    Ok(power_density_with(mesh, &factor, sigma, &u.u))
}

/// Time series `I(t_i)` for one (boundary current, source) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSignal {
    pub current_id: String,
    pub source: usize,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl PowerSignal {
    pub fn time(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = format!("# signal current={} source={} dt={}\nt,I\n", self.current_id, self.source, self.dt);
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{:e},{:e}\n", self.time(i), v));
        }
        write_text(path, &s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let fmt = |msg: String| AetError::Format {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| fmt("empty file".into()))?;
        let fields = crate::io::parse_header(path, head.trim_start_matches('#').trim(), "signal")?;
        let current_id = fields.get("current").cloned().ok_or_else(|| fmt("missing current id".into()))?;
        let source = crate::io::header_value(path, &fields, "source")?;
        let dt = crate::io::header_value(path, &fields, "dt")?;
        if lines.next().map(str::trim) != Some("t,I") {
            return Err(fmt("missing 't,I' column header".into()));
        }
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let (_, v) = line.split_once(',').ok_or_else(|| fmt(format!("line {}: expected 't,I'", k + 3)))?;
            values.push(v.trim().parse().map_err(|_| fmt(format!("line {}: bad value '{v}'", k + 3)))?);
        }
        Ok(Self {
            current_id,
            source,
            dt,
            values,
        })
    }
}

/// Both evaluations of the exact signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSignal {
    /// `∫_∂Ω f (g_* − g) ds`.
    pub boundary_form: PowerSignal,
    /// `−η ∫ p σ ∇u·∇u_*`.
    pub interior_form: Vec<f64>,
    /// Largest disagreement relative to `max |I|`.
    pub relative_mismatch: f64,
}

/// Relative tolerance between the two forms of the exact signal.
pub const FORM_AGREEMENT: f64 = 1e-6;

/// Exact signal with `σ_* = σ(1 + ηp(·,t_i))` at every recorded time.
pub fn boundary_power_signal(
    mesh: &TriangleMesh,
    sigma: &NodalField,
    eta: f64,
    wave: &WaveRecord,
    f: &BoundaryCurrent,
) -> Result<ExactSignal> {
    let records: Vec<usize> = (0..wave.samples()).collect();
    boundary_power_signal_at(mesh, sigma, eta, wave, f, &records)
}

/// As [`boundary_power_signal`] but only at the listed record indices.
pub fn boundary_power_signal_at(
    mesh: &TriangleMesh,
    sigma: &NodalField,
    eta: f64,
    wave: &WaveRecord,
    f: &BoundaryCurrent,
    records: &[usize],
) -> Result<ExactSignal> {
    if !(eta > 0.0) {
        return Err(AetError::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if wave.node_count() != mesh.node_count() {
        return Err(AetError::Shape("wave record does not match the mesh".into()));
    }
    check_sigma(mesh, sigma)?;
    for &i in records {
        if i >= wave.samples() {
            return Err(AetError::InvalidInput(format!("record {i} out of range")));
        }
        if let Some(node) = wave.row(i).iter().position(|p| !(1.0 + eta * p > 0.0)) {
            return Err(AetError::NonPositiveConductivity { node, record: i });
        }
    }
    let base = NeumannSolver::new(mesh, sigma)?;
    let load = f.load(mesh);
    let u = base.solve_load(&load);
    let symbolic: Arc<SymbolicCholesky> = mesh.symbolic_cholesky();
    let pairs: Vec<(f64, f64)> = records
        .par_iter()
        .map(|&i| -> Result<(f64, f64)> {
            let p = wave.row(i);
            if p.iter().all(|v| *v == 0.0) {
                return Ok((0.0, 0.0));
            }
            let one_plus: Vec<f64> = p.iter().map(|v| 1.0 + eta * v).collect();
            let k_star = stiffness_product(mesh, sigma, &one_plus);
            let k_sp = stiffness_product(mesh, sigma, p);
            let solver = NeumannSolver::from_stiffness_with(mesh, k_star, &symbolic)?;
            // δ = u_* − u solves K_* δ = −η K_{σp} u.
            let rhs: Vec<f64> = k_sp.mul_vec(&u).iter().map(|v| -eta * v).collect();
            let delta = solver.solve_grounded(&rhs);
            let boundary = dot(&load, &delta);
            let u_star: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let interior = -eta * dot(&u, &k_sp.mul_vec(&u_star));
            Ok((boundary, interior))
        })
        .collect::<Result<_>>()?;
    let boundary: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let interior: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let peak = boundary.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mismatch = boundary
        .iter()
        .zip(&interior)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let relative_mismatch = if peak > 0.0 { mismatch / peak } else { mismatch };
    if relative_mismatch > FORM_AGREEMENT {
        return Err(AetError::Pipeline(format!(
            "boundary and interior forms of the power signal disagree by {relative_mismatch:e}"
        )));
    }
    let dt = if records.len() > 1 {
        wave.dt() * (records[1] - records[0]) as f64
    } else {
        wave.dt()
    };
    Ok(ExactSignal {
        boundary_form: PowerSignal {
            current_id: f.id().to_string(),
            source: wave.source(),
            dt,
            values: boundary,
        },
        interior_form: interior,
        relative_mismatch,
    })
}

impl NeumannSolver {
    fn from_stiffness_with(
        mesh: &TriangleMesh,
        mut k: SparseSymmetricMatrix,
        symbolic: &Arc<SymbolicCholesky>,
    ) -> Result<Self> {
        let ground = ground_node(mesh);
        let scale = k.get(ground, ground);
        k.ground(ground);
        // Keep the grounded pivot on the scale of its neighbours.
        k.set_diagonal(ground, scale);
        Ok(Self {
            factor: symbolic.factor(&k, 0.0)?,
            ground,
            boundary_mass: mesh.boundary_mass_vector(),
            boundary_length: mesh.boundary_length(),
        })
    }
}

/// Linearized signal `I(t_i) = −η ∫ p(·,t_i) H = −η p_iᵀ M h`.
pub fn linearized_power_signal(
    mass: &SparseSymmetricMatrix,
    h: &NodalField,
    eta: f64,
    wave: &WaveRecord,
    current_id: &str,
) -> Result<PowerSignal> {
    if wave.node_count() != mass.dim() || h.len() != mass.dim() {
        return Err(AetError::Shape("wave, power density and mass matrix disagree in size".into()));
    }
    let mh = mass.mul_vec(h);
    Ok(PowerSignal {
        current_id: current_id.to_string(),
        source: wave.source(),
        dt: wave.dt(),
        values: (0..wave.samples()).map(|i| -eta * dot(wave.row(i), &mh)).collect(),
    })
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff) / norm2(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_stiffness;
    use crate::mesh::generate_disk_mesh;

    fn rel_l2(mesh: &TriangleMesh, a: &[f64], b: &[f64]) -> f64 {
        let m = assemble_mass(mesh, None).unwrap();
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        (m.quadratic_form(&d) / m.quadratic_form(b)).sqrt()
    }

    #[test]
    fn linear_potential_for_unit_conductivity() {
        let mesh = generate_disk_mesh(1.0, 1500).unwrap();
        let sigma = NodalField::constant(mesh.node_count(), 1.0);
        let f = BoundaryCurrent::projected(&mesh, "x1", |x, _| x);
        let sol = solve_neumann(&mesh, &sigma, &f).unwrap();
        let x1 = mesh.nodal(|x, _| x);
        assert!(rel_l2(&mesh, &sol.u, &x1) < 0.01);
        assert!(sol.trace_integral(&mesh).abs() < 1e-8);
        let k = assemble_stiffness(&mesh, &sigma).unwrap();
        let load = f.load(&mesh);
        let res: Vec<f64> = k.mul_vec(&sol.u).iter().zip(&load).map(|(a, b)| a - b).collect();
        assert!(norm2(&res) < 1e-10 * norm2(&load));
        let h = power_density(&mesh, &sigma, &sol).unwrap();
        assert!(rel_l2(&mesh, &h, &vec![1.0; mesh.node_count()]) < 0.02);
    }

    #[test]
    fn zero_current_and_conductivity_scaling() {
        let mesh = generate_disk_mesh(1.0, 600).unwrap();
        let zero = BoundaryCurrent::new(&mesh, "0", vec![0.0; mesh.node_count()]).unwrap();
        let one = NodalField::constant(mesh.node_count(), 1.0);
        let u0 = solve_neumann(&mesh, &one, &zero).unwrap();
        assert!(u0.u.iter().all(|v| *v == 0.0));
        let h0 = power_density(&mesh, &one, &u0).unwrap();
        assert!(h0.iter().all(|v| *v == 0.0));
        let f = BoundaryCurrent::projected(&mesh, "x1", |x, _| x);
        let u1 = solve_neumann(&mesh, &one, &f).unwrap();
        let u2 = solve_neumann(&mesh, &NodalField::constant(mesh.node_count(), 2.0), &f).unwrap();
        for (a, b) in u1.u.iter().zip(u2.u.iter()) {
            assert!((a - 2.0 * b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = generate_disk_mesh(1.0, 200).unwrap();
        let biased = mesh.nodal(|x, _| x + 0.3);
        assert!(BoundaryCurrent::new(&mesh, "b", biased).is_err());
        let f = BoundaryCurrent::projected(&mesh, "x1", |x, _| x);
        let mut sigma = NodalField::constant(mesh.node_count(), 1.0);
        sigma[3] = 0.0;
        assert!(solve_neumann(&mesh, &sigma, &f).is_err());
    }

    #[test]
    fn reciprocity_and_gauge_invariance() {
        let mesh = generate_disk_mesh(1.0, 700).unwrap();
        let sigma = NodalField::new(mesh.nodal(|x, y| 1.0 + 0.5 * (-(x * x + (y - 0.375).powi(2)) / 0.05).exp()));
        let f1 = BoundaryCurrent::projected(&mesh, "a", |x, y| x * x - y);
        let f2 = BoundaryCurrent::projected(&mesh, "b", |x, y| (3.0 * x).sin() + y);
        let g1 = solve_neumann(&mesh, &sigma, &f1).unwrap().trace(&mesh);
        let g2 = solve_neumann(&mesh, &sigma, &f2).unwrap().trace(&mesh);
        let a = mesh.boundary_inner(f1.values(), &g2);
        let b = mesh.boundary_inner(f2.values(), &g1);
        assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()));
        let shifted: Vec<f64> = g2.iter().map(|v| v + 7.0).collect();
        let mut shifted_trace = vec![0.0; shifted.len()];
        for &i in mesh.boundary_nodes() {
            shifted_trace[i] = shifted[i];
        }
        let c = mesh.boundary_inner(f1.values(), &shifted_trace);
        assert!((a - c).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn zero_wave_gives_zero_signal() {
        let mesh = generate_disk_mesh(1.0, 300).unwrap();
        let sigma = NodalField::constant(mesh.node_count(), 1.0);
        let f = BoundaryCurrent::projected(&mesh, "x1", |x, _| x);
        let wave = WaveRecord::new(0, 0.1, mesh.node_count(), vec![0.0; 4 * mesh.node_count()]).unwrap();
        let sig = boundary_power_signal(&mesh, &sigma, 1e-3, &wave, &f).unwrap();
        assert_eq!(sig.boundary_form.values, vec![0.0; 4]);
    }

    #[test]
    fn negative_perturbed_conductivity_is_rejected() {
        let mesh = generate_disk_mesh(1.0, 100).unwrap();
        let sigma = NodalField::constant(mesh.node_count(), 1.0);
        let f = BoundaryCurrent::projected(&mesh, "x1", |x, _| x);
        let mut values = vec![0.0; 2 * mesh.node_count()];
        values[mesh.node_count() + 5] = -2000.0;
        let wave = WaveRecord::new(0, 0.1, mesh.node_count(), values).unwrap();
        assert!(matches!(
            boundary_power_signal(&mesh, &sigma, 1e-3, &wave, &f),
            Err(AetError::NonPositiveConductivity { node: 5, record: 1 })
        ));
    }

    #[test]
    fn signal_file_round_trip() {
        let sig = PowerSignal {
            current_id: "x1".into(),
            source: 7,
            dt: 0.02,
            values: vec![0.0, 1.5e-4, -2.25e-5],
        };
        let dir = std::env::temp_dir().join(format!("aet-sig-{}", std::process::id()));
        let path = dir.join("s.csv");
        sig.write(&path).unwrap();
        assert_eq!(PowerSignal::read(&path).unwrap(), sig);
        let _ = std::fs::remove_dir_all(dir);
    }
}
