//! Conductivity from power densities by iteratively reweighted, linearized
//! L1–TV minimization.
//!
//! With `u = u[σ]` the Fréchet derivative of the projected power density is
//! `W = M⁻¹(M_u − 2 W_{σ,u} K_σ⁻¹ L_u)` where
//! `(M_u)_{ij} = Σ_T |∇u_T|² ∫_T φ_iφ_j`,
//! `(W_{σ,u} v)_i = Σ_T (∇u_T·∇v_T) ∫_T σφ_i` and
//! `(L_u κ)_i = Σ_T ∫_T κ ∇u_T·∇φ_i`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::cg::{pcg, CgOptions};
use crate::cholesky::CholeskyFactor;
use crate::electrostatics::{power_density_with, BoundaryCurrent, NeumannSolver};
use crate::error::{invalid, AetError, Result};
use crate::fem::{element_gradients, lumped_mass, mass_element_weighted, mass_nodal_weighted, stiffness_element};
use crate::field::NodalField;
use crate::io::write_text;
use crate::mesh::TriangleMesh;
use crate::sparse::{norm2, SparseSymmetricMatrix};

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
/// Largest number of step halvings in the line search.
const MAX_HALVINGS: usize = 20;
/// Outer iterations stop once `‖Δσ‖/‖σ‖` falls below this.
const UPDATE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaReconParams {
    /// TV weight γ in the objective.
    pub gamma_tv: f64,
    /// Smoothing `|r| ≈ √(r² + τ²)`.
    pub tau: f64,
    /// Shift of `K_{w0}` relative to its mean diagonal.
    pub eps_shift: f64,
    pub outer_iters: usize,
    pub cg_tol: f64,
    /// Iteration cap of the inner solve; early stopping regularizes.
    pub cg_max_iters: usize,
    pub sigma_bounds: (f64, f64),
    pub initial_sigma: f64,
}

impl Default for SigmaReconParams {
    fn default() -> Self {
        Self {
            gamma_tv: 1e-3,
            tau: 1e-4,
            eps_shift: 1e-8,
            outer_iters: 20,
            cg_tol: 1e-8,
            cg_max_iters: 30,
            sigma_bounds: (0.1, 10.0),
            initial_sigma: 1.0,
        }
    }
}

impl SigmaReconParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_tv", self.gamma_tv),
            ("tau", self.tau),
            ("eps_shift", self.eps_shift),
            ("cg_tol", self.cg_tol),
            ("initial_sigma", self.initial_sigma),
            ("sigma_min", self.sigma_bounds.0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.outer_iters == 0 || self.cg_max_iters == 0 {
            return invalid("outer_iters and cg_max_iters must be at least 1");
        }
        let (lo, hi) = self.sigma_bounds;
        if !(lo < hi) {
            return invalid(format!("sigma bounds [{lo}, {hi}] are empty"));
        }
        if !(lo..=hi).contains(&self.initial_sigma) {
            return invalid(format!("initial sigma {} lies outside [{lo}, {hi}]", self.initial_sigma));
        }
        Ok(())
    }
}

/// `√(r² + τ²)`.
pub fn smoothed_abs(r: f64, tau: f64) -> f64 {
    r.hypot(tau)
}

/// IRLS weight `(r² + τ²)^{−1/2}`; `w·(r² + τ²) = √(r² + τ²) → |r|` as `τ → 0`.
pub fn irls_weight(r: f64, tau: f64) -> f64 {
    1.0 / smoothed_abs(r, tau)
}

/// Derivative of `H[σ]` for one boundary current, applied without forming `W`.
#[derive(Debug)]
pub struct LinearizedOperator<'a> {
    mesh: &'a TriangleMesh,
    mass_factor: &'a CholeskyFactor,
    solver: &'a NeumannSolver,
    grad_u: Vec<[f64; 2]>,
    /// `∫_T σφ_i` for the three vertices of each triangle.
    sigma_moments: Vec<[f64; 3]>,
    m_u: SparseSymmetricMatrix,
    /// `H[σ]`.
    pub h: NodalField,
}

impl<'a> LinearizedOperator<'a> {
    /// Assembles the operator at `σ` for the potential `u = u[σ]`.
    pub fn new(
        mesh: &'a TriangleMesh,
        mass_factor: &'a CholeskyFactor,
        solver: &'a NeumannSolver,
        sigma: &[f64],
        u: &[f64],
    ) -> Self {
        let grad_u = element_gradients(mesh, u);
        let sigma_moments = mesh
            .triangles()
            .iter()
            .zip(mesh.areas())
            .map(|(tri, area)| {
                let s = sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]];
                tri.map(|i| area * (sigma[i] + s) / 12.0)
            })
            .collect();
        let q: Vec<f64> = grad_u.iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect();
        let m_u = mass_element_weighted(mesh, Some(&q));
        let h = power_density_with(mesh, mass_factor, sigma, u);
        Self {
            mesh,
            mass_factor,
            solver,
            grad_u,
            sigma_moments,
            m_u,
            h,
        }
    }

    pub fn dim(&self) -> usize {
        self.mesh.node_count()
    }

    fn grad_dot(&self, t: usize, a: usize) -> f64 {
        let g = self.mesh.gradients()[t][a];
        let gu = self.grad_u[t];
        g[0] * gu[0] + g[1] * gu[1]
    }

    /// `L_u κ`.
    fn l_u(&self, kappa: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, (tri, area)) in self.mesh.triangles().iter().zip(self.mesh.areas()).enumerate() {
            let c = area * (kappa[tri[0]] + kappa[tri[1]] + kappa[tri[2]]) / 3.0;
            for (a, &i) in tri.iter().enumerate() {
                out[i] += c * self.grad_dot(t, a);
            }
        }
        out
    }

    /// `L_uᵀ y`.
    fn l_u_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, (tri, area)) in self.mesh.triangles().iter().zip(self.mesh.areas()).enumerate() {
            let d: f64 = (0..3).map(|a| y[tri[a]] * self.grad_dot(t, a)).sum();
            let c = area * d / 3.0;
            for &j in tri {
                out[j] += c;
            }
        }
        out
    }

    /// `W_{σ,u} v`.
    fn w_su(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let d: f64 = (0..3).map(|a| v[tri[a]] * self.grad_dot(t, a)).sum();
            for (a, &i) in tri.iter().enumerate() {
                out[i] += d * self.sigma_moments[t][a];
            }
        }
        out
    }

    /// `W_{σ,u}ᵀ y`.
    fn w_su_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let c: f64 = (0..3).map(|a| y[tri[a]] * self.sigma_moments[t][a]).sum();
            for (a, &j) in tri.iter().enumerate() {
                out[j] += c * self.grad_dot(t, a);
            }
        }
        out
    }

    /// `Wκ = M⁻¹(M_u κ − 2 W_{σ,u} G L_u κ)`; the grounded inverse `G` is
    /// symmetric, and `W_{σ,u}` ignores the gauge constant.
    pub fn apply(&self, kappa: &[f64]) -> Vec<f64> {
        let du = self.solver.solve_grounded(&self.l_u(kappa));
        let mut r = self.m_u.mul_vec(kappa);
        r.iter_mut().zip(self.w_su(&du)).for_each(|(a, b)| *a -= 2.0 * b);
        self.mass_factor.solve(&r)
    }

    /// `Wᵀy` in the Euclidean inner product.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let a = self.mass_factor.solve(y);
        let g = self.solver.solve_grounded(&self.w_su_t(&a));
        let mut out = self.m_u.mul_vec(&a);
        out.iter_mut().zip(self.l_u_t(&g)).for_each(|(o, b)| *o -= 2.0 * b);
        out
    }
}

/// Discretized directional derivative `H′[σ, κ]`.
pub fn apply_frechet(linop: &LinearizedOperator<'_>, kappa: &NodalField) -> Result<NodalField> {
    if kappa.len() != linop.dim() {
        return Err(AetError::Shape(format!("direction has {} values for {} nodes", kappa.len(), linop.dim())));
    }
    Ok(NodalField::new(linop.apply(kappa.values())))
}

/// `(|∇σ_T|² + τ²)^{−1/2}` per triangle.
pub fn tv_weights(mesh: &TriangleMesh, sigma: &[f64], tau: f64) -> Vec<f64> {
    element_gradients(mesh, sigma)
        .iter()
        .map(|g| irls_weight(g[0].hypot(g[1]), tau))
        .collect()
}

/// Outcome of one preconditioned inner solve.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub kappa: NodalField,
    pub cg_iterations: usize,
    pub relative_residual: f64,
}

/// Solves `L₀⁻¹ Σ WᵀM_wW L₀⁻ᵀ κ̃ = L₀⁻¹ Σ WᵀM_w z_σ` by CG with `L₀L₀ᵀ = K_{w0} + εI`
/// and returns `κ = L₀⁻ᵀκ̃`.
pub fn linearized_step(
    ops: &[LinearizedOperator<'_>],
    z_sigma: &[Vec<f64>],
    w: &[Vec<f64>],
    w0: &[f64],
    params: &SigmaReconParams,
) -> Result<StepOutcome> {
    let first = ops
        .first()
        .ok_or_else(|| AetError::InvalidInput("no fidelity terms".into()))?;
    let mesh = first.mesh;
    let n = mesh.node_count();
    if z_sigma.len() != ops.len() || w.len() != ops.len() {
        return Err(AetError::Shape("one residual and one weight per fidelity term are required".into()));
    }
    if z_sigma.iter().chain(w).any(|v| v.len() != n) || w0.len() != mesh.triangles().len() {
        return Err(AetError::Shape("residual or weight length does not match the mesh".into()));
    }
    if w.iter().flatten().chain(w0).any(|v| !(*v > 0.0)) {
        return invalid("IRLS weights must be positive");
    }
    let k_w0 = stiffness_element(mesh, w0);
    let mean_diag = k_w0.diagonal().iter().sum::<f64>() / n as f64;
    let l0 = mesh.symbolic_cholesky().factor(&k_w0, params.eps_shift * mean_diag)?;
    let m_w: Vec<SparseSymmetricMatrix> = w.par_iter().map(|wk| mass_nodal_weighted(mesh, wk)).collect();

    let normal = |v: &[f64]| -> Vec<f64> {
        let parts: Vec<Vec<f64>> = ops
            .par_iter()
            .zip(&m_w)
            .map(|(op, m)| op.apply_transpose(&m.mul_vec(&op.apply(v))))
            .collect();
        sum_vectors(parts, n)
    };
    let rhs_parts: Vec<Vec<f64>> = ops
        .par_iter()
        .zip(&m_w)
        .zip(z_sigma)
        .map(|((op, m), z)| op.apply_transpose(&m.mul_vec(z)))
        .collect();
    let rhs = l0.solve_l(&sum_vectors(rhs_parts, n));
    let outcome = pcg(
        |x| l0.solve_l(&normal(&l0.solve_lt(x))),
        |r| r.to_vec(),
        &rhs,
        CgOptions {
            tol: params.cg_tol,
            max_iters: params.cg_max_iters,
            allow_early_stop: true,
        },
    )?;
    if outcome.x.iter().any(|v| !v.is_finite()) {
        let log: Vec<String> = outcome.history.iter().map(|r| format!("{r:.3e}")).collect();
        return Err(AetError::Pipeline(format!(
            "conjugate gradients broke down in the linearized step; residual history [{}]",
            log.join(", ")
        )));
    }
    Ok(StepOutcome {
        kappa: NodalField::new(l0.solve_lt(&outcome.x)),
        cg_iterations: outcome.iterations,
        relative_residual: outcome.relative_residual,
    })
}

fn sum_vectors(parts: Vec<Vec<f64>>, n: usize) -> Vec<f64> {
    parts.into_iter().fold(vec![0.0; n], |mut acc, p| {
        acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        acc
    })
}

/// One power-density datum with the current that produced it.
#[derive(Debug, Clone)]
pub struct PowerDatum {
    pub z: NodalField,
    pub current: BoundaryCurrent,
}

/// Shared operators for a reconstruction on one mesh.
#[derive(Debug, Clone, Copy)]
pub struct SigmaProblem<'a> {
    pub mesh: &'a TriangleMesh,
    pub mass_factor: &'a CholeskyFactor,
    pub data: &'a [PowerDatum],
    pub params: &'a SigmaReconParams,
}

/// Forward quantities at one iterate.
#[derive(Debug)]
struct Iterate {
    sigma: Vec<f64>,
    solver: NeumannSolver,
    potentials: Vec<Vec<f64>>,
    h: Vec<NodalField>,
    objective: f64,
}

impl<'a> SigmaProblem<'a> {
    fn evaluate(&self, sigma: Vec<f64>, lumped: &[f64]) -> Result<Iterate> {
        let field = NodalField::new(sigma);
        let solver = NeumannSolver::new(self.mesh, &field)?;
        let sigma = field.into_inner();
        let potentials: Vec<Vec<f64>> = self
            .data
            .par_iter()
            .map(|d| solver.solve(self.mesh, &d.current))
            .collect();
        let h: Vec<NodalField> = potentials
            .par_iter()
            .map(|u| power_density_with(self.mesh, self.mass_factor, &sigma, u))
            .collect();
        let objective = self.objective(&sigma, &h, lumped);
        Ok(Iterate {
            sigma,
            solver,
            potentials,
            h,
            objective,
        })
    }

    /// `J(σ) = Σ_k ∫|H_k[σ] − z_k| + γ∫|∇σ|`, both smoothed by τ.
    fn objective(&self, sigma: &[f64], h: &[NodalField], lumped: &[f64]) -> f64 {
        let tau = self.params.tau;
        let fidelity: f64 = h
            .iter()
            .zip(self.data)
            .map(|(hk, d)| {
                hk.iter()
                    .zip(d.z.iter())
                    .zip(lumped)
                    .map(|((a, b), m)| m * smoothed_abs(a - b, tau))
                    .sum::<f64>()
            })
            .sum();
        let tv: f64 = element_gradients(self.mesh, sigma)
            .iter()
            .zip(self.mesh.areas())
            .map(|(g, area)| area * smoothed_abs(g[0].hypot(g[1]), tau))
            .sum();
        fidelity + self.params.gamma_tv * tv
    }

    /// `d/ds J(σ + sκ)` at `s = 0`.
    fn slope(&self, it: &Iterate, ops: &[LinearizedOperator<'_>], kappa: &[f64], lumped: &[f64]) -> f64 {
        let tau = self.params.tau;
        let fidelity: f64 = ops
            .iter()
            .zip(&it.h)
            .zip(self.data)
            .map(|((op, hk), d)| {
                let dh = op.apply(kappa);
                (0..dh.len())
                    .map(|i| lumped[i] * (hk[i] - d.z[i]) / smoothed_abs(hk[i] - d.z[i], tau) * dh[i])
                    .sum::<f64>()
            })
            .sum();
        let gs = element_gradients(self.mesh, &it.sigma);
        let gk = element_gradients(self.mesh, kappa);
        let tv: f64 = gs
            .iter()
            .zip(&gk)
            .zip(self.mesh.areas())
            .map(|((a, b), area)| area * (a[0] * b[0] + a[1] * b[1]) / smoothed_abs(a[0].hypot(a[1]), tau))
            .sum();
        fidelity + self.params.gamma_tv * tv
    }
}

/// Record of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    pub cg_iterations: usize,
    pub relative_update: f64,
}

#[derive(Debug, Clone)]
pub struct SigmaReconResult {
    pub sigma: NodalField,
    pub log: Vec<IterationLog>,
    /// Objective at the initial guess.
    pub initial_objective: f64,
}

impl SigmaReconResult {
    pub fn final_objective(&self) -> f64 {
        self.log.last().map_or(self.initial_objective, |l| l.objective)
    }

    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("iteration,objective,step,cg_iterations,relative_update\n");
        writeln!(s, "0,{:.12e},0,0,0", self.initial_objective).unwrap();
        for l in &self.log {
            writeln!(
                s,
                "{},{:.12e},{:e},{},{:e}",
                l.iteration, l.objective, l.step, l.cg_iterations, l.relative_update
            )
            .unwrap();
        }
        s
    }

    pub fn write_convergence(&self, path: &Path) -> Result<()> {
        write_text(path, &self.convergence_csv())
    }
}

/// IRLS outer loop with an Armijo backtracking line search on `J` and box
/// constraints on σ.
pub fn reconstruct_conductivity(problem: SigmaProblem<'_>) -> Result<SigmaReconResult> {
    let SigmaProblem { mesh, mass_factor, data, params } = problem;
    params.validate()?;
    if data.is_empty() {
        return invalid("at least one power density is required");
    }
    let n = mesh.node_count();
    if data.iter().any(|d| d.z.len() != n) {
        return Err(AetError::Shape("power density length does not match the mesh".into()));
    }
    if data.iter().any(|d| d.z.iter().any(|v| !v.is_finite())) {
        return invalid("power densities must be finite");
    }
    let lumped = lumped_mass(mesh);
    let (lo, hi) = params.sigma_bounds;
    let mut current = problem.evaluate(vec![params.initial_sigma; n], &lumped)?;
    let initial_objective = current.objective;
    let mut log = Vec::new();
    for iteration in 1..=params.outer_iters {
        let ops: Vec<LinearizedOperator<'_>> = current
            .potentials
            .iter()
            .map(|u| LinearizedOperator::new(mesh, mass_factor, &current.solver, &current.sigma, u))
            .collect();
        let z_sigma: Vec<Vec<f64>> = data
            .iter()
            .zip(&current.h)
            .map(|(d, h)| d.z.iter().zip(h.iter()).map(|(a, b)| a - b).collect())
            .collect();
        let w: Vec<Vec<f64>> = z_sigma
            .iter()
            .map(|z| z.iter().map(|r| irls_weight(*r, params.tau)).collect())
            .collect();
        let w0 = tv_weights(mesh, &current.sigma, params.tau);
        let step = linearized_step(&ops, &z_sigma, &w, &w0, params)?;
        let slope = problem.slope(&current, &ops, &step.kappa, &lumped);
        drop(ops);

        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = current
                .sigma
                .iter()
                .zip(step.kappa.iter())
                .map(|(a, k)| (a + s * k).clamp(lo, hi))
                .collect();
            let next = problem.evaluate(trial, &lumped).map_err(|e| {
                AetError::Pipeline(format!(
                    "forward solve failed at outer iteration {iteration} (iterate range [{:.4}, {:.4}]): {e}",
                    current.sigma.iter().cloned().fold(f64::INFINITY, f64::min),
                    current.sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ))
            })?;
            if next.objective < current.objective && next.objective <= current.objective + ARMIJO * s * slope.min(0.0) {
                accepted = Some(next);
                break;
            }
            s *= 0.5;
        }
        let Some(next) = accepted else { break };
        let diff: Vec<f64> = next.sigma.iter().zip(&current.sigma).map(|(a, b)| a - b).collect();
        let relative_update = norm2(&diff) / norm2(&current.sigma);
        log.push(IterationLog {
            iteration,
            objective: next.objective,
            step: s,
            cg_iterations: step.cg_iterations,
            relative_update,
        });
        current = next;
        if relative_update < UPDATE_TOLERANCE {
            break;
        }
    }
    Ok(SigmaReconResult {
        sigma: NodalField::new(current.sigma),
        log,
        initial_objective,
    })
}

/// `H[σ]` for each current.
pub fn forward_power_densities(
    mesh: &TriangleMesh,
    mass_factor: &CholeskyFactor,
    sigma: &NodalField,
    currents: &[BoundaryCurrent],
) -> Result<Vec<NodalField>> {
    let solver = NeumannSolver::new(mesh, sigma)?;
    Ok(currents
        .iter()
        .map(|f| power_density_with(mesh, mass_factor, sigma.values(), &solver.solve(mesh, f)))
        .collect())
}
