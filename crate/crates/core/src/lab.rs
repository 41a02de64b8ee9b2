//! Shared experiment setup: mesh, wave grid, common time grid, mass matrix,
//! phantom conductivity and the data-generation pipeline.

use rayon::prelude::*;

use crate::cholesky::CholeskyFactor;
use crate::electrostatics::{power_density_with, BoundaryCurrent, NeumannSolver};
use crate::error::{invalid, Result};
use crate::fem::assemble_mass;
use crate::field::NodalField;
use crate::forward::{assemble_with_mass, ForwardMatrix};
use crate::grid::{CartesianGrid, GridToMesh};
use crate::mesh::{generate_disk_mesh, TriangleMesh};
use crate::sampler::{build_sound_speed, sample_structure, Disk, SamplerParams, C_BACKGROUND, C_INCLUSION};
use crate::sparse::SparseSymmetricMatrix;
use crate::wave::{simulate_wave, SoundSpeedField, SourceConfig, SpeedLabel, WaveRecord, WaveSettings, DEFAULT_DAMPING};

#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub mesh_nodes: usize,
    pub grid_points: usize,
    pub half_width: f64,
    pub inner_half_width: f64,
    pub sources: SourceConfig,
    /// Index of the last recorded sample.
    pub records: usize,
    /// Final time; `None` selects `3·(2L′)/c_min_bound`.
    pub t_final: Option<f64>,
    /// Slowest speed the time window must accommodate.
    pub c_min_bound: f64,
    /// Fastest speed the time step must accommodate.
    pub c_max_bound: f64,
    pub damping: f64,
    pub eta: f64,
    /// Phantom conductivity outside and inside the inclusion.
    pub sigma_background: f64,
    pub sigma_inclusion: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            mesh_nodes: 20100,
            grid_points: 512,
            half_width: 1.6,
            inner_half_width: 1.1,
            sources: SourceConfig::default(),
            records: 300,
            t_final: None,
            c_min_bound: 0.9,
            c_max_bound: 1.25,
            damping: DEFAULT_DAMPING,
            eta: 1e-3,
            sigma_background: 1.0,
            sigma_inclusion: 1.5,
        }
    }
}

impl LabConfig {
    /// Reduced setup used by the acceptance suite.
    pub fn desk() -> Self {
        Self {
            mesh_nodes: 1600,
            grid_points: 257,
            records: 120,
            ..Self::default()
        }
    }

    pub fn final_time(&self) -> f64 {
        self.t_final
            .unwrap_or(3.0 * 2.0 * self.inner_half_width / self.c_min_bound)
    }
}

/// Prepared geometry and operators shared by every run of an experiment.
#[derive(Debug)]
pub struct Lab {
    pub config: LabConfig,
    pub mesh: TriangleMesh,
    pub grid: CartesianGrid,
    pub settings: WaveSettings,
    pub to_mesh: GridToMesh,
    pub mass: SparseSymmetricMatrix,
    pub mass_factor: CholeskyFactor,
}

impl Lab {
    pub fn new(config: LabConfig) -> Result<Self> {
        let mesh = generate_disk_mesh(1.0, config.mesh_nodes)?;
        Self::with_mesh(config, mesh)
    }

    pub fn with_mesh(config: LabConfig, mesh: TriangleMesh) -> Result<Self> {
        config.sources.validate()?;
        if !(config.sigma_background > 0.0 && config.sigma_inclusion > 0.0) {
            return invalid(format!(
                "phantom conductivities must be positive, got {} and {}",
                config.sigma_background, config.sigma_inclusion
            ));
        }
        if !(config.eta > 0.0) {
            return invalid(format!("eta must be positive, got {}", config.eta));
        }
        let grid = CartesianGrid::new(config.half_width, config.inner_half_width, config.grid_points)?;
        if !grid.contains_disk(mesh.radius()) {
            return invalid(format!(
                "disk of radius {} does not fit in the inner square of half-width {}",
                mesh.radius(),
                grid.inner_half_width()
            ));
        }
        let mut settings = WaveSettings::new(&grid, config.c_max_bound, config.final_time(), config.records)?;
        settings.damping = config.damping;
        let to_mesh = GridToMesh::new(&grid, &mesh)?;
        let mass = assemble_mass(&mesh, None)?;
        let mass_factor = mesh.symbolic_cholesky().factor(&mass, 0.0)?;
        Ok(Self {
            config,
            mesh,
            grid,
            settings,
            to_mesh,
            mass,
            mass_factor,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Waves of the listed transducers (all when `None`), in parallel.
    pub fn simulate(&self, c: &SoundSpeedField, sources: Option<&[usize]>) -> Result<Vec<WaveRecord>> {
        let all: Vec<usize> = (0..self.config.sources.count).collect();
        let list = sources.unwrap_or(&all);
        if c.max() > self.config.c_max_bound * (1.0 + 1e-12) {
            return invalid(format!(
                "sound speed {} exceeds the configured bound {}",
                c.max(),
                self.config.c_max_bound
            ));
        }
        list.par_iter()
            .map(|&s| simulate_wave(&self.grid, c, &self.config.sources, s, &self.settings, &self.to_mesh))
            .collect()
    }

    /// Forward operator for the listed transducers.
    pub fn forward(&self, c: &SoundSpeedField, sources: Option<&[usize]>, label: &str) -> Result<ForwardMatrix> {
        let waves = self.simulate(c, sources)?;
        assemble_with_mass(&self.mass, &waves, self.config.eta, label)
    }

    /// Piecewise-constant phantom on the inclusion disk.
    pub fn phantom(&self) -> NodalField {
        disk_phantom(&self.mesh, self.config.sigma_background, self.config.sigma_inclusion)
    }

    /// Projected power densities `H = σ|∇u|²` for each current.
    pub fn power_densities(&self, sigma: &NodalField, currents: &[BoundaryCurrent]) -> Result<Vec<NodalField>> {
        let solver = NeumannSolver::new(&self.mesh, sigma)?;
        Ok(currents
            .iter()
            .map(|f| {
                let u = solver.solve(&self.mesh, f);
                power_density_with(&self.mesh, &self.mass_factor, sigma.values(), &u)
            })
            .collect())
    }

    /// `‖v‖_M`.
    pub fn m_norm(&self, v: &[f64]) -> f64 {
        self.mass.quadratic_form(v).max(0.0).sqrt()
    }

    /// `‖a − b‖_M / ‖b‖_M`.
    pub fn relative_m_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.m_norm(&d) / self.m_norm(b)
    }

    /// Sound speed with inclusion, no structure.
    pub fn inclusion_speed(&self) -> Result<SoundSpeedField> {
        build_sound_speed(None, Disk::INCLUSION, C_BACKGROUND, C_INCLUSION, 0.0, &self.grid)
    }

    /// Constant background speed, labelled as the assumed model.
    pub fn assumed_speed(&self) -> Result<SoundSpeedField> {
        SoundSpeedField::constant(&self.grid, C_BACKGROUND, SpeedLabel::Assumed)
    }

    /// One random realization of the true speed.
    pub fn random_speed(&self, params: &SamplerParams) -> Result<SoundSpeedField> {
        let s = sample_structure(params, self.grid.half_width(), self.mesh.radius())?;
        build_sound_speed(Some(&s), Disk::INCLUSION, C_BACKGROUND, C_INCLUSION, params.mu, &self.grid)
    }
}

/// `σ_true = 1 + ½χ_D` at the mesh nodes.
pub fn phantom_sigma(mesh: &TriangleMesh) -> NodalField {
    disk_phantom(mesh, 1.0, 1.5)
}

/// `background + (inclusion − background)χ_D` at the mesh nodes.
pub fn disk_phantom(mesh: &TriangleMesh, background: f64, inclusion: f64) -> NodalField {
    NodalField::new(mesh.nodal(|x, y| if Disk::INCLUSION.contains(x, y) { inclusion } else { background }))
}

/// Stacked linearized data `I = K H` for a power density `H`.
pub fn synthesize(k: &ForwardMatrix, h: &NodalField) -> Vec<f64> {
    k.apply(h.values())
}
