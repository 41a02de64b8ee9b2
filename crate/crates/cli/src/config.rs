//! TOML experiment configuration. Unknown keys are rejected and every field
//! has a default, so an empty file is a complete desk-scale run.

use std::path::{Path, PathBuf};

use aet_core::acceptance::AcceptanceConfig;
use aet_core::lab::LabConfig;
use aet_core::recon_sigma::SigmaReconParams;
use aet_core::sampler::SamplerParams;
use aet_core::uq::EnsembleConfig;
use aet_core::wave::SourceConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Output directory, relative to the config file.
    pub output: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub mesh: MeshSection,
    pub wave: WaveSection,
    pub physics: PhysicsSection,
    pub speed: SpeedSection,
    pub sampler: SamplerSection,
    pub tikhonov: TikhonovSection,
    pub sigma_recon: SigmaSection,
    pub ensemble: EnsembleSection,
    pub mu_sweep: MuSweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub radius: f64,
    pub target_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveSection {
    pub grid: usize,
    pub half_width: f64,
    pub inner_half_width: f64,
    /// Index of the last recorded sample.
    pub records: usize,
    /// Final time; omitted selects `3·(2L′)/c_min_bound`.
    pub t_final: Option<f64>,
    pub c_min_bound: f64,
    pub c_max_bound: f64,
    pub damping: f64,
    pub sources: usize,
    pub arc_degrees: f64,
    pub points_per_transducer: usize,
    pub source_radius: f64,
    pub frequency: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub eta: f64,
    pub sigma_background: f64,
    pub sigma_inclusion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrueModel {
    /// Inclusion with random structure of strength `sampler.mu`.
    Random,
    /// Inclusion only.
    Inclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssumedModel {
    /// Constant background speed.
    Constant,
    /// The true speed multiplied by `assumed_factor`.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedSection {
    pub true_model: TrueModel,
    pub assumed_model: AssumedModel,
    pub assumed_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub f0: f64,
    pub ell: f64,
    pub c0: f64,
    pub c1: f64,
    pub n: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma_cut: f64,
    pub u_radius_ratio: f64,
    pub mu: f64,
    pub seed: u64,
    pub independent_phases: bool,
    pub mollifier_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TikhonovSection {
    /// Bracket of `log₁₀(β/λ_max)`.
    pub log_beta_min: f64,
    pub log_beta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaSection {
    pub gamma_tv: f64,
    pub tau: f64,
    pub eps_shift: f64,
    pub outer_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub initial_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub samples: usize,
    pub master_seed: u64,
    pub reconstruct_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuSweepSection {
    pub values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("out"),
            threads: 0,
            mesh: MeshSection::default(),
            wave: WaveSection::default(),
            physics: PhysicsSection::default(),
            speed: SpeedSection::default(),
            sampler: SamplerSection::default(),
            tikhonov: TikhonovSection::default(),
            sigma_recon: SigmaSection::default(),
            ensemble: EnsembleSection::default(),
            mu_sweep: MuSweepSection::default(),
        }
    }
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            radius: 1.0,
            target_nodes: LabConfig::desk().mesh_nodes,
        }
    }
}

impl Default for WaveSection {
    fn default() -> Self {
        let lab = LabConfig::desk();
        let s = lab.sources;
        Self {
            grid: lab.grid_points,
            half_width: lab.half_width,
            inner_half_width: lab.inner_half_width,
            records: lab.records,
            t_final: lab.t_final,
            c_min_bound: lab.c_min_bound,
            c_max_bound: lab.c_max_bound,
            damping: lab.damping,
            sources: s.count,
            arc_degrees: s.arc_degrees,
            points_per_transducer: s.points_per_transducer,
            source_radius: s.radius,
            frequency: s.frequency,
            amplitude: s.amplitude,
        }
    }
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let lab = LabConfig::desk();
        Self {
            eta: lab.eta,
            sigma_background: lab.sigma_background,
            sigma_inclusion: lab.sigma_inclusion,
        }
    }
}

impl Default for SpeedSection {
    fn default() -> Self {
        Self {
            true_model: TrueModel::Random,
            assumed_model: AssumedModel::Constant,
            assumed_factor: 1.0,
        }
    }
}

impl Default for SamplerSection {
    fn default() -> Self {
        let p = SamplerParams::default();
        Self {
            f0: p.f0,
            ell: p.ell,
            c0: p.c0,
            c1: p.c1,
            n: p.n,
            beta0: p.beta0,
            beta1: p.beta1,
            gamma_cut: p.gamma_cut,
            u_radius_ratio: p.u_radius_ratio,
            mu: p.mu,
            seed: p.seed,
            independent_phases: p.independent_phases,
            mollifier_width: p.mollifier_width,
        }
    }
}

impl Default for TikhonovSection {
    fn default() -> Self {
        let (lo, hi) = aet_core::recon_power::LOG_BETA_RANGE;
        Self {
            log_beta_min: lo,
            log_beta_max: hi,
        }
    }
}

impl Default for SigmaSection {
    fn default() -> Self {
        let p = SigmaReconParams::default();
        Self {
            gamma_tv: p.gamma_tv,
            tau: p.tau,
            eps_shift: p.eps_shift,
            outer_iters: p.outer_iters,
            cg_tol: p.cg_tol,
            cg_max_iters: p.cg_max_iters,
            sigma_min: p.sigma_bounds.0,
            sigma_max: p.sigma_bounds.1,
            initial_sigma: p.initial_sigma,
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            samples: e.samples,
            master_seed: e.master_seed,
            reconstruct_sigma: true,
        }
    }
}

impl Default for MuSweepSection {
    fn default() -> Self {
        Self {
            values: vec![0.0, 0.01, 0.05, 0.10],
        }
    }
}

/// Parses a config text with `key=value` overrides applied before validation.
pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig, String> {
    // Deserializing straight from the text keeps line numbers in errors.
    let config: ExperimentConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| e.to_string())?
    } else {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        table.try_into().map_err(|e: toml::de::Error| e.to_string())?
    };
    config.validate()?;
    Ok(config)
}

/// Reads a config file; `None` gives the defaults. Relative output paths are
/// resolved against the config location.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, String> {
    let (text, base) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (String::new(), PathBuf::new()),
    };
    let mut config =
        parse(&text, overrides).map_err(|e| format!("{}: {e}", path.map_or("<defaults>".into(), |p| p.display().to_string())))?;
    if config.output.is_relative() {
        config.output = base.join(&config.output);
    }
    Ok(config)
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override '{assignment}' is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key '{key}' is malformed"));
    }
    // A bare word that is not valid TOML is taken as a string.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override key '{key}': '{p}' is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        let t = &self.tikhonov;
        if !(t.log_beta_min < t.log_beta_max) {
            return Err(format!("tikhonov: log_beta_min {} must be below log_beta_max {}", t.log_beta_min, t.log_beta_max));
        }
        if !(self.mesh.radius > 0.0) || self.mesh.target_nodes < 3 {
            return Err("mesh: radius must be positive and target_nodes at least 3".into());
        }
        if self.ensemble.samples == 0 {
            return Err("ensemble: samples must be positive".into());
        }
        if !(self.speed.assumed_factor > 0.0) {
            return Err("speed: assumed_factor must be positive".into());
        }
        self.sampler_params().validate().map_err(|e| format!("sampler: {e}"))?;
        self.sigma_params().validate().map_err(|e| format!("sigma_recon: {e}"))?;
        self.lab_config().sources.validate().map_err(|e| format!("wave: {e}"))?;
        Ok(())
    }

    pub fn lab_config(&self) -> LabConfig {
        let w = &self.wave;
        LabConfig {
            mesh_nodes: self.mesh.target_nodes,
            grid_points: w.grid,
            half_width: w.half_width,
            inner_half_width: w.inner_half_width,
            sources: SourceConfig {
                count: w.sources,
                arc_degrees: w.arc_degrees,
                points_per_transducer: w.points_per_transducer,
                radius: w.source_radius,
                frequency: w.frequency,
                amplitude: w.amplitude,
                angle_offset: 0.0,
            },
            records: w.records,
            t_final: w.t_final,
            c_min_bound: w.c_min_bound,
            c_max_bound: w.c_max_bound,
            damping: w.damping,
            eta: self.physics.eta,
            sigma_background: self.physics.sigma_background,
            sigma_inclusion: self.physics.sigma_inclusion,
        }
    }

    pub fn sampler_params(&self) -> SamplerParams {
        let s = &self.sampler;
        SamplerParams {
            f0: s.f0,
            ell: s.ell,
            c0: s.c0,
            c1: s.c1,
            n: s.n,
            beta0: s.beta0,
            beta1: s.beta1,
            gamma_cut: s.gamma_cut,
            u_radius_ratio: s.u_radius_ratio,
            mu: s.mu,
            seed: s.seed,
            independent_phases: s.independent_phases,
            mollifier_width: s.mollifier_width,
        }
    }

    pub fn sigma_params(&self) -> SigmaReconParams {
        let s = &self.sigma_recon;
        SigmaReconParams {
            gamma_tv: s.gamma_tv,
            tau: s.tau,
            eps_shift: s.eps_shift,
            outer_iters: s.outer_iters,
            cg_tol: s.cg_tol,
            cg_max_iters: s.cg_max_iters,
            sigma_bounds: (s.sigma_min, s.sigma_max),
            initial_sigma: s.initial_sigma,
        }
    }

    pub fn log_beta_range(&self) -> (f64, f64) {
        (self.tikhonov.log_beta_min, self.tikhonov.log_beta_max)
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            sampler: self.sampler_params(),
            samples: self.ensemble.samples,
            master_seed: self.ensemble.master_seed,
            vary_seed: true,
            sigma: self.ensemble.reconstruct_sigma.then(|| self.sigma_params()),
        }
    }

    pub fn acceptance_config(&self) -> AcceptanceConfig {
        AcceptanceConfig {
            lab: self.lab_config(),
            ensemble_samples: self.ensemble.samples,
            master_seed: self.ensemble.master_seed,
            ..AcceptanceConfig::default()
        }
    }

    /// Canonical serialization, hashed into every manifest.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse("[mesh]\nradius = 1.0\nnodes = 5\n", &[]).unwrap_err();
        assert!(err.contains("nodes") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = parse("", &["mesh.target_nodes=500".into(), "speed.true_model=inclusion".into()]).unwrap();
        assert_eq!(c.mesh.target_nodes, 500);
        assert_eq!(c.speed.true_model, TrueModel::Inclusion);
        assert!(parse("", &["mesh.bogus=1".into()]).is_err());
        assert!(parse("", &["tikhonov.log_beta_min=3".into()]).is_err());
        assert!(parse("", &["no_equals_sign".into()]).is_err());
    }

    #[test]
    fn shipped_config_spells_out_the_defaults() {
        let text = include_str!("../configs/desk.toml");
        assert_eq!(parse(text, &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = parse("[sampler]\nmu = 0.1\n", &[]).unwrap();
        assert_eq!(parse(&c.canonical(), &[]).unwrap(), c);
    }
}
