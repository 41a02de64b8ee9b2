//! Monte Carlo ensembles over sound-speed realizations, sampled signal
//! statistics, the μ-sweep and the few-source artifact study.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analysis::angular_spectrum;
use crate::electrostatics::BoundaryCurrent;
use crate::error::{invalid, AetError, Result};
use crate::field::NodalField;
use crate::forward::ForwardMatrix;
use crate::io::{write_binary, write_text};
use crate::lab::{Lab, LabConfig};
use crate::mesh::TriangleMesh;
use crate::recon_power::{optimal_beta_search_in, BetaSearch, SpectralTikhonov, LOG_BETA_RANGE};
use crate::recon_sigma::{reconstruct_conductivity, PowerDatum, SigmaProblem, SigmaReconParams};
use crate::sampler::SamplerParams;
use crate::wave::{SoundSpeedField, SpeedLabel};

/// Seed of sample `index` derived from the master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Assumed-speed operator and true fields shared by every reconstruction.
#[derive(Debug)]
pub struct Reconstructor<'a> {
    pub lab: &'a Lab,
    pub assumed: ForwardMatrix,
    pub spectral: SpectralTikhonov,
    pub currents: Vec<BoundaryCurrent>,
    pub sigma_true: NodalField,
    pub h_true: Vec<NodalField>,
    /// Bracket of `log₁₀(β/λ_max)` for the optimal-β search.
    pub log_beta_range: (f64, f64),
}

/// Reconstructions from one data set.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub h: Vec<NodalField>,
    /// Relative M-norm error of each `h`.
    pub h_errors: Vec<f64>,
    /// Relative optimal β per current.
    pub betas: Vec<f64>,
    pub sigma: Option<NodalField>,
    pub sigma_error: f64,
}

impl<'a> Reconstructor<'a> {
    pub fn new(lab: &'a Lab, assumed_speed: &SoundSpeedField) -> Result<Self> {
        let assumed = lab.forward(assumed_speed, None, "assumed")?;
        let spectral = SpectralTikhonov::new(&assumed, &lab.mass_factor)?;
        let currents = BoundaryCurrent::standard_set(&lab.mesh);
        let sigma_true = lab.phantom();
        let h_true = lab.power_densities(&sigma_true, &currents)?;
        Ok(Self {
            lab,
            assumed,
            spectral,
            currents,
            sigma_true,
            h_true,
            log_beta_range: LOG_BETA_RANGE,
        })
    }

    /// Linearized data `K_true H_k` for each current.
    pub fn synthesize(&self, k_true: &ForwardMatrix) -> Vec<Vec<f64>> {
        self.h_true.iter().map(|h| k_true.apply(h.values())).collect()
    }

    /// Optimal-β power density for one data vector and current.
    pub fn power_density(&self, data: &[f64], current: usize) -> Result<BetaSearch> {
        optimal_beta_search_in(
            &self.spectral,
            &self.assumed,
            &self.lab.mass,
            &self.lab.mass_factor,
            data,
            &self.h_true[current],
            self.log_beta_range,
        )
    }

    /// Power densities for every current and, when `sigma` is given, the conductivity.
    pub fn reconstruct(&self, data: &[Vec<f64>], sigma: Option<&SigmaReconParams>) -> Result<Reconstruction> {
        if data.len() != self.currents.len() {
            return Err(AetError::Shape(format!("{} data sets for {} currents", data.len(), self.currents.len())));
        }
        let searches = data
            .iter()
            .enumerate()
            .map(|(k, d)| self.power_density(d, k))
            .collect::<Result<Vec<_>>>()?;
        let h_errors = searches.iter().map(|s| s.relative_error).collect();
        let betas = searches.iter().map(|s| s.relative_beta).collect();
        let h: Vec<NodalField> = searches.into_iter().map(|s| s.result.h).collect();
        let (sigma, sigma_error) = match sigma {
            Some(params) => {
                let data: Vec<PowerDatum> = h
                    .iter()
                    .zip(&self.currents)
                    .map(|(z, current)| PowerDatum {
                        z: z.clone(),
                        current: current.clone(),
                    })
                    .collect();
                let r = reconstruct_conductivity(SigmaProblem {
                    mesh: &self.lab.mesh,
                    mass_factor: &self.lab.mass_factor,
                    data: &data,
                    params,
                })?;
                let err = self.lab.relative_m_error(r.sigma.values(), self.sigma_true.values());
                (Some(r.sigma), err)
            }
            None => (None, f64::NAN),
        };
        Ok(Reconstruction {
            h,
            h_errors,
            betas,
            sigma,
            sigma_error,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Sampler settings; the seed is replaced per sample.
    pub sampler: SamplerParams,
    pub samples: usize,
    pub master_seed: u64,
    /// When false every sample reuses the master seed (degenerate ensemble).
    pub vary_seed: bool,
    /// Conductivity reconstruction; `None` stops after the power densities.
    pub sigma: Option<SigmaReconParams>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerParams::default(),
            samples: 30,
            master_seed: 1,
            vary_seed: true,
            sigma: Some(SigmaReconParams::default()),
        }
    }
}

/// Everything kept from one realization.
#[derive(Debug, Clone)]
pub struct SampleResult {
    pub index: usize,
    pub seed: u64,
    pub reconstruction: Reconstruction,
    /// Stacked signal of the first current, source-major.
    pub signal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SampleFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Node-wise mean and standard deviation of the reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n: usize,
    pub master_seed: u64,
    pub current_ids: Vec<String>,
    pub mean_h: Vec<NodalField>,
    pub std_h: Vec<NodalField>,
    pub mean_sigma: Option<NodalField>,
    pub std_sigma: Option<NodalField>,
}

/// Node-wise mean and (n−1)-normalized standard deviation, two-pass; the
/// deviation is zero for a single sample.
pub fn mean_std(fields: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = fields.len();
    let first = fields.first().ok_or_else(|| AetError::InvalidInput("no samples".into()))?;
    if fields.iter().any(|f| f.len() != first.len()) {
        return Err(AetError::Shape("samples differ in length".into()));
    }
    let mut mean = vec![0.0; first.len()];
    for f in fields {
        mean.iter_mut().zip(f.iter()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; first.len()];
    if n > 1 {
        for f in fields {
            var.iter_mut().zip(f.iter()).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2));
        }
        var.iter_mut().for_each(|s| *s = (*s / (n - 1) as f64).sqrt());
    }
    Ok((mean, var))
}

impl EnsembleSummary {
    pub fn from_samples(samples: &[SampleResult], master_seed: u64, current_ids: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("an ensemble summary needs at least one sample");
        }
        let currents = samples[0].reconstruction.h.len();
        let mut mean_h = Vec::new();
        let mut std_h = Vec::new();
        for k in 0..currents {
            let fields: Vec<&[f64]> = samples.iter().map(|s| s.reconstruction.h[k].values()).collect();
            let (m, s) = mean_std(&fields)?;
            mean_h.push(NodalField::new(m));
            std_h.push(NodalField::new(s));
        }
        let sigmas: Option<Vec<&[f64]>> = samples
            .iter()
            .map(|s| s.reconstruction.sigma.as_ref().map(|f| f.values()))
            .collect();
        let (mean_sigma, std_sigma) = match sigmas {
            Some(fields) => {
                let (m, s) = mean_std(&fields)?;
                (Some(NodalField::new(m)), Some(NodalField::new(s)))
            }
            None => (None, None),
        };
        Ok(Self {
            n: samples.len(),
            master_seed,
            current_ids,
            mean_h,
            std_h,
            mean_sigma,
            std_sigma,
        })
    }
}

/// Sampled covariance and correlation of stacked signals.
#[derive(Debug, Clone)]
pub struct SignalStatistics {
    pub n: usize,
    pub dim: usize,
    pub samples_per_source: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Row-major `dim × dim`.
    pub covariance: Vec<f64>,
    /// Row-major `dim × dim`; entries with a zero-variance index are 0 off the diagonal.
    pub correlation: Vec<f64>,
}

impl SignalStatistics {
    pub fn from_signals(signals: &[&[f64]], samples_per_source: usize) -> Result<Self> {
        let n = signals.len();
        if n < 2 {
            return invalid(format!("signal statistics need at least two samples, got {n}"));
        }
        let dim = signals[0].len();
        if signals.iter().any(|s| s.len() != dim) {
            return Err(AetError::Shape("signals differ in length".into()));
        }
        if samples_per_source == 0 || dim % samples_per_source != 0 {
            return Err(AetError::Shape(format!("{dim} signal entries do not split into blocks of {samples_per_source}")));
        }
        let (mean, std) = mean_std(signals)?;
        let centered = DMatrix::from_fn(n, dim, |i, j| signals[i][j] - mean[j]);
        let cov = centered.tr_mul(&centered) / (n - 1) as f64;
        let mut covariance = vec![0.0; dim * dim];
        let mut correlation = vec![0.0; dim * dim];
        let scale = std.iter().cloned().fold(0.0, f64::max);
        for i in 0..dim {
            for j in 0..dim {
                let c = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                covariance[i * dim + j] = c;
                correlation[i * dim + j] = if i == j {
                    1.0
                } else if std[i] > 1e-12 * scale && std[j] > 1e-12 * scale {
                    (c / (std[i] * std[j])).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(Self {
            n,
            dim,
            samples_per_source,
            mean,
            std,
            covariance,
            correlation,
        })
    }

    pub fn correlation_at(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.dim + j]
    }

    /// Mean `|ρ|` off the diagonal within source blocks and across blocks.
    pub fn block_contrast(&self) -> (f64, f64) {
        let b = self.samples_per_source;
        let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                let r = self.correlation[i * self.dim + j].abs();
                if i / b == j / b {
                    within += r;
                    nw += 1;
                } else {
                    across += r;
                    na += 1;
                }
            }
        }
        (within / nw.max(1) as f64, across / na.max(1) as f64)
    }

    pub fn write_correlation(&self, path: &Path) -> Result<()> {
        write_binary(
            path,
            &format!("corr rows={} cols={} samples={} n={}", self.dim, self.dim, self.samples_per_source, self.n),
            &self.correlation,
        )
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub samples: Vec<SampleResult>,
    pub failures: Vec<SampleFailure>,
    pub summary: Option<EnsembleSummary>,
    pub statistics: Option<SignalStatistics>,
}

/// Runs one realization: draw `c`, simulate with it, reconstruct with the assumed speed.
pub fn run_sample(recon: &Reconstructor<'_>, config: &EnsembleConfig, index: usize) -> std::result::Result<SampleResult, SampleFailure> {
    let seed = if config.vary_seed { derive_seed(config.master_seed, index) } else { config.master_seed };
    let fail = |e: AetError| SampleFailure {
        index,
        seed,
        message: e.to_string(),
    };
    let params = SamplerParams { seed, ..config.sampler.clone() };
    let c = recon.lab.random_speed(&params).map_err(fail)?;
    let k_true = recon.lab.forward(&c, None, "true").map_err(fail)?;
    let data = recon.synthesize(&k_true);
    drop(k_true);
    let reconstruction = recon.reconstruct(&data, config.sigma.as_ref()).map_err(fail)?;
    Ok(SampleResult {
        index,
        seed,
        reconstruction,
        signal: data.into_iter().next().unwrap_or_default(),
    })
}

/// Ensemble over `config.samples` realizations; failed samples are recorded and skipped.
pub fn run_ensemble(recon: &Reconstructor<'_>, config: &EnsembleConfig) -> Result<EnsembleOutcome> {
    if config.samples == 0 {
        return invalid("the ensemble needs at least one sample");
    }
    config.sampler.validate()?;
    if let Some(p) = &config.sigma {
        p.validate()?;
    }
    // One sample per worker at a time keeps the dense operators bounded in memory.
    let outcomes: Vec<_> = (0..config.samples)
        .into_par_iter()
        .with_max_len(1)
        .map(|i| run_sample(recon, config, i))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    let ids = recon.currents.iter().map(|c| c.id().to_string()).collect();
    let summary = if samples.is_empty() {
        None
    } else {
        Some(EnsembleSummary::from_samples(&samples, config.master_seed, ids)?)
    };
    let statistics = if samples.len() >= 2 {
        let signals: Vec<&[f64]> = samples.iter().map(|s| s.signal.as_slice()).collect();
        Some(SignalStatistics::from_signals(&signals, recon.assumed.samples_per_source())?)
    } else {
        None
    };
    Ok(EnsembleOutcome {
        samples,
        failures,
        summary,
        statistics,
    })
}

impl EnsembleOutcome {
    pub fn report_csv(&self) -> String {
        let mut s = String::from("sample,seed,status,h_error_x1,h_error_x2,h_error_diag,beta_x1,beta_x2,beta_diag,sigma_error,message\n");
        let mut rows: Vec<(usize, String)> = Vec::new();
        for r in &self.samples {
            let e = &r.reconstruction;
            let cell = |v: &[f64], k: usize| v.get(k).map_or(String::new(), |x| format!("{x:e}"));
            rows.push((
                r.index,
                format!(
                    "{},{},ok,{},{},{},{},{},{},{:e},",
                    r.index,
                    r.seed,
                    cell(&e.h_errors, 0),
                    cell(&e.h_errors, 1),
                    cell(&e.h_errors, 2),
                    cell(&e.betas, 0),
                    cell(&e.betas, 1),
                    cell(&e.betas, 2),
                    e.sigma_error
                ),
            ));
        }
        for f in &self.failures {
            rows.push((f.index, format!("{},{},failed,,,,,,,,\"{}\"", f.index, f.seed, f.message.replace('"', "'"))));
        }
        rows.sort_by_key(|r| r.0);
        for (_, r) in rows {
            s.push_str(&r);
            s.push('\n');
        }
        s
    }

    /// Writes per-sample fields, `mean_*.field`, `std_*.field`, `corr.bin` and `report.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        let mut put = |name: String, f: &NodalField| -> Result<()> {
            let p = dir.join(name);
            f.write(&p)?;
            written.push(p);
            Ok(())
        };
        let ids: Vec<String> = self
            .summary
            .as_ref()
            .map(|s| s.current_ids.clone())
            .unwrap_or_default();
        for r in &self.samples {
            for (k, h) in r.reconstruction.h.iter().enumerate() {
                put(format!("samples/sample_{:04}_h_{}.field", r.index, ids.get(k).map_or("f", |s| s)), h)?;
            }
            if let Some(sigma) = &r.reconstruction.sigma {
                put(format!("samples/sample_{:04}_sigma.field", r.index), sigma)?;
            }
        }
        if let Some(s) = &self.summary {
            for (k, id) in s.current_ids.iter().enumerate() {
                put(format!("mean_h_{id}.field"), &s.mean_h[k])?;
                put(format!("std_h_{id}.field"), &s.std_h[k])?;
            }
            if let (Some(m), Some(sd)) = (&s.mean_sigma, &s.std_sigma) {
                put("mean_sigma.field".into(), m)?;
                put("std_sigma.field".into(), sd)?;
            }
        }
        if let Some(st) = &self.statistics {
            let p = dir.join("corr.bin");
            st.write_correlation(&p)?;
            written.push(p);
        }
        let p = dir.join("report.csv");
        write_text(&p, &self.report_csv())?;
        written.push(p);
        Ok(written)
    }
}

/// One row of the μ-sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSweepRow {
    pub mu: f64,
    pub relative_error: f64,
    /// Relative optimal β.
    pub beta: f64,
    pub at_lower_bound: bool,
    /// `‖c − c̃‖` on the wave grid.
    pub speed_distance: f64,
}

/// Fixed structure realization, increasing μ; power density of the first current.
pub fn mu_sweep(recon: &Reconstructor<'_>, sampler: &SamplerParams, mus: &[f64], assumed: &SoundSpeedField) -> Result<Vec<MuSweepRow>> {
    if let Some(m) = mus.iter().find(|m| !(**m >= 0.0)) {
        return invalid(format!("mu values must be nonnegative, got {m}"));
    }
    mus.iter()
        .map(|&mu| {
            let c = recon.lab.random_speed(&SamplerParams { mu, ..sampler.clone() })?;
            let k_true = recon.lab.forward(&c, None, "true")?;
            let data = k_true.apply(recon.h_true[0].values());
            let s = recon.power_density(&data, 0)?;
            Ok(MuSweepRow {
                mu,
                relative_error: s.relative_error,
                beta: s.relative_beta,
                at_lower_bound: s.at_lower_bound,
                speed_distance: c.distance(assumed)?,
            })
        })
        .collect()
}

pub fn mu_sweep_csv(rows: &[MuSweepRow]) -> String {
    let mut s = String::from("mu,relative_error,beta,at_lower_bound,speed_distance\n");
    for r in rows {
        writeln!(s, "{},{:e},{:e},{},{:e}", r.mu, r.relative_error, r.beta, r.at_lower_bound, r.speed_distance).unwrap();
    }
    s
}

/// Reconstruction from few transducers with a uniformly scaled assumed speed.
#[derive(Debug, Clone)]
pub struct ArtifactDemo {
    pub n_sources: usize,
    pub h: NodalField,
    pub h_true: NodalField,
    pub relative_error: f64,
    /// Angular energy `|c_k|²`, `k = 0..=2·n_sources`, of the reconstruction on `0.3 ≤ r ≤ 0.95`.
    pub spectrum: Vec<f64>,
}

impl ArtifactDemo {
    /// Energy at `k = n_sources` over the largest energy at other `k ≥ 3`.
    pub fn harmonic_dominance(&self) -> f64 {
        self.dominance_at(self.n_sources)
    }

    /// Energy at harmonic `k` over the largest energy at other harmonics `≥ 3`.
    pub fn dominance_at(&self, k: usize) -> f64 {
        let other = self
            .spectrum
            .iter()
            .enumerate()
            .filter(|(j, _)| *j >= 3 && *j != k)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        self.spectrum.get(k).copied().unwrap_or(0.0) / other.max(f64::MIN_POSITIVE)
    }
}

/// True speed with the inclusion, assumed speed `speed_factor·c`, first current.
pub fn few_source_artifact_demo(config: &LabConfig, mesh: &TriangleMesh, n_sources: usize, speed_factor: f64) -> Result<ArtifactDemo> {
    if n_sources == 0 {
        return invalid("at least one source is required");
    }
    let mut cfg = config.clone();
    cfg.sources.count = n_sources;
    let lab = Lab::with_mesh(cfg, mesh.clone())?;
    let c = lab.inclusion_speed()?;
    let assumed = c.scaled(speed_factor, SpeedLabel::Assumed)?;
    let recon = Reconstructor::new(&lab, &assumed)?;
    let k_true = lab.forward(&c, None, "true")?;
    let data = k_true.apply(recon.h_true[0].values());
    let s = recon.power_density(&data, 0)?;
    let spectrum = angular_spectrum(&lab.mesh, s.result.h.values(), 0.3, 0.95, 2 * n_sources);
    Ok(ArtifactDemo {
        n_sources,
        h: s.result.h,
        h_true: recon.h_true[0].clone(),
        relative_error: s.relative_error,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let b: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 100);
        assert_ne!(derive_seed(8, 0), a[0]);
    }

    #[test]
    fn mean_std_match_a_brute_force_computation() {
        let fields = [vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 5.0], vec![4.0, 2.0, -1.0]];
        let refs: Vec<&[f64]> = fields.iter().map(|f| f.as_slice()).collect();
        let (m, s) = mean_std(&refs).unwrap();
        for j in 0..3 {
            let mean = fields.iter().map(|f| f[j]).sum::<f64>() / 3.0;
            let var = fields.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / 2.0;
            assert_eq!(m[j], mean);
            assert_eq!(s[j], var.sqrt());
        }
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn single_sample_statistics_are_refused() {
        let one = [1.0, 2.0];
        assert!(SignalStatistics::from_signals(&[&one], 1).is_err());
    }

    #[test]
    fn correlation_is_a_guarded_correlation_matrix() {
        let signals: Vec<Vec<f64>> = (0..6)
            .map(|k| {
                let t = k as f64;
                vec![t, 2.0 * t + 1.0, (t * 1.3).sin(), 5.0, -t, t * t]
            })
            .collect();
        let refs: Vec<&[f64]> = signals.iter().map(|s| s.as_slice()).collect();
        let st = SignalStatistics::from_signals(&refs, 3).unwrap();
        for i in 0..st.dim {
            assert!((st.correlation_at(i, i) - 1.0).abs() < 1e-10);
            for j in 0..st.dim {
                let r = st.correlation_at(i, j);
                assert!(r.abs() <= 1.0 + 1e-10);
                assert_eq!(r, st.correlation_at(j, i));
            }
        }
        // Constant entry: zero variance, guarded.
        assert_eq!(st.correlation_at(3, 0), 0.0);
        assert!((st.correlation_at(0, 1) - 1.0).abs() < 1e-12);
        assert!((st.correlation_at(0, 4) + 1.0).abs() < 1e-12);
        let cov = DMatrix::from_row_slice(st.dim, st.dim, &st.covariance);
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-10 * eig.eigenvalues.amax()));
    }

    #[test]
    fn identical_samples_have_zero_deviation() {
        let s = vec![1.0, -2.0, 3.5];
        let refs = vec![s.as_slice(); 4];
        let st = SignalStatistics::from_signals(&refs, 3).unwrap();
        assert!(st.std.iter().all(|v| *v == 0.0));
        assert!(st.covariance.iter().all(|v| *v == 0.0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(st.correlation_at(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn block_contrast_separates_blocks() {
        // Two blocks of two entries: within-block entries move together.
        let signals: Vec<Vec<f64>> = (0..8)
            .map(|k| {
                let a = ((k * 7 % 5) as f64).sin();
                let b = ((k * 3 % 7) as f64).cos();
                vec![a, a + 0.01 * b, b, b - 0.01 * a]
            })
            .collect();
        let refs: Vec<&[f64]> = signals.iter().map(|s| s.as_slice()).collect();
        let st = SignalStatistics::from_signals(&refs, 2).unwrap();
        let (w, a) = st.block_contrast();
        assert!(w > a);
    }
}
