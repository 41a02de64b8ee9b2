//! Subcommand bodies. Each reads its declared inputs through the manifest
//! chain and records every file it writes.

use std::path::Path;

use aet_core::acceptance::{run_all, run_criterion};
use aet_core::analysis::rasterize;
use aet_core::electrostatics::{BoundaryCurrent, PowerSignal};
use aet_core::forward::{assemble_with_mass, ForwardMatrix};
use aet_core::grid::CartesianGrid;
use aet_core::io::{write_pgm, write_text};
use aet_core::lab::Lab;
use aet_core::recon_power::{optimal_beta_search_in, SpectralTikhonov};
use aet_core::recon_sigma::{reconstruct_conductivity, PowerDatum, SigmaProblem};
use aet_core::sampler::{build_sound_speed, sample_structure, Disk, C_BACKGROUND, C_INCLUSION};
use aet_core::uq::{mu_sweep, mu_sweep_csv, run_ensemble, Reconstructor};
use aet_core::wave::{SoundSpeedField, SpeedLabel, WaveRecord};
use aet_core::{generate_disk_mesh, NodalField, TriangleMesh};

use crate::config::{AssumedModel, ExperimentConfig, TrueModel};
use crate::manifest::Recorder;
use crate::{Command, Failure};

const RASTER: usize = 256;
const SPEED_LABELS: [&str; 2] = ["true", "assumed"];

pub fn dispatch(command: &Command, config: &ExperimentConfig) -> Result<(), Failure> {
    let name = match command {
        Command::Mesh => "mesh",
        Command::SampleC => "sample-c",
        Command::Simulate => "simulate",
        Command::Assemble => "assemble",
        Command::SynthData => "synth-data",
        Command::ReconH => "recon-h",
        Command::ReconSigma => "recon-sigma",
        Command::Ensemble => "ensemble",
        Command::MuSweep => "mu-sweep",
        Command::Verify { .. } => "verify",
    };
    let mut rec = Recorder::new(&config.output, name, &config.canonical());
    match command {
        Command::Mesh => mesh(config, &mut rec)?,
        Command::SampleC => sample_c(config, &mut rec)?,
        Command::Simulate => simulate(config, &mut rec)?,
        Command::Assemble => assemble(config, &mut rec)?,
        Command::SynthData => synth_data(config, &mut rec)?,
        Command::ReconH => recon_h(config, &mut rec)?,
        Command::ReconSigma => recon_sigma(config, &mut rec)?,
        Command::Ensemble => ensemble(config, &mut rec)?,
        Command::MuSweep => sweep(config, &mut rec)?,
        Command::Verify { criteria } => return verify(config, rec, criteria),
    }
    let m = rec.finish()?;
    println!("{name}: wrote {} files", m.outputs.len());
    Ok(())
}

fn write_field(rec: &mut Recorder, rel: &str, f: &NodalField) -> Result<(), Failure> {
    f.write(&rec.path(rel))?;
    rec.output(rel)
}

/// Raster image of a nodal field, scaled to its own range.
fn write_field_image(rec: &mut Recorder, rel: &str, mesh: &TriangleMesh, f: &[f64]) -> Result<(), Failure> {
    let img = rasterize(mesh, f, RASTER);
    let (lo, hi) = value_range(&img);
    write_pgm(&rec.path(rel), RASTER, RASTER, &img, lo, hi)?;
    rec.output(rel)
}

fn value_range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn grid(config: &ExperimentConfig) -> Result<CartesianGrid, Failure> {
    let w = &config.wave;
    Ok(CartesianGrid::new(w.half_width, w.inner_half_width, w.grid)?)
}

fn load_mesh(rec: &mut Recorder) -> Result<TriangleMesh, Failure> {
    let p = rec.input("mesh", "mesh.txt")?;
    Ok(TriangleMesh::read(&p)?)
}

fn lab_with(config: &ExperimentConfig, mesh: TriangleMesh) -> Result<Lab, Failure> {
    Ok(Lab::with_mesh(config.lab_config(), mesh)?)
}

/// Lab on a freshly generated mesh, for the self-contained studies.
fn fresh_lab(config: &ExperimentConfig) -> Result<Lab, Failure> {
    let mesh = generate_disk_mesh(config.mesh.radius, config.mesh.target_nodes)?;
    lab_with(config, mesh)
}

fn assumed_for(config: &ExperimentConfig, truth: &SoundSpeedField, g: &CartesianGrid) -> Result<SoundSpeedField, Failure> {
    Ok(match config.speed.assumed_model {
        AssumedModel::Constant => SoundSpeedField::constant(g, C_BACKGROUND, SpeedLabel::Assumed)?,
        AssumedModel::Scaled => truth.scaled(config.speed.assumed_factor, SpeedLabel::Assumed)?,
    })
}

fn mesh(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let m = generate_disk_mesh(config.mesh.radius, config.mesh.target_nodes)?;
    m.write(&rec.path("mesh.txt"))?;
    rec.output("mesh.txt")?;
    rec.scalar("nodes", m.node_count());
    rec.scalar("triangles", m.triangles().len());
    rec.scalar("boundary_nodes", m.boundary_nodes().len());
    Ok(())
}

fn sample_c(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let g = grid(config)?;
    let params = config.sampler_params();
    let truth = match config.speed.true_model {
        TrueModel::Random => {
            let s = sample_structure(&params, g.half_width(), config.mesh.radius)?;
            s.write_pgm(&rec.path("speed/structure.pgm"))?;
            rec.output("speed/structure.pgm")?;
            build_sound_speed(Some(&s), Disk::INCLUSION, C_BACKGROUND, C_INCLUSION, params.mu, &g)?
        }
        TrueModel::Inclusion => build_sound_speed(None, Disk::INCLUSION, C_BACKGROUND, C_INCLUSION, 0.0, &g)?,
    };
    let assumed = assumed_for(config, &truth, &g)?;
    for (label, c) in SPEED_LABELS.iter().zip([&truth, &assumed]) {
        let rel = format!("speed/c_{label}.bin");
        c.write(&rec.path(&rel))?;
        rec.output(&rel)?;
        let n = g.points();
        // Row 0 of the image is the top (largest y).
        let flipped: Vec<f64> = (0..n).rev().flat_map(|j| c.values()[j * n..(j + 1) * n].to_vec()).collect();
        let (lo, hi) = value_range(&flipped);
        let img = format!("speed/c_{label}.pgm");
        write_pgm(&rec.path(&img), n, n, &flipped, lo, hi)?;
        rec.output(&img)?;
    }
    rec.scalar("seed", params.seed);
    rec.scalar("c_min", truth.min());
    rec.scalar("c_max", truth.max());
    rec.scalar("speed_distance", truth.distance(&assumed)?);
    Ok(())
}

fn wave_name(label: &str, source: usize) -> String {
    format!("waves/{label}_s{source:03}.bin")
}

fn simulate(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = lab_with(config, load_mesh(rec)?)?;
    for label in SPEED_LABELS {
        let kind = if label == "true" { SpeedLabel::True } else { SpeedLabel::Assumed };
        let p = rec.input("sample-c", &format!("speed/c_{label}.bin"))?;
        let c = SoundSpeedField::read(&p, kind)?;
        if !c.matches(&lab.grid) {
            return Err(Failure::Config(format!("speed/c_{label}.bin does not match the configured wave grid")));
        }
        let mut peak: f64 = 0.0;
        for s in 0..config.wave.sources {
            let w = lab.simulate(&c, Some(&[s]))?.remove(0);
            peak = peak.max(w.max_abs());
            let rel = wave_name(label, s);
            w.write(&rec.path(&rel))?;
            rec.output(&rel)?;
        }
        rec.scalar(&format!("peak_pressure_{label}"), peak);
    }
    rec.scalar("records", config.wave.records + 1);
    rec.scalar("dt", lab.settings.dt);
    Ok(())
}

fn operator_name(label: &str) -> String {
    format!("operators/K_{label}.bin")
}

fn assemble(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = lab_with(config, load_mesh(rec)?)?;
    for label in SPEED_LABELS {
        let waves = (0..config.wave.sources)
            .map(|s| {
                let p = rec.input("simulate", &wave_name(label, s))?;
                WaveRecord::read(&p).map_err(Failure::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let k = assemble_with_mass(&lab.mass, &waves, config.physics.eta, label)?;
        let rel = operator_name(label);
        k.write(&rec.path(&rel))?;
        rec.output(&rel)?;
        rec.scalar(&format!("frobenius_{label}"), k.frobenius());
        rec.scalar("rows", k.rows());
        rec.scalar("cols", k.cols());
    }
    Ok(())
}

fn signal_name(current: &str, source: usize) -> String {
    format!("signals/{current}_s{source:03}.csv")
}

fn synth_data(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = lab_with(config, load_mesh(rec)?)?;
    let k = ForwardMatrix::read(&rec.input("assemble", &operator_name("true"))?)?;
    let sigma = lab.phantom();
    write_field(rec, "truth/sigma.field", &sigma)?;
    write_field_image(rec, "truth/sigma.pgm", &lab.mesh, sigma.values())?;
    let currents = BoundaryCurrent::standard_set(&lab.mesh);
    let hs = lab.power_densities(&sigma, &currents)?;
    let dt = lab.settings.record_dt();
    let mut peak: f64 = 0.0;
    for (f, h) in currents.iter().zip(&hs) {
        write_field(rec, &format!("truth/h_{}.field", f.id()), h)?;
        let data = k.apply(h.values());
        peak = data.iter().fold(peak, |m, v| m.max(v.abs()));
        for (s, block) in data.chunks(k.samples_per_source()).enumerate() {
            let signal = PowerSignal {
                current_id: f.id().to_string(),
                source: s,
                dt,
                values: block.to_vec(),
            };
            let rel = signal_name(f.id(), s);
            signal.write(&rec.path(&rel))?;
            rec.output(&rel)?;
        }
    }
    rec.scalar("max_abs_signal", peak);
    Ok(())
}

fn recon_h(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = lab_with(config, load_mesh(rec)?)?;
    let k = ForwardMatrix::read(&rec.input("assemble", &operator_name("assumed"))?)?;
    let spectral = SpectralTikhonov::new(&k, &lab.mass_factor)?;
    let mut report = String::from("current,beta_relative,beta,relative_error,at_lower_bound,normal_residual\n");
    for f in BoundaryCurrent::standard_set(&lab.mesh) {
        let id = f.id().to_string();
        let h_true = NodalField::read(&rec.input("synth-data", &format!("truth/h_{id}.field"))?)?;
        let mut data = Vec::with_capacity(k.rows());
        for s in 0..k.sources() {
            let sig = PowerSignal::read(&rec.input("synth-data", &signal_name(&id, s))?)?;
            if sig.source != s || sig.values.len() != k.samples_per_source() {
                return Err(Failure::Pipeline(format!("signal {} does not match the assumed operator", signal_name(&id, s))));
            }
            data.extend_from_slice(&sig.values);
        }
        let search = optimal_beta_search_in(&spectral, &k, &lab.mass, &lab.mass_factor, &data, &h_true, config.log_beta_range())?;
        let r = &search.result;
        report.push_str(&format!(
            "{id},{:e},{:e},{:e},{},{:e}\n",
            search.relative_beta, r.beta, search.relative_error, search.at_lower_bound, r.normal_residual
        ));
        let h = r.h.clone();
        write_field(rec, &format!("recon/h_{id}.field"), &h)?;
        write_field_image(rec, &format!("recon/h_{id}.pgm"), &lab.mesh, h.values())?;
        rec.scalar(&format!("relative_error_{id}"), search.relative_error);
        rec.scalar(&format!("beta_relative_{id}"), search.relative_beta);
    }
    write_text(&rec.path("recon/report.csv"), &report)?;
    rec.output("recon/report.csv")
}

fn recon_sigma(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = lab_with(config, load_mesh(rec)?)?;
    let data = BoundaryCurrent::standard_set(&lab.mesh)
        .into_iter()
        .map(|current| {
            let z = NodalField::read(&rec.input("recon-h", &format!("recon/h_{}.field", current.id()))?)?;
            Ok(PowerDatum { z, current })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let params = config.sigma_params();
    let r = reconstruct_conductivity(SigmaProblem {
        mesh: &lab.mesh,
        mass_factor: &lab.mass_factor,
        data: &data,
        params: &params,
    })?;
    write_field(rec, "recon/sigma.field", &r.sigma)?;
    write_field_image(rec, "recon/sigma.pgm", &lab.mesh, r.sigma.values())?;
    r.write_convergence(&rec.path("recon/convergence.csv"))?;
    rec.output("recon/convergence.csv")?;
    rec.scalar("iterations", r.log.len());
    rec.scalar("final_objective", r.final_objective());
    rec.scalar("relative_error", lab.relative_m_error(r.sigma.values(), lab.phantom().values()));
    Ok(())
}

fn reconstructor_assumed(config: &ExperimentConfig, lab: &Lab) -> Result<SoundSpeedField, Failure> {
    let inclusion = lab.inclusion_speed()?;
    assumed_for(config, &inclusion, &lab.grid)
}

fn record_tree(rec: &mut Recorder, out: &Path, files: &[std::path::PathBuf]) -> Result<(), Failure> {
    for f in files {
        let rel = f
            .strip_prefix(out)
            .map_err(|_| Failure::Pipeline(format!("{} is outside the output directory", f.display())))?;
        rec.output(&rel.to_string_lossy())?;
    }
    Ok(())
}

fn ensemble(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = fresh_lab(config)?;
    let assumed = reconstructor_assumed(config, &lab)?;
    let mut recon = Reconstructor::new(&lab, &assumed)?;
    recon.log_beta_range = config.log_beta_range();
    let outcome = run_ensemble(&recon, &config.ensemble_config())?;
    let files = outcome.write(&config.output.join("ensemble"))?;
    record_tree(rec, &config.output, &files)?;
    if let Some(s) = &outcome.summary {
        if let (Some(m), Some(sd)) = (&s.mean_sigma, &s.std_sigma) {
            write_field_image(rec, "ensemble/mean_sigma.pgm", &lab.mesh, m.values())?;
            write_field_image(rec, "ensemble/std_sigma.pgm", &lab.mesh, sd.values())?;
        }
    }
    for f in &outcome.failures {
        eprintln!("sample {} (seed {}) failed: {}", f.index, f.seed, f.message);
    }
    rec.scalar("samples", outcome.samples.len());
    rec.scalar("failures", outcome.failures.len());
    if outcome.samples.is_empty() {
        return Err(Failure::Pipeline("every ensemble sample failed".into()));
    }
    Ok(())
}

fn sweep(config: &ExperimentConfig, rec: &mut Recorder) -> Result<(), Failure> {
    let lab = fresh_lab(config)?;
    let assumed = reconstructor_assumed(config, &lab)?;
    let mut recon = Reconstructor::new(&lab, &assumed)?;
    recon.log_beta_range = config.log_beta_range();
    let rows = mu_sweep(&recon, &config.sampler_params(), &config.mu_sweep.values, &assumed)?;
    write_text(&rec.path("mu_sweep.csv"), &mu_sweep_csv(&rows))?;
    rec.output("mu_sweep.csv")?;
    for r in &rows {
        println!("mu {:.3}: relative error {:.4e}, beta* {:.3e}", r.mu, r.relative_error, r.beta);
    }
    rec.scalar("rows", rows.len());
    Ok(())
}

fn verify(config: &ExperimentConfig, mut rec: Recorder, criteria: &[u8]) -> Result<(), Failure> {
    let acc = config.acceptance_config();
    if let Some(bad) = criteria.iter().find(|c| !(1..=9).contains(*c)) {
        return Err(Failure::Config(format!("no acceptance criterion {bad}; valid numbers are 1 to 9")));
    }
    let reports = if criteria.is_empty() {
        run_all(&acc, |r| println!("{r}"))
    } else {
        criteria
            .iter()
            .map(|&id| {
                let r = run_criterion(id, &acc);
                println!("{r}");
                r
            })
            .collect()
    };
    let text: String = reports.iter().map(|r| format!("{r}\n")).collect();
    write_text(&rec.path("verify.txt"), &text)?;
    rec.output("verify.txt")?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    rec.scalar("passed", reports.len() - failed.len());
    rec.scalar("failed", failed.len());
    rec.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("criteria {} failed", failed.join(", "))))
    }
}
