//! End-to-end runs of the reconstruction chain at small scale.

use aet_core::analysis::rasterize;
use aet_core::electrostatics::BoundaryCurrent;
use aet_core::lab::{Lab, LabConfig};
use aet_core::recon_sigma::{reconstruct_conductivity, PowerDatum, SigmaProblem, SigmaReconParams};
use aet_core::uq::{few_source_artifact_demo, run_ensemble, EnsembleConfig, Reconstructor};
use aet_core::wave::SourceConfig;

fn small_config(sources: usize) -> LabConfig {
    LabConfig {
        mesh_nodes: 500,
        grid_points: 97,
        records: 48,
        sources: SourceConfig {
            count: sources,
            ..SourceConfig::default()
        },
        ..LabConfig::desk()
    }
}

#[test]
fn exact_speed_recovers_power_density_and_conductivity() {
    let lab = Lab::new(small_config(12)).unwrap();
    let c = lab.inclusion_speed().unwrap();
    let recon = Reconstructor::new(&lab, &c).unwrap();
    let data = recon.synthesize(&recon.assumed);
    let params = SigmaReconParams {
        outer_iters: 10,
        ..SigmaReconParams::default()
    };
    let r = recon.reconstruct(&data, Some(&params)).unwrap();
    for e in &r.h_errors {
        assert!(*e < 0.05, "power density error {e}");
    }
    assert!(r.sigma_error < 0.1, "conductivity error {}", r.sigma_error);
}

#[test]
fn reconstruction_respects_mirror_symmetry() {
    // Phantom and both currents are symmetric under x -> -x.
    let lab = Lab::new(LabConfig {
        mesh_nodes: 1500,
        ..small_config(4)
    })
    .unwrap();
    let mesh = &lab.mesh;
    let currents = vec![
        BoundaryCurrent::projected(mesh, "x2", |_, y| y),
        BoundaryCurrent::projected(mesh, "x1", |x, _| x),
    ];
    let hs = lab.power_densities(&lab.phantom(), &currents).unwrap();
    let data: Vec<PowerDatum> = hs
        .into_iter()
        .zip(currents)
        .map(|(z, current)| PowerDatum { z, current })
        .collect();
    let params = SigmaReconParams {
        outer_iters: 8,
        ..SigmaReconParams::default()
    };
    let r = reconstruct_conductivity(SigmaProblem {
        mesh,
        mass_factor: &lab.mass_factor,
        data: &data,
        params: &params,
    })
    .unwrap();
    let px = 101;
    let img = rasterize(mesh, r.sigma.values(), px);
    let (mut diff, mut norm) = (0.0, 0.0);
    for row in 0..px {
        for col in 0..px {
            let a = img[row * px + col];
            let b = img[row * px + (px - 1 - col)];
            if a.is_finite() && b.is_finite() {
                diff += (a - b).powi(2);
                norm += a * a;
            }
        }
    }
    let rel = (diff / norm).sqrt();
    assert!(rel < 0.02, "mirror mismatch {rel}");
}

#[test]
fn few_sources_with_wrong_speed_leave_a_star_artifact() {
    let cfg = LabConfig {
        mesh_nodes: 1600,
        grid_points: 129,
        records: 60,
        ..LabConfig::desk()
    };
    let mesh = aet_core::generate_disk_mesh(1.0, cfg.mesh_nodes).unwrap();
    let few = few_source_artifact_demo(&cfg, &mesh, 12, 1.05).unwrap();
    let many = few_source_artifact_demo(&cfg, &mesh, 36, 1.0).unwrap();
    assert!(few.harmonic_dominance() > 3.0, "12-fold dominance {}", few.harmonic_dominance());
    assert!(many.dominance_at(12) < 1.0, "12-fold dominance with 36 sources {}", many.dominance_at(12));
    assert!(few.relative_error > many.relative_error);
}

#[test]
fn ensembles_are_reproducible_and_write_their_summary() {
    let lab = Lab::new(small_config(4)).unwrap();
    let assumed = lab.assumed_speed().unwrap();
    let recon = Reconstructor::new(&lab, &assumed).unwrap();
    let config = EnsembleConfig {
        samples: 3,
        master_seed: 11,
        sigma: Some(SigmaReconParams {
            outer_iters: 2,
            ..SigmaReconParams::default()
        }),
        ..EnsembleConfig::default()
    };
    let a = run_ensemble(&recon, &config).unwrap();
    let b = run_ensemble(&recon, &config).unwrap();
    assert_eq!(a.samples.len(), 3);
    assert!(a.failures.is_empty());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.signal, y.signal);
        assert_eq!(x.reconstruction.sigma, y.reconstruction.sigma);
    }
    assert_ne!(a.samples[0].signal, a.samples[1].signal);

    let dir = tempfile::tempdir().unwrap();
    let files = a.write(dir.path()).unwrap();
    for name in ["mean_sigma.field", "std_sigma.field", "corr.bin", "report.csv", "mean_h_x1.field", "std_h_diag.field"] {
        assert!(files.contains(&dir.path().join(name)), "{name} not written");
    }
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4, "{report}");
}
