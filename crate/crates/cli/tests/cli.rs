use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
output = "run"
[mesh]
target_nodes = 300
[wave]
grid = 65
records = 30
sources = 4
[ensemble]
samples = 2
[sigma_recon]
outer_iters = 3
"#;

fn aet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aet"))
        .arg("--config")
        .arg(dir.join("tiny.toml"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), format!("{TINY}{extra}")).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_dir(dir: &tempfile::TempDir) -> PathBuf {
    dir.path().join("run")
}

const CHAIN: [&str; 7] = ["mesh", "sample-c", "simulate", "assemble", "synth-data", "recon-h", "recon-sigma"];

#[test]
fn pipeline_runs_end_to_end_and_is_reproducible() {
    let dir = setup("");
    for c in CHAIN {
        ok(&aet(dir.path(), &[c]));
    }
    let run = run_dir(&dir);
    for f in ["mesh.txt", "speed/c_true.bin", "operators/K_assumed.bin", "recon/h_x1.field", "recon/sigma.pgm"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let first: Vec<Vec<u8>> = CHAIN
        .iter()
        .map(|c| std::fs::read(run.join(format!("manifests/{c}.json"))).unwrap())
        .collect();
    let sigma = std::fs::read(run.join("recon/sigma.field")).unwrap();
    for c in CHAIN {
        ok(&aet(dir.path(), &[c]));
    }
    for (c, bytes) in CHAIN.iter().zip(&first) {
        assert_eq!(&std::fs::read(run.join(format!("manifests/{c}.json"))).unwrap(), bytes, "{c} manifest changed");
    }
    assert_eq!(std::fs::read(run.join("recon/sigma.field")).unwrap(), sigma);
}

#[test]
fn downstream_without_upstream_names_the_missing_artifact() {
    let dir = setup("");
    let out = aet(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("mesh.txt"), "{}", stderr(&out));
}

#[test]
fn tampered_artifact_breaks_the_chain() {
    let dir = setup("");
    ok(&aet(dir.path(), &["mesh"]));
    ok(&aet(dir.path(), &["sample-c"]));
    let path = run_dir(&dir).join("mesh.txt");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    let out = aet(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("changed"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_with_code_two_and_a_line_number() {
    let dir = setup("[physics]\nbogus = 1\n");
    let out = aet(dir.path(), &["mesh"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus") && stderr(&out).contains("line"), "{}", stderr(&out));

    let dir = setup("");
    let out = aet(dir.path(), &["--set", "sampler.gamma_cut=1.5", "mesh"]);
    assert_eq!(out.status.code(), Some(2));
    let out = aet(dir.path(), &["verify", "--criteria", "12"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_pulse_gives_zero_signals() {
    let dir = setup("");
    for c in &CHAIN[..4] {
        ok(&aet(dir.path(), &["--set", "wave.amplitude=0", c]));
    }
    ok(&aet(dir.path(), &["--set", "wave.amplitude=0", "synth-data"]));
    let signals = run_dir(&dir).join("signals");
    let mut count = 0;
    for entry in std::fs::read_dir(signals).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        for line in text.lines().skip(2) {
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(v, 0.0);
        }
        count += 1;
    }
    assert_eq!(count, 12);
}

#[test]
fn seed_flag_changes_the_realization() {
    let dir = setup("");
    ok(&aet(dir.path(), &["--seed", "1", "sample-c"]));
    let a = std::fs::read(run_dir(&dir).join("speed/c_true.bin")).unwrap();
    ok(&aet(dir.path(), &["--seed", "2", "sample-c"]));
    let b = std::fs::read(run_dir(&dir).join("speed/c_true.bin")).unwrap();
    ok(&aet(dir.path(), &["--seed", "1", "sample-c"]));
    let c = std::fs::read(run_dir(&dir).join("speed/c_true.bin")).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn mesh_manifest_reports_the_node_count() {
    let dir = setup("");
    ok(&aet(dir.path(), &["--set", "mesh.target_nodes=20100", "mesh"]));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir(&dir).join("manifests/mesh.json")).unwrap()).unwrap();
    assert_eq!(m["scalars"]["nodes"], 20100);
}

#[test]
fn mu_sweep_and_ensemble_write_their_tables() {
    let dir = setup("");
    ok(&aet(dir.path(), &["--threads", "1", "mu-sweep"]));
    let csv = std::fs::read_to_string(run_dir(&dir).join("mu_sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "mu,relative_error,beta,at_lower_bound,speed_distance");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0,"));

    ok(&aet(dir.path(), &["--out", run_dir(&dir).join("ens").to_str().unwrap(), "ensemble"]));
    let ens = run_dir(&dir).join("ens/ensemble");
    for f in ["mean_sigma.field", "std_sigma.field", "corr.bin", "report.csv", "mean_h_x1.field"] {
        assert!(ens.join(f).exists(), "{f} missing");
    }
}

#[test]
fn verify_reports_one_line_per_requested_criterion() {
    let dir = setup("");
    let out = aet(dir.path(), &["verify", "--criteria", "9"]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.starts_with("criterion 9 PASS"), "{stdout}");
}
