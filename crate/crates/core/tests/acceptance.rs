//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 3 and 5 are known to fail at this setup; the decisions ledger
//! records why. They are still run and reported in full. Any other failure,
//! or an error inside a known-failing criterion, fails the target.

use std::process::ExitCode;

use aet_core::acceptance::{run_all, AcceptanceConfig};

const KNOWN_FAILURES: [u8; 2] = [3, 5];

fn main() -> ExitCode {
    let cfg = AcceptanceConfig::default();
    println!("acceptance suite ({} ensemble samples, master seed {})", cfg.ensemble_samples, cfg.master_seed);
    let reports = run_all(&cfg, |r| println!("{r}"));
    let mut unexpected = Vec::new();
    for r in &reports {
        let errored = r.detail.starts_with("error:");
        if !r.passed && (errored || !KNOWN_FAILURES.contains(&r.id)) {
            unexpected.push(r.id);
        }
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!(
        "acceptance: {passed}/{} criteria pass; known failures {:?}; unexpected failures {:?}",
        reports.len(),
        KNOWN_FAILURES,
        unexpected
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
