//! Per-subcommand JSON manifests. Each records the SHA-256 of every file it
//! produced; consumers check their inputs against the producer's record.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_sha256: String,
    /// Input path (relative to the output directory) to hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub scalars: BTreeMap<String, serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Pipeline(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn manifest_path(out: &Path, subcommand: &str) -> PathBuf {
    out.join("manifests").join(format!("{subcommand}.json"))
}

/// Accumulates the manifest of one subcommand run.
pub struct Recorder {
    out: PathBuf,
    manifest: Manifest,
}

impl Recorder {
    pub fn new(out: &Path, subcommand: &str, config_text: &str) -> Self {
        Self {
            out: out.to_path_buf(),
            manifest: Manifest {
                subcommand: subcommand.into(),
                config_sha256: sha256_hex(config_text.as_bytes()),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                scalars: BTreeMap::new(),
            },
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Checks `rel` against the hash recorded by `producer` and returns its full path.
    pub fn input(&mut self, producer: &str, rel: &str) -> Result<PathBuf, Failure> {
        let mpath = manifest_path(&self.out, producer);
        if !mpath.exists() {
            return Err(Failure::Pipeline(format!(
                "missing artifact '{rel}': no manifest from '{producer}' at {} (run `{producer}` first)",
                mpath.display()
            )));
        }
        let text = std::fs::read_to_string(&mpath).map_err(|e| Failure::Pipeline(format!("cannot read {}: {e}", mpath.display())))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Failure::Pipeline(format!("corrupt manifest {}: {e}", mpath.display())))?;
        let recorded = m
            .outputs
            .get(rel)
            .ok_or_else(|| Failure::Pipeline(format!("missing artifact '{rel}': not produced by '{producer}'")))?;
        let full = self.out.join(rel);
        if !full.exists() {
            return Err(Failure::Pipeline(format!("missing artifact '{rel}' at {}", full.display())));
        }
        let actual = file_sha256(&full)?;
        if &actual != recorded {
            return Err(Failure::Pipeline(format!(
                "artifact '{rel}' changed since '{producer}' wrote it (sha256 {actual} != {recorded})"
            )));
        }
        self.manifest.inputs.insert(rel.into(), actual);
        Ok(full)
    }

    /// Records a file already written under the output directory.
    pub fn output(&mut self, rel: &str) -> Result<(), Failure> {
        let hash = file_sha256(&self.out.join(rel))?;
        self.manifest.outputs.insert(rel.into(), hash);
        Ok(())
    }

    pub fn scalar(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.manifest.scalars.insert(key.into(), value.into());
    }

    pub fn finish(self) -> Result<Manifest, Failure> {
        let path = manifest_path(&self.out, &self.manifest.subcommand);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Pipeline(format!("cannot create {}: {e}", dir.display())))?;
        }
        std::fs::write(&path, text).map_err(|e| Failure::Pipeline(format!("cannot write {}: {e}", path.display())))?;
        Ok(self.manifest)
    }
}
