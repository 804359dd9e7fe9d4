//! Artifact files and the run manifest.
//!
//! Every emitted file is recorded with its SHA-256 so a reader can verify
//! integrity offline. Float columns print as `{:.16e}`: 17 significant
//! digits, enough to round-trip an f64, so reruns diff byte for byte.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the manifest's directory.
    pub path: String,
    /// What the file holds; `emit-plots` dispatches on this.
    pub kind: String,
    /// Task that produced it.
    pub task: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub config_sha256: String,
    pub artifacts: Vec<ArtifactRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn write_artifact(
    dir: &Path,
    rel_path: &str,
    content: &str,
    task: &str,
    kind: &str,
) -> io::Result<ArtifactRecord> {
    let full = dir.join(rel_path);
    if let Some(parent) = full.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&full, content.as_bytes())?;
    Ok(ArtifactRecord {
        path: rel_path.to_string(),
        kind: kind.to_string(),
        task: task.to_string(),
        bytes: content.len() as u64,
        sha256: sha256_hex(content.as_bytes()),
    })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> io::Result<PathBuf> {
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, text)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<(Manifest, PathBuf), String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((manifest, dir))
}

/// A CSV body under construction; columns joined by commas, one header line.
pub struct Csv {
    body: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            body: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    /// Prepends a `# …` comment line above everything written so far.
    pub fn comment(&mut self, line: &str) {
        self.body = format!("# {line}\n{}", self.body);
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        self.body
    }
}
