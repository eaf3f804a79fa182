use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Provenance record written once per output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    /// SHA-256 over the arguments, the effective configuration, and every
    /// input file.
    pub config_hash: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    pub tool_version: String,
}

pub struct Recorder {
    command: String,
    arguments: Vec<String>,
    hasher: Sha256,
    started: String,
    out: PathBuf,
    artifacts: Vec<String>,
    pub warnings: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let arguments: Vec<String> = std::env::args().skip(1).collect();
        let mut hasher = Sha256::new();
        for a in &arguments {
            hasher.update(a.as_bytes());
            hasher.update([0]);
        }
        Ok(Self {
            command: command.into(),
            arguments,
            hasher,
            started: now(),
            out: out.to_path_buf(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn hash_bytes(&mut self, bytes: &[u8]) {
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn hash_file(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.hash_bytes(&bytes);
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes an artifact built in memory and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.artifacts.push(name.into());
        Ok(())
    }

    pub fn warn(&mut self, message: String) {
        self.warnings.push(message);
    }

    pub fn finish(self, seed: u64) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            arguments: self.arguments,
            config_hash: format!("{:x}", self.hasher.finalize()),
            seed,
            started: self.started,
            finished: now(),
            artifacts: self.artifacts,
            warnings: self.warnings,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        };
        let path = self.out.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}
