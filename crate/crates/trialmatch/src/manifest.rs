//! The reproducibility record written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::io::{self, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Keyed by role, e.g. `patients` or `run:0`.
    pub inputs: BTreeMap<String, InputDigest>,
    /// Output file (relative to the manifest) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub failures: Vec<Value>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

impl RunManifest {
    pub fn start(command: &str, config: Value, seed: u64) -> Self {
        let now = Utc::now();
        RunManifest {
            command: command.into(),
            config,
            seed,
            backend: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now,
            finished_at: now,
            failures: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn add_input(&mut self, role: impl Into<String>, path: &Path) -> Result<(), IoError> {
        let sha256 = io::sha256_file(path)?;
        self.inputs.insert(
            role.into(),
            InputDigest {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    /// Records digests of `files` (relative to `dir`), stamps the finish
    /// time and writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path, files: &[String]) -> Result<Self, IoError> {
        for f in files {
            self.outputs
                .insert(f.clone(), io::sha256_file(&dir.join(f))?);
        }
        self.finished_at = Utc::now();
        io::write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        io::read_json(&dir.join(MANIFEST_FILE))
    }
}
