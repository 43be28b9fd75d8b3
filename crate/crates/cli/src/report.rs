//! Report files and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::write_atomic;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_seconds: f64,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub cli: String,
    pub library: String,
    pub manifest_schema: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub versions: Versions,
    /// `complete`, or `incomplete` when a stage failed.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub stages: Vec<StageRecord>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.status == "complete"
    }

    /// `(path, sha256)` pairs: the part that must not change between runs.
    pub fn output_hashes(&self) -> Vec<(String, String)> {
        self.outputs
            .iter()
            .map(|o| (o.path.clone(), o.sha256.clone()))
            .collect()
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Writes reports into the output directory and keeps their hashes.
#[derive(Debug)]
pub struct Reporter {
    dir: PathBuf,
    config_hash: String,
    pub outputs: Vec<OutputFile>,
}

impl Reporter {
    pub fn new(dir: PathBuf, config_hash: String) -> Self {
        Reporter {
            dir,
            config_hash,
            outputs: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, content: String) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), content.as_bytes())?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
            bytes: content.len(),
        });
        Ok(())
    }

    /// A CSV body behind the `# config_hash=` provenance line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let content = format!("# config_hash={}\n{body}", self.config_hash);
        self.write(name, content)
    }

    /// A JSON object; the config hash goes in as its `config_hash` field.
    pub fn json(&mut self, name: &str, value: serde_json::Value) -> Result<(), CliError> {
        let mut value = value;
        if let Some(obj) = value.as_object_mut() {
            obj.insert("config_hash".into(), self.config_hash.clone().into());
        }
        let mut content = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        content.push('\n');
        self.write(name, content)
    }

    /// Plain text (the canonical config).
    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write(name, body.to_string())
    }
}

/// Strips the provenance line, leaving the report body.
pub fn report_body(content: &str) -> &str {
    match content.strip_prefix("# config_hash=") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => content,
    }
}
