//! Run manifests: every successful command writes one next to its
//! outputs with the fully resolved configuration, seed, and paths, so
//! the run can be reproduced exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::formats::{write_json_atomic, FORMAT_VERSION};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    /// Fully resolved configuration of the run.
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub toolkit_version: String,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            wall_seconds: 0.0,
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Write next to the primary output: `<file>.manifest.json` for a
    /// file output, `manifest.json` inside a directory output.
    pub fn write_next_to(mut self, primary_output: &Path, wall_seconds: f64) -> Result<PathBuf, CliError> {
        self.wall_seconds = wall_seconds;
        let path = manifest_path(primary_output);
        write_json_atomic(&path, &self)?;
        Ok(path)
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    if primary_output.is_dir() {
        primary_output.join("manifest.json")
    } else {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string());
        name.push_str(".manifest.json");
        primary_output.with_file_name(name)
    }
}

/// Seed precedence: explicit flag beats the OCCLIFT_SEED environment
/// variable, which beats the configured default.
pub fn resolve_seed(flag: Option<u64>, config_default: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("OCCLIFT_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| CliError::config(format!("OCCLIFT_SEED must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(config_default),
    }
}
