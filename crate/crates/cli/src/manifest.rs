//! Run manifests and output plumbing.
//!
//! A manifest embedded in an output holds only run-determining fields, so
//! equal manifests give byte-equal outputs. The `*.run.json` sidecar adds
//! thread count, wall time and output digests.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_input: Option<serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            raw_input: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            threads: None,
            wall_time_secs: None,
        }
    }
}

/// `out.csv` → `out.run.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Writes `body` to `out` (or stdout) and, for files, the run sidecar.
pub fn emit(
    body: &str,
    out: Option<&Path>,
    mut manifest: RunManifest,
    threads: usize,
    wall: f64,
) -> Result<(), CliError> {
    manifest.threads = Some(threads);
    manifest.wall_time_secs = Some(wall);
    match out {
        Some(path) => {
            std::fs::write(path, body).map_err(|e| CliError::io(path, e))?;
            manifest.outputs.push(FileDigest::of(path)?);
            write_sidecar(path, &manifest)
        }
        None => {
            print!("{body}");
            log::info!("finished in {wall:.3} s on {threads} thread(s)");
            Ok(())
        }
    }
}

pub fn write_sidecar(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = sidecar_path(out);
    std::fs::write(&path, to_json(manifest)).map_err(|e| CliError::io(&path, e))
}

/// Config sections recovered from a `--config` file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub config: Option<serde_json::Value>,
    pub raw_input: Option<serde_json::Value>,
}

/// Accepts a plain config object, a run manifest, or a report embedding one.
pub fn load_config(path: &Path, command: &str) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let manifest = value
        .get("manifest")
        .cloned()
        .or_else(|| value.get("command").is_some().then(|| value.clone()));
    match manifest {
        Some(m) => {
            let m: RunManifest = serde_json::from_value(m)
                .map_err(|e| CliError::Usage(format!("{}: bad manifest: {e}", path.display())))?;
            if m.command != command {
                return Err(CliError::Usage(format!(
                    "{} records a `{}` run, not `{command}`",
                    path.display(),
                    m.command
                )));
            }
            Ok(ConfigFile {
                config: Some(m.config),
                raw_input: m.raw_input,
            })
        }
        None => Ok(ConfigFile {
            config: Some(value),
            ..ConfigFile::default()
        }),
    }
}
