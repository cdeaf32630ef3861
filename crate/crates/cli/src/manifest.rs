//! Run manifests: everything needed to repeat a command and check that it
//! produced the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use railfare::data::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const TOOL: &str = "railfare";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Inputs by role.
    pub inputs: BTreeMap<String, InputRecord>,
    pub config: RunConfig,
    /// Output file (or directory) name to its digest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.tool != TOOL {
            return Err(CliError::Manifest(format!("written by `{}`, not {TOOL}", m.tool)));
        }
        Ok(m)
    }

    /// Fails when an input no longer has its recorded digest.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for (role, rec) in &self.inputs {
            let now = digest(&rec.path)?;
            if now != rec.sha256 {
                return Err(CliError::Manifest(format!(
                    "{role} input {} changed since the run (sha256 {now}, recorded {})",
                    rec.path.display(),
                    rec.sha256
                )));
            }
        }
        Ok(())
    }
}

/// SHA-256 of a file, or of the sorted `name digest` listing of a directory.
pub fn digest(path: &Path) -> CliResult<String> {
    let meta = fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    if meta.is_dir() {
        let mut names: Vec<String> = fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::io(path, e))?;
        names.sort();
        let mut listing = String::new();
        for n in names {
            listing.push_str(&n);
            listing.push(' ');
            listing.push_str(&digest(&path.join(&n))?);
            listing.push('\n');
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }
}
