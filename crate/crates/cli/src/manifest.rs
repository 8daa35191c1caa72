//! The record every command leaves next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// relative to the output directory
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceLine {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// sha256 of the config bytes, or of the command line for commands
    /// without a config file
    pub config_hash: String,
    pub code_version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<OutputFile>,
    pub acceptance: Vec<AcceptanceLine>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, hashed: &[u8]) -> Self {
        Self {
            command: command.into(),
            config_hash: sha256_hex(hashed),
            code_version: env!("CARGO_PKG_VERSION").into(),
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            outputs: Vec::new(),
            acceptance: Vec::new(),
        }
    }

    pub fn check(&mut self, criterion: &str, passed: bool, detail: String) {
        self.acceptance.push(AcceptanceLine { criterion: criterion.into(), passed, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.acceptance.iter().all(|a| a.passed)
    }

    /// Records the sizes of `files` (paths inside `dir`), stamps the finish
    /// time and writes `manifest.json`.
    pub fn finish(mut self, dir: &Path, files: &[PathBuf]) -> std::io::Result<Self> {
        self.outputs = files
            .iter()
            .map(|f| {
                let bytes = fs::metadata(f)?.len();
                let path = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
                Ok(OutputFile { path, bytes })
            })
            .collect::<std::io::Result<_>>()?;
        self.finished_unix_s = unix_now();
        let json = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(self)
    }
}
