use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of what a command was asked to do, written before it starts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Merged configuration, one `name = value` text per section.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(mut self, section: &str, text: String) -> Self {
        self.config.push((section.to_string(), text));
        self
    }

    pub fn input(mut self, path: Option<&Path>) -> Result<Self, CliError> {
        if let Some(p) = path {
            self.inputs.push(InputDigest { path: p.to_path_buf(), sha256: sha256_file(p)? });
        }
        Ok(self)
    }

    pub fn outputs(mut self, dir: &Path, names: &[&str]) -> Self {
        self.outputs.extend(names.iter().map(|n| dir.join(n)));
        self
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }
}
