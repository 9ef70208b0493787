//! Run manifests: written before any long computation starts with the
//! resolved configuration, then finalized with artifact checksums once the
//! outputs exist. Re-running with the same configuration reproduces the
//! checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub checksums: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            inputs,
            outputs,
            checksums: BTreeMap::new(),
        }
    }

    pub fn path_for(primary_output: &Path) -> PathBuf {
        let mut name = primary_output
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        name.push_str(".manifest.json");
        primary_output.with_file_name(name)
    }

    /// Writes the manifest (without checksums) before the run starts.
    pub fn write_initial(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }

    /// Fills in output checksums and rewrites the manifest.
    pub fn finalize(&mut self, path: &Path) -> Result<()> {
        for out in &self.outputs {
            self.checksums
                .insert(out.display().to_string(), sha256_file(out)?);
        }
        fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(())
    }
}
