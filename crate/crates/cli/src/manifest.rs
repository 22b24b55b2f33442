//! JSON-lines run manifests. Each run appends one line to
//! `<out>/manifest.jsonl`.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{usage, ConfigMap};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: ConfigMap,
    pub inputs: Vec<String>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub out_dir: String,
    pub runtime_seconds: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: ConfigMap, out_dir: &Path) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_string_lossy().into_owned(),
            runtime_seconds: BTreeMap::new(),
        }
    }

    pub fn append_to(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        writeln!(f, "{}", serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Last record of a manifest file.
pub fn read_last(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let line = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| usage(format!("manifest {} is empty", path.display())))?;
    serde_json::from_str(line)
        .map_err(|e| usage(format!("malformed manifest {}: {e}", path.display())))
}
