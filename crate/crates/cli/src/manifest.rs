//! Provenance record written next to every command's outputs.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub args: Vec<String>,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    /// SHA-256 of the effective configuration serialised as JSON.
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let text = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig, seed: u64, threads: usize) -> Result<Self> {
        Ok(Self {
            command,
            args: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            threads,
            config_sha256: config_hash(cfg)?,
            config: cfg,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}
