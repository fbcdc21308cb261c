//! Run manifests: enough to reproduce a sweep bit for bit.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// SHA-256 of the canonical JSON form of the parsed config.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(cfg)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            name: cfg.name.clone(),
            config_sha256: config_hash(cfg)?,
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}
