//! `manifest.json`: per stage, the config hash, seed and SHA-256 of every
//! input and output file. No timestamps, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{read_json, sha256_file, write_json};
use crate::config::PipelineConfig;
use crate::error::TwinResult;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn config_hash(config: &PipelineConfig) -> String {
    hex::encode(Sha256::digest(config.canonical().as_bytes()))
}

fn hashes(dir: &Path, files: &[String]) -> TwinResult<BTreeMap<String, String>> {
    files.iter().map(|f| Ok((f.clone(), sha256_file(&dir.join(f))?))).collect()
}

pub fn load(dir: &Path) -> TwinResult<Manifest> {
    let path = dir.join(MANIFEST);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(Manifest::default())
    }
}

/// Replaces the entry of `stage` and rewrites the manifest.
pub fn record(
    dir: &Path,
    stage: &str,
    config: &PipelineConfig,
    inputs: &[String],
    outputs: &[String],
) -> TwinResult<StageRecord> {
    let entry = StageRecord {
        config_hash: config_hash(config),
        seed: config.seed,
        inputs: hashes(dir, inputs)?,
        outputs: hashes(dir, outputs)?,
    };
    let mut manifest = load(dir)?;
    manifest.stages.insert(stage.to_string(), entry.clone());
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(entry)
}
