//! Run manifests: everything needed to repeat a training run.

use std::path::Path;

use nhsplat::data_io::Supervision;
use nhsplat::optim::TrainConfig;
use nhsplat::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.ndjson";
pub const CLOUD_FILE: &str = "cloud.nhgc";
pub const CHECKPOINT_DIR: &str = "checkpoints";
/// Copy of the scene spec written next to a synthesized dataset.
pub const SCENE_FILE: &str = "scene.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub metrics: String,
    pub checkpoints: String,
    pub cloud: String,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            metrics: METRICS_FILE.into(),
            checkpoints: format!("{CHECKPOINT_DIR}/iter_<N>.nhgc"),
            cloud: CLOUD_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub data_dir: String,
    pub supervision: Supervision,
    pub train_views: usize,
    /// SHA-256 of the dataset's scene spec, when it was synthesized here.
    pub scene_spec_sha256: Option<String>,
    pub config: TrainConfig,
    pub layout: Layout,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a training config, or the config inside a run manifest.
pub fn read_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let inner = match value.get("config") {
        Some(c) if value.get("version").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}
