//! Run manifests: what was run, with which configuration and seed, on which
//! build, and what came out.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng;

/// `<crate version>-<git describe>` of the build, or `<version>-unknown`
/// outside a git checkout.
pub const BUILD_ID: &str = env!("SMEM_BUILD_ID");

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub build: String,
    pub rng: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub metrics: Value,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            build: BUILD_ID.into(),
            rng: rng::ALGORITHM.into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::json("manifest config", e))?,
            metrics: Value::Null,
            warnings: Vec::new(),
        })
    }

    pub fn set_metrics(&mut self, metrics: &impl Serialize) -> Result<()> {
        self.metrics = serde_json::to_value(metrics).map_err(|e| Error::json("manifest metrics", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))
    }

    /// Writes `dir/manifest.json`, creating `dir` if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()? + "\n").map_err(|e| Error::io(&path, e))
    }
}
