use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::Model;
use crate::error::{Error, Result};
use crate::hashing::config_hash;
use crate::tensor::{ParameterSet, RunningStats};

pub const CHECKPOINT_FORMAT: &str = "propwake-checkpoint/1";

/// Self-describing model snapshot: named tensors with shapes, Adam moments and step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    /// Hash of the run configuration that produced the model.
    pub config_hash: String,
    pub model_hash: String,
    pub params: ParameterSet,
    pub bn_stats: Vec<RunningStats>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, run_hash: impl Into<String>) -> Result<Self> {
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config.clone(),
            config_hash: run_hash.into(),
            model_hash: config_hash(&model.config)?,
            params: model.params.clone(),
            bn_stats: model.bn_stats.clone(),
        })
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let mut model = Model::new(&self.config, 0)?;
        model.load_state(&self.params, &self.bn_stats)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
