//! Run configuration files: JSON with `frontend`, `model` and `train` sections.
//!
//! Every key is optional; missing keys take their defaults and unknown keys
//! are rejected. The model's sequence length, width and patch size come from
//! the frontend section, and the class count from the manifest unless given.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::mixer::{ModelConfig, Variant};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    pub depth: usize,
    pub ff_expansion_channel: f64,
    pub ff_expansion_token: f64,
    pub roll_channels: usize,
    pub roll_height_folds: usize,
    pub num_classes: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            variant: m.variant,
            depth: m.depth,
            ff_expansion_channel: m.ff_expansion_channel,
            ff_expansion_token: m.ff_expansion_token,
            roll_channels: m.roll_channels,
            roll_height_folds: m.roll_height_folds,
            num_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frontend: FrontendConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
}

/// Fully resolved configuration as echoed into output directories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveConfig {
    pub frontend: FrontendConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Desk-scale preset: 32 tokens of width 64, four blocks.
    pub fn desk() -> Self {
        RunConfig {
            frontend: FrontendConfig::desk(),
            model: ModelSection { depth: 4, ..Default::default() },
            train: TrainConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Merges frontend geometry and the class count into a model configuration.
    pub fn resolve(&self, manifest_classes: usize) -> Result<EffectiveConfig> {
        self.frontend.validate()?;
        self.train.validate()?;
        let num_classes = self.model.num_classes.unwrap_or(manifest_classes);
        if num_classes < manifest_classes {
            return Err(Error::Config(format!(
                "model.num_classes={num_classes} but the manifest uses labels up to {}",
                manifest_classes - 1
            )));
        }
        let m = &self.model;
        let model = ModelConfig {
            seq_len: self.frontend.seq_len,
            embed_dim: self.frontend.embed_dim,
            depth: m.depth,
            ff_expansion_channel: m.ff_expansion_channel,
            ff_expansion_token: m.ff_expansion_token,
            num_classes,
            variant: m.variant,
            patch_dim: self.frontend.patch_dim(),
            roll_channels: m.roll_channels,
            roll_height_folds: m.roll_height_folds,
        };
        model.validate()?;
        Ok(EffectiveConfig { frontend: self.frontend.clone(), model, train: self.train.clone() })
    }
}
