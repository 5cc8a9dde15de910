//! Config files: JSON, or TOML when the extension is `.toml`. Missing keys
//! take their defaults.

use std::path::Path;

use anyhow::{Context, Result};
use gkm_core::corpus::VocabularyConfig;
use gkm_core::decoder::{ExperimentConfig, ProtocolConfig, ResponseModel};
use gkm_core::som::SomConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub vocabulary: VocabularyConfig,
    pub som: SomConfig,
    /// Explained-variance threshold for the recorded intrinsic-dimension estimate.
    pub pca_threshold: f64,
    /// Distortion used for the recorded Johnson-Lindenstrauss bound.
    pub jl_epsilon: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            vocabulary: VocabularyConfig::default(),
            som: SomConfig::default(),
            pca_threshold: 0.95,
            jl_epsilon: 0.1,
        }
    }
}

/// One simulated subject trained through the online protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolRunConfig {
    pub model: ResponseModel,
    pub mixing: f64,
    pub noise_sigma: f64,
    pub iterations: usize,
    pub hidden: usize,
    pub eval_samples: usize,
    pub protocol: ProtocolConfig,
    pub seed: u64,
}

impl Default for ProtocolRunConfig {
    fn default() -> Self {
        ProtocolRunConfig {
            model: ResponseModel::default(),
            mixing: 1.0,
            noise_sigma: 0.0,
            iterations: 2000,
            hidden: 64,
            eval_samples: 500,
            protocol: ProtocolConfig::default(),
            seed: 5,
        }
    }
}

pub type PretrainRunConfig = ExperimentConfig;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text, path)
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(text).with_context(|| format!("parsing TOML config {}", path.display()))
    } else {
        serde_json::from_str(text).with_context(|| format!("parsing JSON config {}", path.display()))
    }
}
