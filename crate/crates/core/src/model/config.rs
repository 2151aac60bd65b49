//! Pipeline configuration, file loading, and fingerprinting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid config: {field} {rule}")]
    Invalid { field: &'static str, rule: String },
}

/// Which end of the raw depth scale is nearest to the camera.
///
/// Metric depth estimators emit distance (small = near); inverse/disparity
/// style estimators emit the opposite. Normalized `depth_rel` is always
/// oriented so 1 means nearest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthOrientation {
    NearIsHigh,
    NearIsLow,
}

/// Endpoint (and, for chat, model identifier) per expert kind.
///
/// An endpoint is either `http(s)://...` for a live service or
/// `fixture://<dir>` for recorded responses. Empty means the backend is not
/// configured; using it fails with a clear error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendEndpoints {
    pub chat_mllm: String,
    pub chat_mllm_model: String,
    pub chat_llm: String,
    pub chat_llm_model: String,
    pub detector: String,
    pub dense_captioner: String,
    pub segmenter: String,
    pub depth_estimator: String,
    pub embedder: String,
}

/// Everything that determines pipeline behavior. The fingerprint of this
/// struct keys the stage cache, so any field change invalidates cached work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backends: BackendEndpoints,
    /// Detector confidence at or above which a phrase counts as grounded.
    pub detector_threshold: f64,
    /// Extra attempts after the first, for transport failures and malformed
    /// extraction responses alike.
    pub retry_limit: u32,
    pub rounding_rules_version: String,
    pub prompt_template_version: String,
    pub depth_orientation: DepthOrientation,
    /// Images processed concurrently.
    pub parallelism: usize,
    /// In-flight calls allowed per backend.
    pub backend_concurrency: usize,
    /// Instruction sent with the image in the holistic captioning phase.
    pub phase_a_instruction: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backends: BackendEndpoints::default(),
            detector_threshold: 0.35,
            retry_limit: 3,
            rounding_rules_version: crate::prompting::ROUNDING_RULES_VERSION.to_string(),
            prompt_template_version: crate::prompting::TEMPLATE_VERSION.to_string(),
            depth_orientation: DepthOrientation::NearIsHigh,
            parallelism: 4,
            backend_concurrency: 4,
            phase_a_instruction: "Describe this image in detail.".to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.detector_threshold > 0.0 && self.detector_threshold < 1.0) {
            return Err(ConfigError::Invalid {
                field: "detector_threshold",
                rule: format!("must lie strictly inside (0, 1), got {}", self.detector_threshold),
            });
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid {
                field: "parallelism",
                rule: "must be at least 1".into(),
            });
        }
        if self.backend_concurrency == 0 {
            return Err(ConfigError::Invalid {
                field: "backend_concurrency",
                rule: "must be at least 1".into(),
            });
        }
        if self.phase_a_instruction.trim().is_empty() {
            return Err(ConfigError::Invalid {
                field: "phase_a_instruction",
                rule: "must be nonempty".into(),
            });
        }
        Ok(())
    }
}

/// Load a config from a TOML file of `key = value` pairs mirroring
/// [`PipelineConfig`] (backends under a `[backends]` table). Unknown keys are
/// fatal; missing keys take defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: PipelineConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

/// Collision-resistant digest of the config's canonical form.
///
/// The config is serialized to a JSON value (object keys sort, so any
/// field-order permutation of equal values canonicalizes identically) and
/// hashed with SHA-256.
pub fn config_fingerprint(config: &PipelineConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let canonical = serde_json::to_string(&value).expect("value serializes");
    sha256_hex(canonical.as_bytes())
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_digest(&hasher.finalize())
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
