//! Build configuration, read from TOML. Every key is optional; see
//! `docs/config.md` for the full list with defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::imagegen::ImageBackendConfig;
use crate::language::{ChatBackendConfig, DEFAULT_LOCAL_WINDOW, DEFAULT_MAX_KEYPHRASES, DEFAULT_THRESHOLD};
use crate::packing::PlacementConfig;
use crate::saliency::DEFAULT_PASSES;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanguageConfig {
    /// Images are generated for segments scoring strictly above this.
    pub threshold: u8,
    pub local_window: usize,
    pub max_keyphrases: usize,
}

impl Default for LanguageConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            local_window: DEFAULT_LOCAL_WINDOW,
            max_keyphrases: DEFAULT_MAX_KEYPHRASES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    pub passes: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self { passes: DEFAULT_PASSES }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    /// Keyphrase line height in pixels; frame height / 20 when unset.
    pub point_size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-segment and per-frame work.
    pub concurrency: usize,
    /// Use the offline chat stub and placeholder images regardless of endpoints.
    pub offline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            concurrency: 4,
            offline: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub language: LanguageConfig,
    pub saliency: SaliencyConfig,
    pub packing: PlacementConfig,
    pub text: TextConfig,
    pub chat: ChatBackendConfig,
    pub image: ImageBackendConfig,
    pub run: RunConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=10).contains(&self.language.threshold) {
            return invalid(format!(
                "language.threshold must be 1..10, got {}",
                self.language.threshold
            ));
        }
        if self.saliency.passes == 0 {
            return invalid("saliency.passes must be at least 1".into());
        }
        if self.run.concurrency == 0 {
            return invalid("run.concurrency must be at least 1".into());
        }
        if self.text.point_size == Some(0) {
            return invalid("text.point_size must be positive".into());
        }
        if self.image.width == 0 || self.image.height == 0 {
            return invalid("image.width and image.height must be positive".into());
        }
        self.packing
            .validate()
            .map_err(|m| ConfigError::Invalid(format!("packing: {m}")))
    }

    /// SHA-256 over the JSON encoding (sorted keys) of the full config.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(serde_json::to_string(&value).expect("value serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn overrides_and_validation() {
        let cfg = Config::from_toml(
            "[language]\nthreshold = 6\n[packing]\nscan_stride = 4\n[chat]\nendpoint = \"http://localhost:8000/v1/chat/completions\"\n",
        )
        .unwrap();
        assert_eq!(cfg.language.threshold, 6);
        assert_eq!(cfg.packing.scan_stride, 4);
        assert_eq!(cfg.packing.margin, 8);
        assert!(cfg.chat.endpoint.is_some());

        assert!(matches!(
            Config::from_toml("[language]\nthreshold = 11\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::from_toml("[packing]\nshrink_factor = 1.0\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::from_toml("[language]\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn digest_tracks_values() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.run.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }
}
