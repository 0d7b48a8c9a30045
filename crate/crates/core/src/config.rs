//! Pipeline thresholds, loadable from a TOML file.
//!
//! ```toml
//! min_link_confidence = 0.25
//! min_match_similarity = 0.0
//! min_align_conf = 0.6666666666666666
//! max_bridge_popularity = 100000
//! distinctness_threshold = 0.8
//! bm25_k1 = 1.2
//! bm25_b = 0.75
//! strictness = "strict"
//! ```
//!
//! Missing keys take their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::JoinConstraints;
use crate::graph::BuildOptions;
use crate::ingest::Strictness;
use crate::linker::MatchOptions;
use crate::retrieve::Bm25Params;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{field} = {value} is outside {range}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub min_link_confidence: f64,
    pub min_match_similarity: f64,
    pub min_align_conf: f64,
    pub max_bridge_popularity: u64,
    pub distinctness_threshold: f64,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub strictness: Strictness,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            min_link_confidence: 0.25,
            min_match_similarity: 0.0,
            min_align_conf: 2.0 / 3.0,
            max_bridge_popularity: 100_000,
            distinctness_threshold: 0.8,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            strictness: Strictness::Strict,
        }
    }
}

fn unit(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            value,
            range: "[0, 1]",
        })
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unit("min_link_confidence", self.min_link_confidence)?;
        unit("min_match_similarity", self.min_match_similarity)?;
        unit("min_align_conf", self.min_align_conf)?;
        unit("distinctness_threshold", self.distinctness_threshold)?;
        unit("bm25_b", self.bm25_b)?;
        if !(self.bm25_k1 > 0.0 && self.bm25_k1.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "bm25_k1",
                value: self.bm25_k1,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            min_link_confidence: self.min_link_confidence,
            min_match_similarity: self.min_match_similarity,
        }
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            min_link_confidence: self.min_link_confidence,
        }
    }

    pub fn join_constraints(&self) -> JoinConstraints {
        JoinConstraints {
            max_bridge_popularity: Some(self.max_bridge_popularity),
            ..JoinConstraints::default().with_min_align_conf(self.min_align_conf)
        }
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.bm25_k1,
            b: self.bm25_b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let c = Config::from_toml("min_link_confidence = 0.5\nstrictness = \"lenient\"\n", Path::new("c.toml")).unwrap();
        assert_eq!(c.min_link_confidence, 0.5);
        assert_eq!(c.strictness, Strictness::Lenient);
        assert_eq!(c.max_bridge_popularity, 100_000);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml(), Path::new("c.toml")).unwrap(), c);
    }

    #[test]
    fn rejects_out_of_range_and_unknown_keys() {
        assert!(matches!(
            Config::from_toml("bm25_b = 1.5", Path::new("c.toml")),
            Err(ConfigError::OutOfRange { field: "bm25_b", .. })
        ));
        assert!(matches!(
            Config::from_toml("bm25_k1 = 0.0", Path::new("c.toml")),
            Err(ConfigError::OutOfRange { field: "bm25_k1", .. })
        ));
        assert!(matches!(
            Config::from_toml("min_link_conf = 0.3", Path::new("c.toml")),
            Err(ConfigError::Parse { .. })
        ));
    }
}
