//! Scenario files: model fields at the top level plus one optional section
//! per command and an optional seed.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::ModelConfig;

pub const SECTIONS: [&str; 10] = [
    "spectrum",
    "hardy",
    "solve",
    "carleman",
    "spectral_ineq",
    "observability",
    "hum",
    "lr",
    "measurable",
    "density_seq",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    Missing(String),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Schema(String),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Missing(_) | ConfigError::Io { .. } => 4,
            ConfigError::Syntax(_) | ConfigError::Schema(_) => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub seed: Option<u64>,
    sections: Map<String, Value>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => ConfigError::Schema(e.to_string()),
            _ => ConfigError::Syntax(e.to_string()),
        })?;
        let Value::Object(mut map) = value else {
            return Err(ConfigError::Schema("top level must be a JSON object".into()));
        };
        let mut sections = Map::new();
        for name in SECTIONS {
            if let Some(v) = map.remove(name) {
                sections.insert(name.to_string(), v);
            }
        }
        let seed = match map.remove("seed") {
            None => None,
            Some(v) => Some(
                serde_json::from_value::<u64>(v)
                    .map_err(|e| ConfigError::Schema(format!("seed: {e}")))?,
            ),
        };
        let model: ModelConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::Schema(e.to_string()))?;
        Ok(Self { model, seed, sections })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ConfigError::Missing(path.display().to_string())
            } else {
                ConfigError::Io {
                    path: path.display().to_string(),
                    source: e,
                }
            }
        })?;
        Self::parse(&text)
    }

    /// Options of one command section; absent sections give the defaults.
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, ConfigError> {
        match self.sections.get(name) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ConfigError::Schema(format!("{name}: {e}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_strict() {
        let c = RunConfig::parse(r#"{"alpha":0.5,"T_horizon":1.0}"#).unwrap();
        assert_eq!(c.model.n_r, crate::model::DEFAULT_N_R);
        assert!(c.seed.is_none());
        let e = RunConfig::parse(r#"{"alpha":"0.5","T_horizon":1.0}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::parse(r#"{"alpha":0.5,"T_horizon":1.0,"beta":1}"#).unwrap_err();
        assert!(e.to_string().contains("beta"));
        assert_eq!(e.exit_code(), 2);
        assert_eq!(RunConfig::parse("{").unwrap_err().exit_code(), 2);
        let e = RunConfig::load(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
