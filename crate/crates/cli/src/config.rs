use std::path::{Path, PathBuf};

use fogdrive_gateway::{GatewayConfig, RetryPolicy, TraceKey, TripConfig};
use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewayConfig,
    pub trip: TripConfig,
    pub profile: ProfileChoice,
    pub cloud: CloudSection,
    pub key: KeySection,
    pub external: ExternalSection,
    pub bench: BenchConfig,
}

/// A built-in profile name or a path to a TOML drive profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileChoice {
    pub name: String,
    pub file: Option<PathBuf>,
}

impl Default for ProfileChoice {
    fn default() -> Self {
        Self {
            name: "calm".into(),
            file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudSection {
    pub base_url: Option<String>,
    pub client_id: String,
    pub client_secret: String,
    pub retry: RetryPolicy,
}

impl Default for CloudSection {
    fn default() -> Self {
        Self {
            base_url: None,
            client_id: "gw-1".into(),
            client_secret: "change-me".into(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct KeySection {
    /// File holding the 256-bit trace key as 64 hex characters.
    pub file: Option<PathBuf>,
    pub hex: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalSection {
    /// Traffic/weather service; the in-process stub is used when unset.
    pub base_url: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })
    }

    pub fn key_path(&self) -> PathBuf {
        self.key
            .file
            .clone()
            .unwrap_or_else(|| self.gateway.data_dir.join("trace.key"))
    }

    /// The configured key, if any.
    pub fn trace_key(&self) -> Result<Option<TraceKey>, fogdrive_gateway::EnvelopeError> {
        if let Some(hex) = &self.key.hex {
            return TraceKey::from_hex(hex).map(Some);
        }
        match &self.key.file {
            Some(path) => TraceKey::load(path).map(Some),
            None => {
                let path = self.key_path();
                if path.is_file() {
                    TraceKey::load(&path).map(Some)
                } else {
                    Ok(None)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: Config = toml::from_str(
            r#"
            [gateway]
            gateway_id = "gw-7"
            [gateway.alerts]
            speed_limit_kmh = 90.0
            [trip]
            driver_id = "maria"
            [trip.sim.latency]
            kind = "fixed"
            ms = 100.0
            [cloud]
            base_url = "http://127.0.0.1:8080"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.gateway.gateway_id, "gw-7");
        assert_eq!(cfg.gateway.alerts.speed_limit_kmh, 90.0);
        assert_eq!(cfg.gateway.alerts.hr_high_bpm, 120.0);
        assert_eq!(cfg.trip.driver_id, "maria");
        assert_eq!(cfg.trip.context_quota_per_min, 60);
        assert_eq!(cfg.cloud.client_id, "gw-1");
        assert_eq!(cfg.profile.name, "calm");
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(toml::from_str::<Config>("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(back.bench, cfg.bench);
        assert_eq!(back.trip.seed, cfg.trip.seed);
    }
}
