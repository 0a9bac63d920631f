use std::net::SocketAddr;
use std::path::PathBuf;

use thiserror::Error;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_BODY_BYTES: usize = 16 * 1024;
pub const DEFAULT_MAX_RADIUS_M: f64 = 200_000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{key}: cannot parse {value:?}")]
    Parse { key: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiConfig {
    pub bind_addr: SocketAddr,
    /// Registry snapshot; `None` serves an in-memory registry.
    pub snapshot_path: Option<PathBuf>,
    pub max_body_bytes: usize,
    pub max_radius_m: f64,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind_addr: DEFAULT_BIND_ADDR.parse().expect("valid default address"),
            snapshot_path: None,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            max_radius_m: DEFAULT_MAX_RADIUS_M,
        }
    }
}

impl ApiConfig {
    /// Defaults overridden by `BIND_ADDR`, `SNAPSHOT_PATH` and `MAX_RADIUS_M`.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(v) = lookup("BIND_ADDR") {
            cfg.bind_addr = v.parse().map_err(|_| ConfigError::Parse {
                key: "BIND_ADDR",
                value: v,
            })?;
        }
        if let Some(v) = lookup("SNAPSHOT_PATH") {
            cfg.snapshot_path = Some(v.into());
        }
        if let Some(v) = lookup("MAX_RADIUS_M") {
            cfg.max_radius_m = v.parse().map_err(|_| ConfigError::Parse {
                key: "MAX_RADIUS_M",
                value: v,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_body_bytes == 0 {
            return Err(ConfigError::Invalid("max_body_bytes must be positive".into()));
        }
        if !(self.max_radius_m.is_finite() && self.max_radius_m > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "max_radius_m must be positive, got {}",
                self.max_radius_m
            )));
        }
        Ok(())
    }
}
