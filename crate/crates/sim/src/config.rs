//! `key = value` configuration covering the device policy and the API server.
//!
//! Blank lines and lines starting with `#` are ignored. Distances are in
//! meters, durations in seconds.
//!
//! ```text
//! # device
//! poll_interval_s = 600
//! movement_threshold_m = 1609.344
//! fetch_radius_m = 40233.6
//! stale_after_s = 86400
//! lockout_after_s = 2592000
//! permissible_distance_m = 500
//! fetch_grid_deg = 0.01
//! # server
//! bind_addr = 127.0.0.1:8080
//! snapshot_path = /var/lib/geofence/boxes.snap
//! max_body_bytes = 16384
//! max_radius_m = 200000
//! ```

use std::path::Path;
use std::str::FromStr;

use geofence_api::ApiConfig;
use geofence_core::{DevicePolicy, Distance};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimConfig {
    pub policy: DevicePolicy,
    pub api: ApiConfig,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigFileError> {
    value.parse().map_err(|_| ConfigFileError::Parse {
        line,
        message: format!("{key}: cannot parse {value:?}"),
    })
}

fn distance(line: usize, key: &str, value: &str) -> Result<Distance, ConfigFileError> {
    Distance::from_meters(parse_value(line, key, value)?).map_err(|e| ConfigFileError::Parse {
        line,
        message: format!("{key}: {e}"),
    })
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigFileError::Parse {
                line,
                message: format!("expected key = value, got {trimmed:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let p = &mut cfg.policy;
            let a = &mut cfg.api;
            match key {
                "poll_interval_s" => p.poll_interval_s = parse_value(line, key, value)?,
                "movement_threshold_m" => p.movement_threshold = distance(line, key, value)?,
                "fetch_radius_m" => p.fetch_radius = distance(line, key, value)?,
                "stale_after_s" => p.stale_after_s = parse_value(line, key, value)?,
                "lockout_after_s" => p.lockout_after_s = parse_value(line, key, value)?,
                "permissible_distance_m" => p.permissible_distance = distance(line, key, value)?,
                "fetch_grid_deg" => p.fetch_grid_deg = parse_value(line, key, value)?,
                "bind_addr" => a.bind_addr = parse_value(line, key, value)?,
                "snapshot_path" => a.snapshot_path = Some(value.into()),
                "max_body_bytes" => a.max_body_bytes = parse_value(line, key, value)?,
                "max_radius_m" => a.max_radius_m = parse_value(line, key, value)?,
                other => {
                    return Err(ConfigFileError::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.policy
            .validate()
            .map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        cfg.api.validate().map_err(|e| ConfigFileError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
