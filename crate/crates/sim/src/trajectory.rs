//! Scripted device trajectories: one JSON event per line.
//!
//! ```text
//! {"t":0,"kind":"fix","lat":40.75,"lon":-73.99}
//! {"t":60,"kind":"capture"}
//! {"t":90,"kind":"net_down"}
//! {"t":86500,"kind":"net_up"}
//! ```
//!
//! `t` is a non-negative offset in seconds. Events are sorted by `t` and the
//! first event is a fix.

use std::fmt::Write as _;

use geofence_core::{GeoError, GeoPoint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Fix(GeoPoint),
    Capture,
    NetUp,
    NetDown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent {
    pub t: i64,
    pub kind: EventKind,
}

impl TrajectoryEvent {
    pub fn fix(t: i64, lat: f64, lon: f64) -> Result<Self, GeoError> {
        Ok(Self {
            t,
            kind: EventKind::Fix(GeoPoint::new(lat, lon)?),
        })
    }

    pub fn capture(t: i64) -> Self {
        Self { t, kind: EventKind::Capture }
    }

    pub fn net_up(t: i64) -> Self {
        Self { t, kind: EventKind::NetUp }
    }

    pub fn net_down(t: i64) -> Self {
        Self { t, kind: EventKind::NetDown }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct TrajectoryError {
    pub line: usize,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    t: i64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
}

impl From<&TrajectoryEvent> for RawEvent {
    fn from(e: &TrajectoryEvent) -> Self {
        let (kind, point) = match e.kind {
            EventKind::Fix(p) => ("fix", Some(p)),
            EventKind::Capture => ("capture", None),
            EventKind::NetUp => ("net_up", None),
            EventKind::NetDown => ("net_down", None),
        };
        RawEvent {
            t: e.t,
            kind: kind.to_owned(),
            lat: point.map(|p| p.lat()),
            lon: point.map(|p| p.lon()),
        }
    }
}

fn convert(raw: RawEvent) -> Result<TrajectoryEvent, String> {
    if raw.t < 0 {
        return Err(format!("t = {} is negative", raw.t));
    }
    let kind = match (raw.kind.as_str(), raw.lat, raw.lon) {
        ("fix", Some(lat), Some(lon)) => EventKind::Fix(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?),
        ("fix", _, _) => return Err("fix needs lat and lon".into()),
        (k @ ("capture" | "net_up" | "net_down"), None, None) => match k {
            "capture" => EventKind::Capture,
            "net_up" => EventKind::NetUp,
            _ => EventKind::NetDown,
        },
        ("capture" | "net_up" | "net_down", _, _) => return Err(format!("{} takes no coordinates", raw.kind)),
        (other, _, _) => return Err(format!("unknown event kind {other:?}")),
    };
    Ok(TrajectoryEvent { t: raw.t, kind })
}

/// Parses and validates a trajectory. Blank lines are skipped but still
/// counted for error line numbers.
pub fn parse(text: &str) -> Result<Vec<TrajectoryEvent>, TrajectoryError> {
    let mut events: Vec<TrajectoryEvent> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let fail = |message: String| TrajectoryError { line: idx + 1, message };
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEvent = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        let event = convert(raw).map_err(fail)?;
        match events.last() {
            None if !matches!(event.kind, EventKind::Fix(_)) => {
                return Err(fail("the first event must be a fix".into()));
            }
            Some(prev) if event.t < prev.t => {
                return Err(fail(format!("t = {} goes back in time from {}", event.t, prev.t)));
            }
            _ => {}
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(TrajectoryError {
            line: 0,
            message: "trajectory is empty".into(),
        });
    }
    Ok(events)
}

pub fn to_jsonl(events: &[TrajectoryEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let line = serde_json::to_string(&RawEvent::from(e)).expect("events serialize");
        writeln!(out, "{line}").expect("writing to a string");
    }
    out
}
