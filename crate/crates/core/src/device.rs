//! Device-side cache refresh and capture gate.
//!
//! A [`Device`] owns its policy and its cached state. The host feeds it GPS
//! fixes on a timer ([`Device::tick`]), hands back the result of any fetch the
//! tick asked for ([`Device::apply_refresh`]) and asks before every photo
//! ([`Device::capture_request`]). Time is always passed in; nothing here reads
//! a clock.
//!
//! Only the most recent fix is kept. Fetches are centered on a coarsened
//! position ([`Device::fetch_center`]), so the coverage record does not
//! reproduce an earlier fix either.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{BoxId, RestrictedBox};
use crate::geo::{distance_to_box, haversine_distance, Distance, GeoError, GeoPoint, METERS_PER_MILE};
use crate::snapshot::{self, SnapshotError};
use crate::wire::WireBox;
use crate::Timestamp;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl From<SnapshotError> for DeviceError {
    fn from(e: SnapshotError) -> Self {
        match e {
            SnapshotError::Io { .. } => DeviceError::Storage(e.to_string()),
            SnapshotError::Corrupt { .. } => DeviceError::CorruptSnapshot(e.to_string()),
        }
    }
}

/// Why a box fetch failed. The device state is never touched by a failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchError {
    #[error("fetch failed: {0}")]
    FetchFailed(String),
    #[error("server rejected the request with status {0}")]
    ServerRejected(u16),
}

/// Anything that can answer a vicinity query for the device.
pub trait BoxSource {
    fn fetch_boxes(&self, center: GeoPoint, radius: Distance) -> Result<Vec<RestrictedBox>, FetchError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePolicy {
    /// Expected spacing of [`Device::tick`] calls.
    pub poll_interval_s: i64,
    /// Movement beyond this since the previous fix triggers a refresh.
    pub movement_threshold: Distance,
    pub fetch_radius: Distance,
    pub stale_after_s: i64,
    /// Cache age beyond which capture is refused outright.
    pub lockout_after_s: i64,
    /// Standoff around every restricted box inside which capture is refused.
    pub permissible_distance: Distance,
    /// Fetch centers are snapped to a grid of this many degrees.
    pub fetch_grid_deg: f64,
}

impl Default for DevicePolicy {
    fn default() -> Self {
        Self {
            poll_interval_s: 600,
            movement_threshold: Distance::from_meters(METERS_PER_MILE).unwrap(),
            fetch_radius: Distance::from_miles(25.0).unwrap(),
            stale_after_s: 86_400,
            lockout_after_s: 30 * 86_400,
            permissible_distance: Distance::from_meters(500.0).unwrap(),
            fetch_grid_deg: 0.01,
        }
    }
}

impl DevicePolicy {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |msg: &str| Err(DeviceError::InvalidPolicy(msg.to_owned()));
        if self.poll_interval_s <= 0 || self.stale_after_s <= 0 || self.lockout_after_s <= 0 {
            return bad("intervals must be positive");
        }
        if self.movement_threshold.meters() <= 0.0
            || self.fetch_radius.meters() <= 0.0
            || self.permissible_distance.meters() <= 0.0
        {
            return bad("distances must be positive");
        }
        if self.lockout_after_s <= self.stale_after_s {
            return bad("lockout_after must exceed stale_after");
        }
        if self.fetch_radius <= self.movement_threshold {
            return bad("fetch_radius must exceed movement_threshold");
        }
        if !(self.fetch_grid_deg.is_finite() && self.fetch_grid_deg > 0.0 && self.fetch_grid_deg <= 1.0) {
            return bad("fetch_grid_deg must be in (0, 1]");
        }
        // snapping moves the center by at most half a grid diagonal
        let snap_error = self.fetch_grid_deg.to_radians() * crate::EARTH_RADIUS_M;
        if snap_error >= self.fetch_radius.meters() / 2.0 {
            return bad("fetch_grid_deg is too coarse for fetch_radius");
        }
        Ok(())
    }
}

/// Trigger for a cache refresh, in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshReason {
    FirstRun,
    LeftCoverage,
    Stale24h,
    Moved,
}

impl fmt::Display for RefreshReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefreshReason::FirstRun => "first_run",
            RefreshReason::LeftCoverage => "left_coverage",
            RefreshReason::Stale24h => "stale_24h",
            RefreshReason::Moved => "moved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaptureDecision {
    Allowed,
    /// `distance` is from the device to the nearest point of the box.
    DeniedRestrictedArea { box_id: BoxId, distance: Distance },
    DeniedStaleCache,
    DeniedNoCoverage,
}

impl CaptureDecision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, CaptureDecision::Allowed)
    }
}

impl fmt::Display for CaptureDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaptureDecision::Allowed => f.write_str("allowed"),
            CaptureDecision::DeniedRestrictedArea { box_id, distance } => {
                write!(f, "denied restricted_area box={box_id} distance_m={:.1}", distance.meters())
            }
            CaptureDecision::DeniedStaleCache => f.write_str("denied stale_cache"),
            CaptureDecision::DeniedNoCoverage => f.write_str("denied no_coverage"),
        }
    }
}

/// Everything a device persists between runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceState {
    cache: Vec<RestrictedBox>,
    last_location: Option<GeoPoint>,
    last_location_at: Option<Timestamp>,
    last_refresh_at: Option<Timestamp>,
    coverage_center: Option<GeoPoint>,
    coverage_radius: Distance,
}

impl DeviceState {
    pub fn cache(&self) -> &[RestrictedBox] {
        &self.cache
    }

    pub fn last_location(&self) -> Option<GeoPoint> {
        self.last_location
    }

    pub fn last_location_at(&self) -> Option<Timestamp> {
        self.last_location_at
    }

    pub fn last_refresh_at(&self) -> Option<Timestamp> {
        self.last_refresh_at
    }

    pub fn coverage_center(&self) -> Option<GeoPoint> {
        self.coverage_center
    }

    pub fn coverage_radius(&self) -> Distance {
        self.coverage_radius
    }

    fn covers(&self, p: GeoPoint) -> bool {
        self.coverage_center
            .is_some_and(|c| haversine_distance(c, p) <= self.coverage_radius)
    }

    fn since_refresh(&self, now: Timestamp) -> Option<i64> {
        self.last_refresh_at.map(|t| now.saturating_sub(t))
    }

    /// Writes the state atomically in the snapshot format, with the state
    /// record as preamble.
    pub fn save(&self, path: &Path) -> Result<u64, DeviceError> {
        let header = StateRecord {
            last_location: self.last_location,
            last_location_at: self.last_location_at,
            last_refresh_at: self.last_refresh_at,
            coverage_center: self.coverage_center,
            coverage_radius: self.coverage_radius.meters(),
        };
        Ok(snapshot::save(path, Some(&header), self.cache.iter().map(WireBox::from))?)
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let decoded = snapshot::load::<StateRecord, WireBox>(path, true)?;
        let corrupt = |e: &dyn fmt::Display| DeviceError::CorruptSnapshot(format!("{}: {e}", path.display()));
        let header = decoded.preamble.expect("preamble requested");
        let cache = decoded
            .records
            .into_iter()
            .map(|w| RestrictedBox::try_from(w).map_err(|e| corrupt(&e)))
            .collect::<Result<_, _>>()?;
        Ok(DeviceState {
            cache,
            last_location: header.last_location,
            last_location_at: header.last_location_at,
            last_refresh_at: header.last_refresh_at,
            coverage_center: header.coverage_center,
            coverage_radius: Distance::from_meters(header.coverage_radius).map_err(|e| corrupt(&e))?,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    last_location: Option<GeoPoint>,
    last_location_at: Option<Timestamp>,
    last_refresh_at: Option<Timestamp>,
    coverage_center: Option<GeoPoint>,
    coverage_radius: f64,
}

#[derive(Debug, Clone)]
pub struct Device {
    policy: DevicePolicy,
    state: DeviceState,
}

impl Device {
    pub fn new(policy: DevicePolicy) -> Result<Self, DeviceError> {
        Self::with_state(policy, DeviceState::default())
    }

    pub fn with_state(policy: DevicePolicy, state: DeviceState) -> Result<Self, DeviceError> {
        policy.validate()?;
        Ok(Self { policy, state })
    }

    pub fn policy(&self) -> &DevicePolicy {
        &self.policy
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn into_state(self) -> DeviceState {
        self.state
    }

    /// Records `fix` as the only known location and reports whether the
    /// cache should be refreshed.
    pub fn tick(&mut self, now: Timestamp, fix: GeoPoint) -> Option<RefreshReason> {
        let previous = self.state.last_location.replace(fix);
        self.state.last_location_at = Some(now);

        let s = &self.state;
        let p = &self.policy;
        if s.last_refresh_at.is_none() {
            Some(RefreshReason::FirstRun)
        } else if !s.covers(fix) {
            Some(RefreshReason::LeftCoverage)
        } else if s.since_refresh(now).is_some_and(|age| age > p.stale_after_s) {
            Some(RefreshReason::Stale24h)
        } else if previous.is_some_and(|prev| haversine_distance(prev, fix) > p.movement_threshold) {
            Some(RefreshReason::Moved)
        } else {
            None
        }
    }

    /// Where a refresh for a device at `fix` should be centered: `fix`
    /// snapped to the policy's fetch grid.
    pub fn fetch_center(&self, fix: GeoPoint) -> GeoPoint {
        let g = self.policy.fetch_grid_deg;
        let snap = |v: f64| (v / g).round() * g;
        // snapping can only push past a limit by rounding up to it
        GeoPoint::new(snap(fix.lat()).clamp(-90.0, 90.0), snap(fix.lon()).clamp(-180.0, 180.0))
            .expect("clamped coordinates are valid")
    }

    /// Replaces the cache with the result of a successful fetch.
    pub fn apply_refresh(&mut self, boxes: Vec<RestrictedBox>, center: GeoPoint, radius: Distance, now: Timestamp) {
        self.state.cache = boxes;
        self.state.coverage_center = Some(center);
        self.state.coverage_radius = radius;
        self.state.last_refresh_at = Some(now);
    }

    /// Fetches around [`fetch_center`](Self::fetch_center) of the last fix and
    /// applies the result. On error the state is unchanged.
    pub fn refresh(&mut self, source: &impl BoxSource, now: Timestamp) -> Result<usize, FetchError> {
        let fix = self
            .state
            .last_location
            .ok_or_else(|| FetchError::FetchFailed("no location fix yet".into()))?;
        let center = self.fetch_center(fix);
        let radius = self.policy.fetch_radius;
        let boxes = source.fetch_boxes(center, radius)?;
        let n = boxes.len();
        self.apply_refresh(boxes, center, radius, now);
        Ok(n)
    }

    /// Decides whether a photo may be taken at `fix`.
    ///
    /// Checks run in order: cache lockout, coverage, then proximity to every
    /// cached box. A denial for proximity names the nearest offending box.
    pub fn capture_request(&self, now: Timestamp, fix: GeoPoint) -> CaptureDecision {
        let s = &self.state;
        if s
            .since_refresh(now)
            .is_some_and(|age| age > self.policy.lockout_after_s)
        {
            return CaptureDecision::DeniedStaleCache;
        }
        if !s.covers(fix) {
            return CaptureDecision::DeniedNoCoverage;
        }
        let limit = self.policy.permissible_distance;
        let mut nearest: Option<(BoxId, Distance)> = None;
        for b in &s.cache {
            let d = distance_to_box(fix, b.extent());
            if d <= limit {
                let closer = match nearest {
                    None => true,
                    Some((id, best)) => d < best || (d == best && b.id() < id),
                };
                if closer {
                    nearest = Some((b.id(), d));
                }
            }
        }
        match nearest {
            Some((box_id, distance)) => CaptureDecision::DeniedRestrictedArea { box_id, distance },
            None => CaptureDecision::Allowed,
        }
    }
}

#[cfg(test)]
mod tests;
