//! JSON shapes shared by the HTTP API, registry snapshots and device caches.
//!
//! Numbers are written by `serde_json` with shortest round-trip formatting,
//! so coordinates survive encoding bit-for-bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::{BoxId, RestrictedBox};
use crate::geo::{BoxExtent, GeoError};
use crate::Timestamp;

/// Flat JSON record for one restricted box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBox {
    pub id: BoxId,
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
    pub centroid_lon: f64,
    pub centroid_lat: f64,
    pub added_by: String,
    pub reason: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("box {id}: stored centroid ({lat}, {lon}) does not match its extent")]
    CentroidMismatch { id: BoxId, lat: f64, lon: f64 },
}

impl From<&RestrictedBox> for WireBox {
    fn from(b: &RestrictedBox) -> Self {
        let e = b.extent();
        let c = b.centroid();
        WireBox {
            id: b.id(),
            min_lon: e.min_lon(),
            min_lat: e.min_lat(),
            max_lon: e.max_lon(),
            max_lat: e.max_lat(),
            centroid_lon: c.lon(),
            centroid_lat: c.lat(),
            added_by: b.added_by().to_owned(),
            reason: b.reason().to_owned(),
            created_at: b.created_at(),
        }
    }
}

impl TryFrom<WireBox> for RestrictedBox {
    type Error = WireError;

    fn try_from(w: WireBox) -> Result<Self, Self::Error> {
        let extent = BoxExtent::new(w.min_lon, w.min_lat, w.max_lon, w.max_lat)?;
        let b = RestrictedBox::new(w.id, extent, w.added_by, w.reason, w.created_at);
        let c = b.centroid();
        if c.lat() != w.centroid_lat || c.lon() != w.centroid_lon {
            return Err(WireError::CentroidMismatch {
                id: w.id,
                lat: w.centroid_lat,
                lon: w.centroid_lon,
            });
        }
        Ok(b)
    }
}

/// Body of `POST /v1/boxes`: two opposite corners in any order plus audit fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddBoxRequest {
    pub lon1: f64,
    pub lat1: f64,
    pub lon2: f64,
    pub lat2: f64,
    pub added_by: String,
    pub reason: String,
}

/// 201 response of `POST /v1/boxes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddResponse {
    pub stored: WireBox,
    pub replaced_ids: Vec<BoxId>,
}

/// 200 response of `GET /v1/boxes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchResponse {
    pub boxes: Vec<WireBox>,
    pub count: usize,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub mod codes {
    pub const INVALID_COORDINATE: &str = "invalid_coordinate";
    pub const MALFORMED_REQUEST: &str = "malformed_request";
    pub const INVALID_REQUEST: &str = "invalid_request";
    pub const INVALID_PARAMETER: &str = "invalid_parameter";
    pub const RADIUS_TOO_LARGE: &str = "radius_too_large";
    pub const PAYLOAD_TOO_LARGE: &str = "payload_too_large";
    pub const ANTIMERIDIAN_UNSUPPORTED: &str = "antimeridian_unsupported";
    pub const STORAGE_FAILURE: &str = "storage_failure";
}
