//! Restricted-area geofencing: box geometry, the server-side registry of
//! restricted boxes, and the device-side refresh and capture-gate policy.

pub mod device;
pub mod geo;
pub mod registry;
pub mod snapshot;
pub mod wire;

mod boxes;

pub use boxes::{BoxId, ParseBoxIdError, RestrictedBox};
pub use device::{
    BoxSource, CaptureDecision, Device, DeviceError, DevicePolicy, DeviceState, FetchError,
    RefreshReason,
};
pub use geo::{
    distance_to_box, haversine_distance, normalize_box, BoxExtent, Distance, GeoError, GeoPoint,
    EARTH_RADIUS_M, METERS_PER_MILE,
};
pub use registry::{AddOutcome, Registry, RegistryConfig, RegistryError, StorePaths};
pub use snapshot::SnapshotError;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;
