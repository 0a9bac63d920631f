//! Synthetic restricted-box datasets.
//!
//! Centroids are uniform over a spherical disc and box edges are uniform in
//! [50 m, 2000 m]. Every coordinate is a whole number of micro-degrees
//! (about 0.1 m) and each centroid is exactly representable at that
//! precision, which keeps a snapshot record near 245 bytes. The output is a
//! registry snapshot, reproducible byte for byte from the seed.

use std::path::Path;

use geofence_core::registry::RegistryError;
use geofence_core::snapshot;
use geofence_core::wire::WireBox;
use geofence_core::{
    haversine_distance, BoxExtent, BoxId, Distance, GeoPoint, RestrictedBox, Timestamp, EARTH_RADIUS_M,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MIN_EDGE_M: f64 = 50.0;
pub const MAX_EDGE_M: f64 = 2_000.0;
pub const ADDED_BY: &str = "genboxes";
pub const REASON: &str = "synthetic";
pub const CREATED_AT: Timestamp = 1_700_000_000;

const MICRO: f64 = 1e6;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("box count must be positive")]
    EmptyDataset,
    #[error("radius must be positive and under a quarter great circle")]
    BadRadius,
    #[error("disc reaches within 1° of a pole or the antimeridian")]
    BadCenter,
    #[error(transparent)]
    Storage(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub n: usize,
    pub center: GeoPoint,
    pub radius: Distance,
    pub seed: u64,
}

impl DatasetSpec {
    /// The default disc: 50 miles around midtown Manhattan.
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            center: GeoPoint::new(40.7580, -73.9855).expect("valid center"),
            radius: Distance::from_miles(50.0).expect("valid radius"),
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.n == 0 {
            return Err(GenError::EmptyDataset);
        }
        let angular = self.radius.meters() / EARTH_RADIUS_M;
        if !(angular > 0.0 && angular < std::f64::consts::FRAC_PI_2) {
            return Err(GenError::BadRadius);
        }
        // leave room for box half-edges so no box crosses a pole or the antimeridian
        let reach = angular.to_degrees() + 1.0;
        let lat = self.center.lat();
        let lon_reach = reach / (lat.abs() + reach).to_radians().cos().max(1e-9);
        if lat.abs() + reach >= 90.0 || self.center.lon().abs() + lon_reach >= 180.0 {
            return Err(GenError::BadCenter);
        }
        Ok(())
    }
}

/// Point at `distance` along `bearing` (radians from north) from `origin`.
pub(crate) fn destination(origin: GeoPoint, bearing: f64, distance: f64) -> (f64, f64) {
    let d = distance / EARTH_RADIUS_M;
    let (phi1, lambda1) = (origin.lat().to_radians(), origin.lon().to_radians());
    let phi2 = (phi1.sin() * d.cos() + phi1.cos() * d.sin() * bearing.cos()).asin();
    let lambda2 = lambda1 + (bearing.sin() * d.sin() * phi1.cos()).atan2(d.cos() - phi1.sin() * phi2.sin());
    (phi2.to_degrees(), lambda2.to_degrees())
}

fn micro(deg: f64) -> i64 {
    (deg * MICRO).round() as i64
}

fn from_micro(v: i64) -> f64 {
    v as f64 / MICRO
}

/// Half-edge in micro-degrees whose full edge lies in [MIN_EDGE_M, MAX_EDGE_M]
/// when one micro-degree spans `m_per_micro` meters.
fn half_edge(target_m: f64, m_per_micro: f64) -> i64 {
    let lo = (MIN_EDGE_M / (2.0 * m_per_micro)).ceil() as i64;
    let hi = (MAX_EDGE_M / (2.0 * m_per_micro)).floor() as i64;
    ((target_m / (2.0 * m_per_micro)).round() as i64).clamp(lo.max(1), hi)
}

pub struct BoxGenerator {
    spec: DatasetSpec,
    rng: ChaCha8Rng,
}

impl BoxGenerator {
    pub fn new(spec: DatasetSpec) -> Result<Self, GenError> {
        spec.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
        })
    }

    pub fn next_box(&mut self) -> RestrictedBox {
        let r = self.spec.radius.meters();
        loop {
            // area-uniform on the spherical cap
            let angular = r / EARTH_RADIUS_M;
            let u: f64 = self.rng.random();
            let d = EARTH_RADIUS_M * (1.0 - u * (1.0 - angular.cos())).acos();
            let bearing = self.rng.random_range(0.0..std::f64::consts::TAU);
            let (lat, lon) = destination(self.spec.center, bearing, d);
            let (c_lat, c_lon) = (micro(lat), micro(lon));

            let m_per_micro_lat = (1.0 / MICRO).to_radians() * EARTH_RADIUS_M;
            let m_per_micro_lon = m_per_micro_lat * from_micro(c_lat).to_radians().cos();
            let hw = half_edge(self.rng.random_range(MIN_EDGE_M..=MAX_EDGE_M), m_per_micro_lon);
            let hh = half_edge(self.rng.random_range(MIN_EDGE_M..=MAX_EDGE_M), m_per_micro_lat);
            let id = BoxId::from_u128(self.rng.random());

            let extent = BoxExtent::new(
                from_micro(c_lon - hw),
                from_micro(c_lat - hh),
                from_micro(c_lon + hw),
                from_micro(c_lat + hh),
            )
            .expect("generated extent is ordered and in range");
            let centroid = extent.centroid();
            if centroid.lat() != from_micro(c_lat) || centroid.lon() != from_micro(c_lon) {
                continue;
            }
            if haversine_distance(self.spec.center, centroid) > self.spec.radius {
                continue;
            }
            return RestrictedBox::new(id, extent, ADDED_BY, REASON, CREATED_AT);
        }
    }
}

pub fn generate(spec: DatasetSpec) -> Result<Vec<RestrictedBox>, GenError> {
    let mut g = BoxGenerator::new(spec)?;
    Ok((0..spec.n).map(|_| g.next_box()).collect())
}

/// Writes the dataset as a registry snapshot. Returns the file size in bytes.
pub fn write_dataset(path: &Path, boxes: &[RestrictedBox]) -> Result<u64, GenError> {
    let size = snapshot::save::<(), _, _>(path, None, boxes.iter().map(WireBox::from)).map_err(RegistryError::from)?;
    Ok(size)
}
