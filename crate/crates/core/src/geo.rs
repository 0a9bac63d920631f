//! Spherical geodesy and axis-aligned box geometry.
//!
//! Everything here is a pure function on immutable values. Positions are
//! degrees, distances are meters on a sphere of radius [`EARTH_RADIUS_M`].
//! Boxes are closed sets: edges and corners belong to the box, so both
//! [`BoxExtent::contains`] and [`BoxExtent::overlaps`] are boundary-inclusive.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// International mile, in meters.
pub const METERS_PER_MILE: f64 = 1_609.344;

/// Widest longitude span accepted when building a box from two corners.
///
/// Two corners further apart than this are read as an attempt to wrap
/// across the ±180° meridian, which the min/max construction cannot express.
pub const MAX_CORNER_LON_SPAN_DEG: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("{field} = {value} is out of range or not finite")]
    InvalidCoordinate { field: &'static str, value: f64 },
    #[error("inverted extent: {axis} min {min} is greater than max {max}")]
    InvertedExtent { axis: &'static str, min: f64, max: f64 },
    #[error("corners span {span}° of longitude; boxes crossing the antimeridian are not supported")]
    AntimeridianUnsupported { span: f64 },
    #[error("distance {0} m is negative or not finite")]
    InvalidDistance(f64),
}

fn check_lat(field: &'static str, value: f64) -> Result<f64, GeoError> {
    if value.is_finite() && (-90.0..=90.0).contains(&value) {
        Ok(value)
    } else {
        Err(GeoError::InvalidCoordinate { field, value })
    }
}

fn check_lon(field: &'static str, value: f64) -> Result<f64, GeoError> {
    if value.is_finite() && (-180.0..=180.0).contains(&value) {
        Ok(value)
    } else {
        Err(GeoError::InvalidCoordinate { field, value })
    }
}

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        Ok(Self {
            lat: check_lat("lat", lat)?,
            lon: check_lon("lon", lon)?,
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// A non-negative, finite length in meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Distance(f64);

impl Distance {
    pub const ZERO: Distance = Distance(0.0);

    pub fn from_meters(meters: f64) -> Result<Self, GeoError> {
        if meters.is_finite() && meters >= 0.0 {
            Ok(Self(meters))
        } else {
            Err(GeoError::InvalidDistance(meters))
        }
    }

    pub fn from_miles(miles: f64) -> Result<Self, GeoError> {
        Self::from_meters(miles * METERS_PER_MILE)
    }

    pub fn meters(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} m", self.0)
    }
}

/// A normalized axis-aligned box: `min_lon <= max_lon`, `min_lat <= max_lat`.
///
/// Zero-area boxes (a line or a single point) are valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxExtent {
    min_lon: f64,
    min_lat: f64,
    max_lon: f64,
    max_lat: f64,
}

impl BoxExtent {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeoError> {
        let min_lon = check_lon("min_lon", min_lon)?;
        let min_lat = check_lat("min_lat", min_lat)?;
        let max_lon = check_lon("max_lon", max_lon)?;
        let max_lat = check_lat("max_lat", max_lat)?;
        if min_lon > max_lon {
            return Err(GeoError::InvertedExtent {
                axis: "lon",
                min: min_lon,
                max: max_lon,
            });
        }
        if min_lat > max_lat {
            return Err(GeoError::InvertedExtent {
                axis: "lat",
                min: min_lat,
                max: max_lat,
            });
        }
        Ok(Self {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        })
    }

    pub fn min_lon(&self) -> f64 {
        self.min_lon
    }

    pub fn min_lat(&self) -> f64 {
        self.min_lat
    }

    pub fn max_lon(&self) -> f64 {
        self.max_lon
    }

    pub fn max_lat(&self) -> f64 {
        self.max_lat
    }

    /// `[min_lon, min_lat, max_lon, max_lat]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.min_lon, self.min_lat, self.max_lon, self.max_lat]
    }

    pub fn width_deg(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height_deg(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    /// Intersection of the two diagonals.
    pub fn centroid(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.min_lon <= p.lon && p.lon <= self.max_lon && self.min_lat <= p.lat && p.lat <= self.max_lat
    }

    pub fn contains_box(&self, other: &BoxExtent) -> bool {
        self.min_lon <= other.min_lon
            && other.max_lon <= self.max_lon
            && self.min_lat <= other.min_lat
            && other.max_lat <= self.max_lat
    }

    /// True when the closed intervals intersect on both axes; touching edges count.
    pub fn overlaps(&self, other: &BoxExtent) -> bool {
        self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
            && self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
    }

    /// Smallest extent containing both boxes.
    pub fn union(&self, other: &BoxExtent) -> BoxExtent {
        BoxExtent {
            min_lon: self.min_lon.min(other.min_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lon: self.max_lon.max(other.max_lon),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }

    /// The point of the box nearest to `p` in coordinate space.
    pub fn clamp(&self, p: GeoPoint) -> GeoPoint {
        GeoPoint {
            lat: p.lat.clamp(self.min_lat, self.max_lat),
            lon: p.lon.clamp(self.min_lon, self.max_lon),
        }
    }
}

impl fmt::Display for BoxExtent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}]",
            self.min_lon, self.min_lat, self.max_lon, self.max_lat
        )
    }
}

/// Builds the box spanned by two opposite corners given in any order.
pub fn normalize_box(p1: GeoPoint, p2: GeoPoint) -> Result<BoxExtent, GeoError> {
    let span = (p1.lon - p2.lon).abs();
    if span > MAX_CORNER_LON_SPAN_DEG {
        return Err(GeoError::AntimeridianUnsupported { span });
    }
    BoxExtent::new(
        p1.lon.min(p2.lon),
        p1.lat.min(p2.lat),
        p1.lon.max(p2.lon),
        p1.lat.max(p2.lat),
    )
}

/// Great-circle distance by the haversine formula.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> Distance {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let d_phi = (b.lat - a.lat).to_radians();
    let d_lambda = (b.lon - a.lon).to_radians();

    let h = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_lambda / 2.0).sin().powi(2);
    // rounding can push h a hair past 1 for antipodal points
    let h = h.clamp(0.0, 1.0);
    let c = 2.0 * h.sqrt().atan2((1.0 - h).sqrt());
    Distance(EARTH_RADIUS_M * c)
}

/// Distance from `p` to the nearest point of `extent`; zero inside.
///
/// The nearest point is found by clamping `p` into the box in coordinate
/// space, then measured with [`haversine_distance`]. At geofence scales this
/// is within a fraction of a percent of the true geodesic distance.
pub fn distance_to_box(p: GeoPoint, extent: &BoxExtent) -> Distance {
    if extent.contains(p) {
        return Distance::ZERO;
    }
    haversine_distance(p, extent.clamp(p))
}
