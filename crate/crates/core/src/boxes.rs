use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geo::{BoxExtent, GeoPoint};
use crate::Timestamp;

/// 128-bit box identifier, rendered as 32 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxId(u128);

impl BoxId {
    pub fn from_u128(raw: u128) -> Self {
        Self(raw)
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }
}

impl fmt::Display for BoxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("box id must be 32 lowercase hex digits, got {0:?}")]
pub struct ParseBoxIdError(String);

impl FromStr for BoxId {
    type Err = ParseBoxIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed =
            s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(ParseBoxIdError(s.to_owned()));
        }
        u128::from_str_radix(s, 16)
            .map(BoxId)
            .map_err(|_| ParseBoxIdError(s.to_owned()))
    }
}

impl Serialize for BoxId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BoxId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A restricted area as persisted by the registry and cached by devices.
///
/// The centroid is derived from the extent on construction and never set
/// independently.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedBox {
    id: BoxId,
    extent: BoxExtent,
    centroid: GeoPoint,
    added_by: String,
    reason: String,
    created_at: Timestamp,
}

impl RestrictedBox {
    pub fn new(
        id: BoxId,
        extent: BoxExtent,
        added_by: impl Into<String>,
        reason: impl Into<String>,
        created_at: Timestamp,
    ) -> Self {
        Self {
            id,
            extent,
            centroid: extent.centroid(),
            added_by: added_by.into(),
            reason: reason.into(),
            created_at,
        }
    }

    pub fn id(&self) -> BoxId {
        self.id
    }

    pub fn extent(&self) -> &BoxExtent {
        &self.extent
    }

    pub fn centroid(&self) -> GeoPoint {
        self.centroid
    }

    pub fn added_by(&self) -> &str {
        &self.added_by
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    pub fn created_at(&self) -> Timestamp {
        self.created_at
    }
}
