//! Geodesic primitives: validated WGS84 points, haversine distance and
//! building-scale midpoints.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters spanned by one degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("empty input")]
    EmptyInput,
}

/// A WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(raw: RawPoint) -> Result<Self, GeoError> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
        {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn distance_to(&self, other: &GeoPoint) -> f64 {
        haversine_distance(*self, *other)
    }

    /// Moves the point by a local east/north displacement in meters.
    ///
    /// Uses the equirectangular approximation, which is accurate at the
    /// building-to-city scales this crate deals with. The result is clamped
    /// into the valid coordinate range.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> GeoPoint {
        let lat = (self.lat + north_m / METERS_PER_DEGREE).clamp(-90.0, 90.0);
        let cos = self.lat.to_radians().cos().max(1e-9);
        let mut lon = self.lon + east_m / (METERS_PER_DEGREE * cos);
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint { lat, lon }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // rounding can push h a hair above 1 for antipodal pairs
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Component-wise mean of latitudes and longitudes.
///
/// Only meaningful for point sets spanning well under a kilometre and not
/// straddling the antimeridian.
pub fn geometric_midpoint(points: &[GeoPoint]) -> Result<GeoPoint, GeoError> {
    if points.is_empty() {
        return Err(GeoError::EmptyInput);
    }
    let n = points.len() as f64;
    let (lat, lon) = points
        .iter()
        .fold((0.0, 0.0), |(la, lo), p| (la + p.lat, lo + p.lon));
    GeoPoint::new(lat / n, lon / n)
}

/// Normalized postal-address label attached to a coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "address")]
pub enum AddressLabel {
    Resolved(String),
    Unknown,
}

impl AddressLabel {
    /// Builds a resolved label, or `Unknown` when the address normalizes to
    /// the empty string.
    pub fn resolved(address: &str) -> AddressLabel {
        let norm = normalize_address(address);
        if norm.is_empty() {
            AddressLabel::Unknown
        } else {
            AddressLabel::Resolved(norm)
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, AddressLabel::Unknown)
    }

    /// The normalized address, empty for `Unknown`.
    pub fn address(&self) -> &str {
        match self {
            AddressLabel::Resolved(a) => a,
            AddressLabel::Unknown => "",
        }
    }
}

impl fmt::Display for AddressLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AddressLabel::Resolved(a) => f.write_str(a),
            AddressLabel::Unknown => f.write_str("<unknown address>"),
        }
    }
}

/// Case-folds and collapses runs of whitespace.
pub fn normalize_address(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
