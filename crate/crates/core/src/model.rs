//! Post records and the line-delimited JSON record format.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceApp {
    #[serde(rename = "android")]
    AndroidOfficial,
    #[serde(rename = "ios")]
    IOSOfficial,
    Web,
    Foursquare,
    Other,
}

impl SourceApp {
    pub const ALL: [SourceApp; 5] = [
        SourceApp::AndroidOfficial,
        SourceApp::IOSOfficial,
        SourceApp::Web,
        SourceApp::Foursquare,
        SourceApp::Other,
    ];

    /// Official mobile clients plus Foursquare.
    pub const DEFAULT_FILTER: [SourceApp; 3] = [
        SourceApp::AndroidOfficial,
        SourceApp::IOSOfficial,
        SourceApp::Foursquare,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceApp::AndroidOfficial => "android",
            SourceApp::IOSOfficial => "ios",
            SourceApp::Web => "web",
            SourceApp::Foursquare => "foursquare",
            SourceApp::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<SourceApp> {
        SourceApp::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeotagKind {
    #[serde(rename = "gps")]
    PreciseGps,
    #[serde(rename = "coarse")]
    CoarsePlace,
    #[serde(rename = "poi")]
    PointOfInterest,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Syntax(String),
    #[error("lat and lon must be both present or both absent")]
    PartialCoordinates,
    #[error(transparent)]
    Coordinate(#[from] GeoError),
    #[error("timestamp must be positive, got {0}")]
    Timestamp(i64),
    #[error("precise GPS geotag without coordinates")]
    GpsWithoutCoords,
    #[error("post with geotag 'none' carries coordinates")]
    NoneWithCoords,
    #[error("empty post_id")]
    EmptyId,
}

/// One geo-annotated post.
#[derive(Debug, Clone, PartialEq)]
pub struct PostRecord {
    pub post_id: String,
    pub user_id: String,
    pub timestamp_utc: i64,
    pub coords: Option<GeoPoint>,
    pub text: String,
    pub source_app: SourceApp,
    pub geotag_kind: GeotagKind,
    pub place_name: Option<String>,
}

/// Wire shape of a record line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordLine {
    pub post_id: String,
    pub user_id: String,
    pub ts: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default)]
    pub text: String,
    pub source: SourceApp,
    pub geotag: GeotagKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
}

impl TryFrom<RecordLine> for PostRecord {
    type Error = RecordError;

    fn try_from(line: RecordLine) -> Result<Self, RecordError> {
        if line.post_id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        if line.ts <= 0 {
            return Err(RecordError::Timestamp(line.ts));
        }
        let coords = match (line.lat, line.lon) {
            (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon)?),
            (None, None) => None,
            _ => return Err(RecordError::PartialCoordinates),
        };
        match (line.geotag, coords.is_some()) {
            (GeotagKind::PreciseGps, false) => return Err(RecordError::GpsWithoutCoords),
            (GeotagKind::None, true) => return Err(RecordError::NoneWithCoords),
            _ => {}
        }
        Ok(PostRecord {
            post_id: line.post_id,
            user_id: line.user_id,
            timestamp_utc: line.ts,
            coords,
            text: line.text,
            source_app: line.source,
            geotag_kind: line.geotag,
            place_name: line.place,
        })
    }
}

impl From<&PostRecord> for RecordLine {
    fn from(p: &PostRecord) -> Self {
        RecordLine {
            post_id: p.post_id.clone(),
            user_id: p.user_id.clone(),
            ts: p.timestamp_utc,
            lat: p.coords.map(|c| c.lat()),
            lon: p.coords.map(|c| c.lon()),
            text: p.text.clone(),
            source: p.source_app,
            geotag: p.geotag_kind,
            place: p.place_name.clone(),
        }
    }
}

impl PostRecord {
    pub fn parse_line(line: &str) -> Result<PostRecord, RecordError> {
        let raw: RecordLine =
            serde_json::from_str(line).map_err(|e| RecordError::Syntax(e.to_string()))?;
        PostRecord::try_from(raw)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(&RecordLine::from(self)).expect("record serialization is infallible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_record() {
        let p = PostRecord::parse_line(
            r#"{"post_id":"1","user_id":"u","ts":1420070400,"lat":41.8,"lon":-87.6,"text":"hi","source":"ios","geotag":"gps"}"#,
        )
        .unwrap();
        assert_eq!(p.source_app, SourceApp::IOSOfficial);
        assert_eq!(p.geotag_kind, GeotagKind::PreciseGps);
        assert!(p.coords.is_some());
        assert_eq!(p.place_name, None);
    }

    #[test]
    fn rejects_invariant_violations() {
        let gps_no_coords = r#"{"post_id":"1","user_id":"u","ts":5,"source":"web","geotag":"gps"}"#;
        assert_eq!(PostRecord::parse_line(gps_no_coords), Err(RecordError::GpsWithoutCoords));
        let none_with = r#"{"post_id":"1","user_id":"u","ts":5,"lat":1,"lon":1,"source":"web","geotag":"none"}"#;
        assert_eq!(PostRecord::parse_line(none_with), Err(RecordError::NoneWithCoords));
        let half = r#"{"post_id":"1","user_id":"u","ts":5,"lat":1,"source":"web","geotag":"coarse"}"#;
        assert_eq!(PostRecord::parse_line(half), Err(RecordError::PartialCoordinates));
        let zero_ts = r#"{"post_id":"1","user_id":"u","ts":0,"source":"web","geotag":"none"}"#;
        assert_eq!(PostRecord::parse_line(zero_ts), Err(RecordError::Timestamp(0)));
        let bad_src = r#"{"post_id":"1","user_id":"u","ts":5,"source":"fax","geotag":"none"}"#;
        assert!(matches!(PostRecord::parse_line(bad_src), Err(RecordError::Syntax(_))));
    }

    #[test]
    fn coarse_may_carry_coords() {
        let line = r#"{"post_id":"1","user_id":"u","ts":5,"lat":1,"lon":1,"source":"android","geotag":"coarse","place":"Chicago, IL"}"#;
        let p = PostRecord::parse_line(line).unwrap();
        assert_eq!(p.place_name.as_deref(), Some("Chicago, IL"));
        assert_eq!(PostRecord::parse_line(&p.to_line()).unwrap(), p);
    }
}
