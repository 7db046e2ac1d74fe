//! Location-privacy auditing of geotagged post timelines.
//!
//! The pipeline labels each geotagged post with a postal address, groups
//! posts into building-scale clusters, and reads the clusters' temporal
//! patterns to pick out a user's home and workplace. Clusters near sensitive
//! venues are then checked for signs of an actual visit, and the share of
//! posts that leaked precise coordinates under a coarse place tag is
//! measured.

pub mod audit;
pub mod baseline;
pub mod cluster;
pub mod config;
pub mod geo;
pub mod geocode;
pub mod ingest;
pub mod keyloc;
pub mod model;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod sensitive;
pub mod score;
pub mod spatial;
pub mod synthgen;
pub mod temporal;

pub use geo::{geometric_midpoint, haversine_distance, AddressLabel, GeoPoint};
pub use model::{GeotagKind, PostRecord, SourceApp};
