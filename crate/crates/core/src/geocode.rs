//! Reverse geocoding: pluggable providers, a proximity cache that reuses
//! labels of already-resolved points, and midpoint re-verification of the
//! largest clusters against an authoritative provider.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::Deserialize;
use thiserror::Error;

use crate::cluster::Cluster;
use crate::geo::{AddressLabel, GeoPoint};
use crate::spatial::GridIndex;

pub const DEFAULT_CACHE_RADIUS_M: f64 = 2.0;
pub const DEFAULT_SEED_FALLBACK_M: f64 = 40.0;
pub const DEFAULT_VERIFY_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("provider {provider}: {message}")]
pub struct ProviderError {
    pub provider: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum GeocodeDbError {
    #[error("cannot read geocode database: {0}")]
    Io(#[from] std::io::Error),
    #[error("geocode database line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Maps a coordinate to an address label. Implementations must be
/// deterministic within a run.
pub trait GeocodeProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn reverse(&self, p: GeoPoint) -> Result<AddressLabel, ProviderError>;
}

impl<P: GeocodeProvider + ?Sized> GeocodeProvider for &P {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }
    fn reverse(&self, p: GeoPoint) -> Result<AddressLabel, ProviderError> {
        (**self).reverse(p)
    }
}

impl<P: GeocodeProvider + ?Sized> GeocodeProvider for std::sync::Arc<P> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }
    fn reverse(&self, p: GeoPoint) -> Result<AddressLabel, ProviderError> {
        (**self).reverse(p)
    }
}

/// Wraps a provider and counts calls.
#[derive(Debug)]
pub struct CountingProvider<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P: GeocodeProvider> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: GeocodeProvider> GeocodeProvider for CountingProvider<P> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }
    fn reverse(&self, p: GeoPoint) -> Result<AddressLabel, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.reverse(p)
    }
}

#[derive(Debug, Deserialize)]
struct GeocodeRecord {
    address: String,
    lat: Option<f64>,
    lon: Option<f64>,
    polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
struct AddressPolygon {
    label: AddressLabel,
    // (lat, lon) vertices
    ring: Vec<[f64; 2]>,
    bbox: [f64; 4],
}

impl AddressPolygon {
    fn contains(&self, p: GeoPoint) -> bool {
        let (y, x) = (p.lat(), p.lon());
        let [min_lat, max_lat, min_lon, max_lon] = self.bbox;
        if y < min_lat || y > max_lat || x < min_lon || x > max_lon {
            return false;
        }
        let n = self.ring.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [yi, xi] = self.ring[i];
            let [yj, xj] = self.ring[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// Address table backed by a line-delimited JSON file.
///
/// Each line is `{"address": .., "lat": .., "lon": ..}` (a seed point) or
/// `{"address": .., "polygon": [[lat, lon], ..]}`. A lookup returns the first
/// polygon containing the point, else the nearest seed within the fallback
/// radius, else `Unknown`.
#[derive(Debug, Clone)]
pub struct FileGeocodeProvider {
    id: String,
    polygons: Vec<AddressPolygon>,
    seeds: GridIndex<AddressLabel>,
    fallback_m: f64,
}

impl FileGeocodeProvider {
    pub fn empty(id: impl Into<String>, fallback_m: f64) -> Self {
        FileGeocodeProvider {
            id: id.into(),
            polygons: Vec::new(),
            seeds: GridIndex::new(fallback_m.max(1.0)),
            fallback_m,
        }
    }

    pub fn load(path: &Path, fallback_m: f64) -> Result<Self, GeocodeDbError> {
        let id = format!("file:{}", path.display());
        Self::from_reader(id, BufReader::new(File::open(path)?), fallback_m)
    }

    pub fn from_reader<R: BufRead>(
        id: impl Into<String>,
        reader: R,
        fallback_m: f64,
    ) -> Result<Self, GeocodeDbError> {
        let mut db = Self::empty(id, fallback_m);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| GeocodeDbError::Format { line: i + 1, message };
            let rec: GeocodeRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
            let label = AddressLabel::resolved(&rec.address);
            if label.is_unknown() {
                return Err(fail("empty address".into()));
            }
            match (rec.polygon, rec.lat, rec.lon) {
                (Some(ring), _, _) => {
                    if ring.len() < 3 {
                        return Err(fail("polygon needs at least 3 vertices".into()));
                    }
                    for &[lat, lon] in &ring {
                        GeoPoint::new(lat, lon).map_err(|e| fail(e.to_string()))?;
                    }
                    db.add_polygon(label, ring);
                }
                (None, Some(lat), Some(lon)) => {
                    let p = GeoPoint::new(lat, lon).map_err(|e| fail(e.to_string()))?;
                    db.add_seed(p, label);
                }
                _ => return Err(fail("need lat/lon or polygon".into())),
            }
        }
        Ok(db)
    }

    pub fn add_seed(&mut self, p: GeoPoint, label: AddressLabel) {
        self.seeds.insert(p, label);
    }

    pub fn add_polygon(&mut self, label: AddressLabel, ring: Vec<[f64; 2]>) {
        let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for &[lat, lon] in &ring {
            bbox[0] = bbox[0].min(lat);
            bbox[1] = bbox[1].max(lat);
            bbox[2] = bbox[2].min(lon);
            bbox[3] = bbox[3].max(lon);
        }
        self.polygons.push(AddressPolygon { label, ring, bbox });
    }

    pub fn len(&self) -> usize {
        self.polygons.len() + self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl GeocodeProvider for FileGeocodeProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn reverse(&self, p: GeoPoint) -> Result<AddressLabel, ProviderError> {
        if let Some(poly) = self.polygons.iter().find(|poly| poly.contains(p)) {
            return Ok(poly.label.clone());
        }
        Ok(self
            .seeds
            .nearest_within(p, self.fallback_m)
            .map(|(idx, _)| self.seeds.entries()[idx].1.clone())
            .unwrap_or(AddressLabel::Unknown))
    }
}

/// Labels of previously geocoded points, reused for queries falling strictly
/// inside `radius_m` of a cached point.
///
/// Reads take a shared lock; inserts are serialized and re-check the
/// neighborhood so that each query observes a consistent cache state.
#[derive(Debug)]
pub struct ProximityCache {
    radius_m: f64,
    index: RwLock<GridIndex<AddressLabel>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Default for ProximityCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_RADIUS_M)
    }
}

impl ProximityCache {
    pub fn new(radius_m: f64) -> Self {
        ProximityCache {
            radius_m,
            index: RwLock::new(GridIndex::new(radius_m.max(0.5))),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn probe(&self, index: &GridIndex<AddressLabel>, p: GeoPoint) -> Option<AddressLabel> {
        // strict: a cached point exactly at the radius is not a hit
        index
            .within(p, self.radius_m)
            .into_iter()
            .find(|&(_, d)| d < self.radius_m)
            .map(|(idx, _)| index.entries()[idx].1.clone())
    }

    /// Returns the label of the nearest cached point strictly within the
    /// radius (oldest entry on distance ties); otherwise asks `provider` and
    /// caches its answer. Provider failures are returned and not cached.
    pub fn resolve<P: GeocodeProvider + ?Sized>(
        &self,
        p: GeoPoint,
        provider: &P,
    ) -> Result<AddressLabel, ProviderError> {
        {
            let index = self.index.read().expect("cache lock poisoned");
            if let Some(label) = self.probe(&index, p) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(label);
            }
        }
        let label = provider.reverse(p)?;
        self.misses.fetch_add(1, Ordering::Relaxed);
        let mut index = self.index.write().expect("cache lock poisoned");
        if let Some(existing) = self.probe(&index, p) {
            // another writer cached a neighbor while we were asking
            return Ok(existing);
        }
        index.insert(p, label.clone());
        Ok(label)
    }
}

pub fn cached_reverse_geocode<P: GeocodeProvider + ?Sized>(
    p: GeoPoint,
    cache: &ProximityCache,
    provider: &P,
) -> Result<AddressLabel, ProviderError> {
    cache.resolve(p, provider)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOutcome {
    pub queried: usize,
    pub relabeled: usize,
    pub errors: Vec<String>,
}

/// Re-geocodes the midpoints of the `k` highest-ranked clusters and adopts the
/// authoritative label whenever it is resolved and differs.
pub fn verify_cluster_addresses<P: GeocodeProvider + ?Sized>(
    clusters: &mut [Cluster],
    authoritative: &P,
    k: usize,
) -> VerifyOutcome {
    let mut out = VerifyOutcome::default();
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by_key(|&i| clusters[i].rank);
    for &i in order.iter().take(k) {
        let cluster = &mut clusters[i];
        out.queried += 1;
        match authoritative.reverse(cluster.midpoint) {
            Ok(label @ AddressLabel::Resolved(_)) if label != cluster.label => {
                log::debug!("cluster {} relabeled {} -> {}", cluster.id, cluster.label, label);
                cluster.label = label;
                out.relabeled += 1;
            }
            Ok(_) => {}
            Err(e) => out.errors.push(format!("cluster {}: {}", cluster.id, e)),
        }
    }
    out
}
