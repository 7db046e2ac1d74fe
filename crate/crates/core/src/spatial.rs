//! Fixed-cell grid index over lat/lon for small-radius neighborhood queries.
//!
//! Cells are square in degrees with side `cell_m / METERS_PER_DEGREE`. A
//! query of radius `r` probes every cell that the bounding box of the disc
//! touches; at higher latitudes that box widens in longitude, so the probe
//! window grows accordingly instead of assuming a fixed 3×3 neighborhood.

use std::collections::HashMap;

use crate::geo::{haversine_distance, GeoPoint, METERS_PER_DEGREE};

// Beyond this many probed cells a linear scan is cheaper.
const MAX_PROBE_CELLS: i64 = 4096;

#[derive(Debug, Clone)]
pub struct GridIndex<T> {
    cell_deg: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    entries: Vec<(GeoPoint, T)>,
}

impl<T> GridIndex<T> {
    pub fn new(cell_m: f64) -> Self {
        assert!(cell_m > 0.0, "cell size must be positive");
        GridIndex {
            cell_deg: cell_m / METERS_PER_DEGREE,
            cells: HashMap::new(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(&self, lat: f64, lon: f64) -> (i64, i64) {
        (
            (lat / self.cell_deg).floor() as i64,
            (lon / self.cell_deg).floor() as i64,
        )
    }

    /// Appends an entry; returns its insertion index.
    pub fn insert(&mut self, p: GeoPoint, value: T) -> usize {
        let idx = self.entries.len();
        let key = self.key(p.lat(), p.lon());
        self.cells.entry(key).or_default().push(idx);
        self.entries.push((p, value));
        idx
    }

    pub fn get(&self, idx: usize) -> Option<&(GeoPoint, T)> {
        self.entries.get(idx)
    }

    pub fn entries(&self) -> &[(GeoPoint, T)] {
        &self.entries
    }

    /// Indices and distances of every entry with `distance <= radius_m`,
    /// sorted by distance then insertion order.
    pub fn within(&self, p: GeoPoint, radius_m: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        // small margin covers the asin/linear gap of the haversine bound
        let dlat = radius_m / METERS_PER_DEGREE * 1.001 + 1e-12;
        let max_abs_lat = (p.lat().abs() + dlat).min(90.0);
        let cos = max_abs_lat.to_radians().cos();
        let dlon = if cos > 1e-9 { dlat / cos } else { f64::INFINITY };

        let (lat_lo, lon_lo) = self.key(p.lat() - dlat, p.lon() - dlon.min(360.0));
        let (lat_hi, lon_hi) = self.key(p.lat() + dlat, p.lon() + dlon.min(360.0));
        let probes = (lat_hi - lat_lo + 1).saturating_mul(lon_hi - lon_lo + 1);
        let wraps = p.lon() - dlon < -180.0 || p.lon() + dlon > 180.0;

        let mut consider = |idx: usize| {
            let d = haversine_distance(p, self.entries[idx].0);
            if d <= radius_m {
                out.push((idx, d));
            }
        };
        if !dlon.is_finite() || wraps {
            for idx in 0..self.entries.len() {
                consider(idx);
            }
        } else if probes > MAX_PROBE_CELLS || probes as usize > self.cells.len() {
            for (&(i, j), bucket) in &self.cells {
                if (lat_lo..=lat_hi).contains(&i) && (lon_lo..=lon_hi).contains(&j) {
                    for &idx in bucket {
                        consider(idx);
                    }
                }
            }
        } else {
            for i in lat_lo..=lat_hi {
                for j in lon_lo..=lon_hi {
                    if let Some(bucket) = self.cells.get(&(i, j)) {
                        for &idx in bucket {
                            consider(idx);
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Nearest entry within `radius_m` (inclusive); ties go to the older entry.
    pub fn nearest_within(&self, p: GeoPoint, radius_m: f64) -> Option<(usize, f64)> {
        self.within(p, radius_m).into_iter().next()
    }
}
