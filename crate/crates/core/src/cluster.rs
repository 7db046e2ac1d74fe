//! Two-level location clustering.
//!
//! First level groups posts by address label; posts without an address are
//! grouped by density (DBSCAN with `min_pts = 1`, so chains of neighbors
//! within `eps` form one cluster and nothing is discarded as noise). Second
//! level folds small neighboring clusters into a dominant one when their
//! midpoints lie within the merge radius of the dominant's own midpoint. The
//! distance is checked against the dominant's original midpoint, so merging
//! never cascades.

use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::geo::{geometric_midpoint, haversine_distance, AddressLabel, GeoPoint};
use crate::spatial::GridIndex;

pub type ClusterId = u32;

pub const DEFAULT_EPS_M: f64 = 30.0;
pub const DEFAULT_MERGE_M: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FirstLevelCluster {
    pub id: ClusterId,
    pub label: AddressLabel,
    pub members: Vec<String>,
    pub coords: Vec<GeoPoint>,
    pub midpoint: GeoPoint,
}

impl FirstLevelCluster {
    fn new(id: ClusterId, label: AddressLabel, members: Vec<String>, coords: Vec<GeoPoint>) -> Self {
        let midpoint = geometric_midpoint(&coords).expect("clusters are never empty");
        FirstLevelCluster { id, label, members, coords, midpoint }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A first-level cluster absorbed into a second-level one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRecord {
    pub id: ClusterId,
    pub size: usize,
    pub midpoint: GeoPoint,
    /// Distance to the dominant's original midpoint.
    pub distance_m: f64,
}

/// Second-level cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Id of the dominant first-level cluster.
    pub id: ClusterId,
    pub label: AddressLabel,
    pub members: Vec<String>,
    pub coords: Vec<GeoPoint>,
    /// The dominant's midpoint before absorption.
    pub seed_midpoint: GeoPoint,
    pub midpoint: GeoPoint,
    pub max_radius_m: f64,
    /// 1 = most members within the user; ties by ascending id.
    pub rank: u32,
    pub merged: Vec<MergeRecord>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// View as a first-level cluster, e.g. to re-run the merge.
    pub fn as_first_level(&self) -> FirstLevelCluster {
        FirstLevelCluster {
            id: self.id,
            label: self.label.clone(),
            members: self.members.clone(),
            coords: self.coords.clone(),
            midpoint: self.midpoint,
        }
    }
}

/// Groups geotagged posts by label. Unknown-labeled posts are density
/// clustered with radius `eps_m`. Ids follow the order in which each
/// cluster's first member appears in `posts`.
pub fn first_level(
    posts: &[(String, GeoPoint)],
    labels: &HashMap<String, AddressLabel>,
    eps_m: f64,
) -> Vec<FirstLevelCluster> {
    // (first input index, label, member indices)
    let mut groups: Vec<(usize, AddressLabel, Vec<usize>)> = Vec::new();
    let mut by_label: HashMap<&str, usize> = HashMap::new();
    let mut unknown: Vec<usize> = Vec::new();

    for (i, (post_id, _)) in posts.iter().enumerate() {
        match labels.get(post_id).unwrap_or(&AddressLabel::Unknown) {
            AddressLabel::Unknown => unknown.push(i),
            label @ AddressLabel::Resolved(addr) => {
                let g = *by_label.entry(addr.as_str()).or_insert_with(|| {
                    groups.push((i, label.clone(), Vec::new()));
                    groups.len() - 1
                });
                groups[g].2.push(i);
            }
        }
    }

    let unknown_points: Vec<GeoPoint> = unknown.iter().map(|&i| posts[i].1).collect();
    for comp in dbscan_components(&unknown_points, eps_m) {
        let members: Vec<usize> = comp.into_iter().map(|j| unknown[j]).collect();
        groups.push((members[0], AddressLabel::Unknown, members));
    }

    groups.sort_by_key(|g| g.0);
    groups
        .into_iter()
        .enumerate()
        .map(|(id, (_, label, idx))| {
            FirstLevelCluster::new(
                id as ClusterId,
                label,
                idx.iter().map(|&i| posts[i].0.clone()).collect(),
                idx.iter().map(|&i| posts[i].1).collect(),
            )
        })
        .collect()
}

/// DBSCAN over points with unknown addresses, `min_pts = 1`.
pub fn density_cluster_unknown(points: &[(String, GeoPoint)], eps_m: f64) -> Vec<FirstLevelCluster> {
    let coords: Vec<GeoPoint> = points.iter().map(|p| p.1).collect();
    dbscan_components(&coords, eps_m)
        .into_iter()
        .enumerate()
        .map(|(id, comp)| {
            FirstLevelCluster::new(
                id as ClusterId,
                AddressLabel::Unknown,
                comp.iter().map(|&i| points[i].0.clone()).collect(),
                comp.iter().map(|&i| points[i].1).collect(),
            )
        })
        .collect()
}

/// Cluster memberships as sorted index lists, ordered by smallest member.
fn dbscan_components(points: &[GeoPoint], eps_m: f64) -> Vec<Vec<usize>> {
    let mut index = GridIndex::new(eps_m.max(1.0));
    for (i, &p) in points.iter().enumerate() {
        index.insert(p, i);
    }
    let mut assigned = vec![false; points.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..points.len() {
        if assigned[start] {
            continue;
        }
        assigned[start] = true;
        let mut comp = vec![start];
        queue.push_back(start);
        // with min_pts = 1 every point is a core point, so expansion is a
        // plain breadth-first walk over the eps-neighborhood graph
        while let Some(cur) = queue.pop_front() {
            for (j, _) in index.within(points[cur], eps_m) {
                if !assigned[j] {
                    assigned[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Folds first-level clusters into second-level clusters and ranks them.
pub fn second_level_merge(fl: &[FirstLevelCluster], radius_m: f64) -> Vec<Cluster> {
    let mut order: Vec<usize> = (0..fl.len()).collect();
    order.sort_by(|&a, &b| fl[b].len().cmp(&fl[a].len()).then(fl[a].id.cmp(&fl[b].id)));

    let mut taken = vec![false; fl.len()];
    let mut out = Vec::new();
    for (pos, &seed) in order.iter().enumerate() {
        if taken[seed] {
            continue;
        }
        taken[seed] = true;
        let dom = &fl[seed];
        let mut members = dom.members.clone();
        let mut coords = dom.coords.clone();
        let mut merged = Vec::new();
        for &cand in &order[pos + 1..] {
            if taken[cand] {
                continue;
            }
            let d = haversine_distance(dom.midpoint, fl[cand].midpoint);
            if d <= radius_m {
                taken[cand] = true;
                members.extend(fl[cand].members.iter().cloned());
                coords.extend(fl[cand].coords.iter().copied());
                merged.push(MergeRecord {
                    id: fl[cand].id,
                    size: fl[cand].len(),
                    midpoint: fl[cand].midpoint,
                    distance_m: d,
                });
            }
        }
        let midpoint = geometric_midpoint(&coords).expect("non-empty");
        let max_radius_m = coords
            .iter()
            .map(|c| haversine_distance(midpoint, *c))
            .fold(0.0, f64::max);
        out.push(Cluster {
            id: dom.id,
            label: dom.label.clone(),
            members,
            coords,
            seed_midpoint: dom.midpoint,
            midpoint,
            max_radius_m,
            rank: 0,
            merged,
        });
    }
    assign_ranks(&mut out);
    out
}

/// Ranks by descending member count, ties by ascending id; the vector is
/// left sorted by rank.
pub fn assign_ranks(clusters: &mut [Cluster]) {
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.id.cmp(&b.id)));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.rank = i as u32 + 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn origin() -> GeoPoint {
        GeoPoint::new(41.88, -87.63).unwrap()
    }

    fn pts(offsets: &[(f64, f64)]) -> Vec<(String, GeoPoint)> {
        offsets
            .iter()
            .enumerate()
            .map(|(i, &(e, n))| (format!("p{i}"), origin().offset_m(e, n)))
            .collect()
    }

    fn fl(id: ClusterId, n: usize, at: GeoPoint) -> FirstLevelCluster {
        FirstLevelCluster::new(
            id,
            AddressLabel::resolved(&format!("{id} street")),
            (0..n).map(|i| format!("c{id}-{i}")).collect(),
            vec![at; n],
        )
    }

    #[test]
    fn first_level_groups_by_address() {
        let posts = pts(&[(0.0, 0.0), (1.0, 0.0), (300.0, 0.0), (900.0, 0.0), (901.0, 0.0)]);
        let mut labels = HashMap::new();
        for (i, addr) in ["A", "A", "A", "B", "B"].iter().enumerate() {
            labels.insert(format!("p{i}"), AddressLabel::resolved(addr));
        }
        let cs = first_level(&posts, &labels, DEFAULT_EPS_M);
        let sizes: Vec<usize> = cs.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![3, 2]);
        // same address 300 m apart stays together
        assert_eq!(cs[0].label.address(), "a");
    }

    #[test]
    fn first_level_unknown_singleton() {
        let posts = pts(&[(0.0, 0.0)]);
        let labels = HashMap::from([("p0".to_string(), AddressLabel::Unknown)]);
        let cs = first_level(&posts, &labels, DEFAULT_EPS_M);
        assert_eq!(cs.len(), 1);
        assert!(cs[0].label.is_unknown());
    }

    #[test]
    fn dbscan_chains_and_separates() {
        let chained = density_cluster_unknown(&pts(&[(0.0, 0.0), (25.0, 0.0), (50.0, 0.0)]), 30.0);
        assert_eq!(chained.len(), 1);
        assert_eq!(chained[0].len(), 3);

        let split = density_cluster_unknown(&pts(&[(0.0, 0.0), (31.0, 0.0)]), 30.0);
        assert_eq!(split.len(), 2);

        assert!(density_cluster_unknown(&[], 30.0).is_empty());
    }

    #[test]
    fn merge_absorbs_satellites() {
        let o = origin();
        let input = vec![fl(0, 100, o), fl(1, 5, o.offset_m(30.0, 0.0)), fl(2, 3, o.offset_m(0.0, 45.0))];
        let out = second_level_merge(&input, 50.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 108);
        assert_eq!(out[0].id, 0);
        assert_eq!(out[0].rank, 1);
        assert_eq!(out[0].merged.len(), 2);
    }

    #[test]
    fn merge_does_not_cascade() {
        let o = origin();
        let input = vec![fl(0, 100, o), fl(1, 5, o.offset_m(49.0, 0.0)), fl(2, 3, o.offset_m(98.0, 0.0))];
        let out = second_level_merge(&input, 50.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].len(), 105);
        assert_eq!(out[1].id, 2);
    }

    #[test]
    fn equal_sizes_rank_by_id() {
        let o = origin();
        let input = vec![fl(7, 4, o.offset_m(200.0, 0.0)), fl(3, 4, o)];
        let out = second_level_merge(&input, 50.0);
        let ranks: Vec<(ClusterId, u32)> = out.iter().map(|c| (c.id, c.rank)).collect();
        assert_eq!(ranks, vec![(3, 1), (7, 2)]);
    }

    #[test]
    fn merge_partitions_posts_and_recomputes_geometry() {
        let o = origin();
        let input = vec![fl(0, 2, o), fl(1, 2, o.offset_m(40.0, 0.0))];
        let out = second_level_merge(&input, 50.0);
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert!((haversine_distance(c.midpoint, o) - 20.0).abs() < 0.05);
        assert!((c.max_radius_m - 20.0).abs() < 0.05);
        let ids: BTreeSet<&String> = c.members.iter().collect();
        assert_eq!(ids.len(), 4);
    }
}
