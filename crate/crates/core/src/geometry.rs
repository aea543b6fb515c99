//! Spatial primitives: point sets, k-nearest-neighbor and radius queries,
//! farthest point sampling.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// An immutable 3-D point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<Point>,
}

impl PointSet {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Contract("point set contains non-finite coordinates".into()));
        }
        Ok(PointSet { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        self.coords[i]
    }

    pub fn points(&self) -> &[Point] {
        &self.coords
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    dist2(a, b).sqrt()
}

pub fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// A matched neighbor with its Euclidean distance to the query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Per query point, neighbors ordered by non-decreasing distance
/// (ties broken by lower reference index).
#[derive(Debug, Clone)]
pub struct NeighborList {
    pub lists: Vec<Vec<Neighbor>>,
    /// Set when a radius query dropped neighbors beyond the cap.
    pub truncated: bool,
}

/// Search strategy; both must return identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Grid,
    BruteForce,
}

/// k nearest reference points for each query point. With `exclude_same_index`
/// a reference point sharing the query's index is skipped (for self-queries).
pub fn knn(query: &PointSet, reference: &PointSet, k: usize, exclude_same_index: bool) -> Result<NeighborList> {
    let avail = if exclude_same_index { reference.len().saturating_sub(1) } else { reference.len() };
    if k == 0 || k > avail {
        return Err(Error::Query(format!(
            "knn: k={k} but only {avail} reference points are available"
        )));
    }
    let mut lists = Vec::with_capacity(query.len());
    for (qi, &q) in query.points().iter().enumerate() {
        let mut cands: Vec<Neighbor> = reference
            .points()
            .iter()
            .enumerate()
            .filter(|&(ri, _)| !(exclude_same_index && ri == qi))
            .map(|(ri, &r)| Neighbor { index: ri, distance: dist(q, r) })
            .collect();
        cands.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap()
                .then(a.index.cmp(&b.index))
        });
        cands.truncate(k);
        lists.push(cands);
    }
    Ok(NeighborList { lists, truncated: false })
}

/// All reference points strictly within radius `r` of each query point,
/// nearest first, capped at `max_neighbors` (keeping the nearest).
pub fn radius_neighbors(
    query: &PointSet,
    reference: &PointSet,
    r: f64,
    max_neighbors: usize,
    mode: SearchMode,
) -> NeighborList {
    assert!(r > 0.0, "radius must be positive");
    let mut lists = match mode {
        SearchMode::BruteForce => radius_brute(query, reference, r),
        SearchMode::Grid => radius_grid(query, reference, r),
    };
    let mut truncated = false;
    for list in &mut lists {
        list.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap()
                .then(a.index.cmp(&b.index))
        });
        if list.len() > max_neighbors {
            list.truncate(max_neighbors);
            truncated = true;
        }
    }
    NeighborList { lists, truncated }
}

fn radius_brute(query: &PointSet, reference: &PointSet, r: f64) -> Vec<Vec<Neighbor>> {
    let r2 = r * r;
    query
        .points()
        .iter()
        .map(|&q| {
            reference
                .points()
                .iter()
                .enumerate()
                .filter_map(|(ri, &p)| {
                    let d2 = dist2(q, p);
                    // strict: boundary points (distance == r) excluded
                    (d2 < r2).then(|| Neighbor { index: ri, distance: d2.sqrt() })
                })
                .collect()
        })
        .collect()
}

fn radius_grid(query: &PointSet, reference: &PointSet, r: f64) -> Vec<Vec<Neighbor>> {
    let cell = |p: Point| -> (i64, i64, i64) {
        ((p[0] / r).floor() as i64, (p[1] / r).floor() as i64, (p[2] / r).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (ri, &p) in reference.points().iter().enumerate() {
        grid.entry(cell(p)).or_default().push(ri);
    }
    let r2 = r * r;
    query
        .points()
        .iter()
        .map(|&q| {
            let (cx, cy, cz) = cell(q);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &ri in bucket {
                                let d2 = dist2(q, reference.point(ri));
                                if d2 < r2 {
                                    out.push(Neighbor { index: ri, distance: d2.sqrt() });
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Greedy max-min subsample of `m` indices starting from `seed_index`.
/// Distance ties break toward the lexicographically smaller coordinate, then
/// the lower index, so the selection is stable under permutation.
pub fn farthest_point_sample(pts: &PointSet, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = pts.len();
    if m == 0 || m > n {
        return Err(Error::Query(format!("farthest_point_sample: m={m} out of range for n={n}")));
    }
    if seed_index >= n {
        return Err(Error::Query(format!("farthest_point_sample: seed index {seed_index} >= n={n}")));
    }
    let mut chosen = Vec::with_capacity(m);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = seed_index;
    chosen.push(current);
    for _ in 1..m {
        let cp = pts.point(current);
        for i in 0..n {
            let d2 = dist2(pts.point(i), cp);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
        let mut best = usize::MAX;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if best == usize::MAX
                || min_d2[i] > min_d2[best]
                || (min_d2[i] == min_d2[best] && lex_less(pts.point(i), pts.point(best)))
            {
                best = i;
            }
        }
        current = best;
        chosen.push(current);
    }
    Ok(chosen)
}

fn lex_less(a: Point, b: Point) -> bool {
    a.partial_cmp(&b) == Some(std::cmp::Ordering::Less)
}

/// Index of the point with lexicographically smallest coordinates; used as
/// the canonical FPS seed so downstream results are permutation-equivariant.
pub fn lex_min_index(pts: &PointSet) -> usize {
    let mut best = 0;
    for i in 1..pts.len() {
        if lex_less(pts.point(i), pts.point(best)) {
            best = i;
        }
    }
    best
}

/// Nearest point in `reference` for each point in `query` (brute force),
/// ties to the lower index.
pub fn nearest_indices(query: &PointSet, reference: &PointSet) -> Vec<usize> {
    assert!(!reference.is_empty(), "nearest_indices on empty reference");
    query
        .points()
        .iter()
        .map(|&q| {
            let mut best = 0;
            let mut best_d2 = dist2(q, reference.point(0));
            for ri in 1..reference.len() {
                let d2 = dist2(q, reference.point(ri));
                if d2 < best_d2 {
                    best = ri;
                    best_d2 = d2;
                }
            }
            best
        })
        .collect()
}
