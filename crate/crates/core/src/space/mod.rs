//! Finite metric measure spaces, open balls and canonical ball families.
//!
//! A [`FiniteSpace`] is the discrete stand-in for a metric measure space
//! (M, rho, mu): a point set with an exact symmetric distance matrix and a
//! positive weight per point.  Balls are always *open* (strict distance
//! inequality); on a unit-distance graph the radius-1 ball around a vertex
//! is therefore the singleton, which is what makes the scale-1 Hardy space
//! on trees trivial.

pub mod generators;
pub mod geometry;
pub mod graph;
pub mod io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::numeric::kahan_sum;

/// Tolerance used when validating metric axioms of sampled spaces.
pub const METRIC_TOL: f64 = 1e-12;

/// A finite metric measure space.
///
/// `dist` is stored as a dense row-major n x n matrix.  When the space is a
/// graph, `edges` holds the (unit-length) edge list and the metric is the
/// shortest-path distance, which construction verifies.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpace {
    ids: Vec<String>,
    dist: Vec<f64>,
    weight: Vec<f64>,
    edges: Option<Vec<(usize, usize)>>,
    total_mass: f64,
    diameter: f64,
    min_positive_dist: f64,
}

impl FiniteSpace {
    /// Build a space from an explicit distance matrix, checking all metric
    /// and weight invariants.
    pub fn new(
        ids: Vec<String>,
        dist: Vec<f64>,
        weight: Vec<f64>,
        edges: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(HblError::DataError("space has no points".into()));
        }
        if dist.len() != n * n {
            return Err(HblError::DataError(format!(
                "distance matrix has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        if weight.len() != n {
            return Err(HblError::DataError(format!(
                "{} weights for {} points",
                weight.len(),
                n
            )));
        }
        {
            let mut seen = HashMap::new();
            for (i, id) in ids.iter().enumerate() {
                if let Some(j) = seen.insert(id.clone(), i) {
                    return Err(HblError::DataError(format!(
                        "duplicate point id {:?} at positions {} and {}",
                        id, j, i
                    )));
                }
            }
        }
        for (i, w) in weight.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(HblError::DataError(format!(
                    "weight of point {} must be positive and finite, got {}",
                    ids[i], w
                )));
            }
        }
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(HblError::DataError(format!(
                    "dist({id},{id}) = {} != 0",
                    dist[i * n + i],
                    id = ids[i]
                )));
            }
            for j in (i + 1)..n {
                let d = dist[i * n + j];
                // Infinite distances are allowed only on graph spaces, where
                // they mark points in different components.
                let ok = if edges.is_some() {
                    d > 0.0 && !d.is_nan()
                } else {
                    d.is_finite() && d > 0.0
                };
                if !ok {
                    return Err(HblError::DataError(format!(
                        "dist({},{}) must be positive{}, got {}",
                        ids[i],
                        ids[j],
                        if edges.is_some() { "" } else { " and finite" },
                        d
                    )));
                }
                if dist[j * n + i] != d {
                    return Err(HblError::DataError(format!(
                        "asymmetric distance between {} and {}: {} vs {}",
                        ids[i], ids[j], d, dist[j * n + i]
                    )));
                }
            }
        }
        // Triangle inequality, exact up to METRIC_TOL for sampled spaces.
        for i in 0..n {
            for j in 0..n {
                let dij = dist[i * n + j];
                for k in 0..n {
                    let leg = dist[i * n + k] + dist[k * n + j];
                    let violated = if dij.is_infinite() {
                        leg.is_finite()
                    } else {
                        dij - leg > METRIC_TOL
                    };
                    if violated {
                        return Err(HblError::DataError(format!(
                            "triangle inequality fails on ({}, {}, {})",
                            ids[i], ids[j], ids[k]
                        )));
                    }
                }
            }
        }
        if let Some(es) = &edges {
            for &(a, b) in es {
                if a >= n || b >= n || a == b {
                    return Err(HblError::DataError(format!(
                        "edge ({}, {}) out of range for {} points",
                        a, b, n
                    )));
                }
            }
            let sp = shortest_path_matrix(n, es);
            for i in 0..n {
                for j in 0..n {
                    if (sp[i * n + j] - dist[i * n + j]).abs() > 0.0 {
                        return Err(HblError::DataError(format!(
                            "dist({},{}) = {} differs from shortest-path distance {}",
                            ids[i],
                            ids[j],
                            dist[i * n + j],
                            sp[i * n + j]
                        )));
                    }
                }
            }
        }
        let total_mass = kahan_sum(weight.iter().copied());
        let mut diameter = 0.0f64;
        let mut min_positive = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = dist[i * n + j];
                diameter = diameter.max(d);
                min_positive = min_positive.min(d);
            }
        }
        if n == 1 {
            min_positive = 0.0;
        }
        Ok(FiniteSpace {
            ids,
            dist,
            weight,
            edges,
            total_mass,
            diameter,
            min_positive_dist: min_positive,
        })
    }

    /// Build a graph space: unit edge lengths, shortest-path metric.
    pub fn from_edges(
        ids: Vec<String>,
        weight: Vec<f64>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(HblError::DataError("space has no points".into()));
        }
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err(HblError::DataError(format!(
                    "edge ({}, {}) out of range for {} points",
                    a, b, n
                )));
            }
        }
        // Disconnected graphs are allowed: cross-component distances stay
        // infinite, and the graph diagnostics report them as such.
        let dist = shortest_path_matrix(n, &edges);
        Self::new(ids, dist, weight, Some(edges))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.ids.len() + j]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn edges(&self) -> Option<&[(usize, usize)]> {
        self.edges.as_deref()
    }

    pub fn has_adjacency(&self) -> bool {
        self.edges.is_some()
    }

    /// True when the space is a graph space (unit edge lengths).
    pub fn is_unit_distance_graph(&self) -> bool {
        self.edges.is_some()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Smallest positive pairwise distance (0 for a single point).
    pub fn min_positive_dist(&self) -> f64 {
        self.min_positive_dist
    }

    /// mu of a point set.
    pub fn mass_of(&self, set: &[usize]) -> f64 {
        kahan_sum(set.iter().map(|&i| self.weight[i]))
    }

    /// Weighted mean of a point function over a set.
    pub fn weighted_mean_on(&self, set: &[usize], f: &[f64]) -> f64 {
        let mass = self.mass_of(set);
        kahan_sum(set.iter().map(|&i| self.weight[i] * f[i])) / mass
    }

    /// Mean q-oscillation of f over a set:
    /// ((1/mu) sum w |f - mean|^q)^(1/q).
    pub fn mean_oscillation_on(&self, set: &[usize], f: &[f64], q: f64) -> f64 {
        let mass = self.mass_of(set);
        let mean = self.weighted_mean_on(set, f);
        let s = kahan_sum(
            set.iter()
                .map(|&i| self.weight[i] * (f[i] - mean).abs().powf(q)),
        ) / mass;
        s.powf(1.0 / q)
    }

    /// Distance from a point to a set (infinity for the empty set).
    pub fn dist_to_set(&self, x: usize, set: &[usize]) -> f64 {
        set.iter()
            .map(|&y| self.dist(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distinct distances from a center, sorted ascending (starts at 0).
    pub fn sorted_distances_from(&self, center: usize) -> Vec<f64> {
        let n = self.len();
        let mut ds: Vec<f64> = (0..n).map(|j| self.dist(center, j)).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ds.dedup();
        ds
    }

    /// Point indices ordered by distance from `center` (ties by index).
    pub fn order_by_distance(&self, center: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.dist(center, a)
                .partial_cmp(&self.dist(center, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        order
    }
}

/// BFS shortest-path matrix over unit-length edges.
fn shortest_path_matrix(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![f64::INFINITY; n * n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        dist[s * n + s] = 0.0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = dist[s * n + u];
            for &v in &adj[u] {
                if dist[s * n + v].is_infinite() {
                    dist[s * n + v] = du + 1.0;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// An open ball: members are exactly the points at distance < radius from
/// the center.  Membership is strict, so the center is always a member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    /// Sorted point indices.
    pub members: Vec<usize>,
}

impl Ball {
    pub fn mass(&self, space: &FiniteSpace) -> f64 {
        space.mass_of(&self.members)
    }

    pub fn contains(&self, point: usize) -> bool {
        self.members.binary_search(&point).is_ok()
    }

    /// Largest distance from the center to a member.
    pub fn max_member_dist(&self, space: &FiniteSpace) -> f64 {
        self.members
            .iter()
            .map(|&m| space.dist(self.center, m))
            .fold(0.0, f64::max)
    }
}

/// Construct the open ball around `center` with the given radius.
pub fn ball(space: &FiniteSpace, center: usize, radius: f64) -> Result<Ball> {
    if center >= space.len() {
        return Err(HblError::InvalidParameter(format!(
            "center index {} out of range",
            center
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "ball radius must be positive, got {}",
            radius
        )));
    }
    let members: Vec<usize> = (0..space.len())
        .filter(|&j| space.dist(center, j) < radius)
        .collect();
    Ok(Ball {
        center,
        radius,
        members,
    })
}

/// The family of all distinguishable open balls with radius at most `bound`.
///
/// For each center the achievable member sets are the distance-sorted
/// prefixes; the representative of a prefix carries the *canonical* radius
/// min(bound, next distinct distance), which is the largest radius
/// realizing that member set within the bound.  Representatives are
/// deduplicated across centers only when member set and canonical radius
/// both coincide (the first center in id order is kept).
#[derive(Debug, Clone)]
pub struct BallFamily {
    pub bound: f64,
    pub balls: Vec<Ball>,
    /// balls_containing[p] lists indices into `balls` of family members
    /// containing point p.
    balls_containing: Vec<Vec<usize>>,
}

impl BallFamily {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn containing(&self, point: usize) -> &[usize] {
        &self.balls_containing[point]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Ball> {
        self.balls.iter()
    }
}

/// Enumerate the canonical family of open balls with radius <= `bound`.
pub fn enumerate_balls(space: &FiniteSpace, bound: f64) -> Result<BallFamily> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "ball family bound must be positive, got {}",
            bound
        )));
    }
    let n = space.len();
    let mut seen: HashMap<(Vec<usize>, u64), ()> = HashMap::new();
    let mut balls = Vec::new();
    for center in 0..n {
        let order = space.order_by_distance(center);
        let dists: Vec<f64> = order.iter().map(|&p| space.dist(center, p)).collect();
        let mut i = 0;
        while i < n {
            // Extend to the full block of equal distances.
            let d = dists[i];
            let mut j = i + 1;
            while j < n && dists[j] == d {
                j += 1;
            }
            // Prefix of points at distance <= d; realizable with radius <= bound
            // iff d < bound.
            if d >= bound {
                break;
            }
            let next = if j < n { dists[j] } else { f64::INFINITY };
            let radius = bound.min(next);
            let mut members: Vec<usize> = order[..j].to_vec();
            members.sort_unstable();
            let key = (members.clone(), radius.to_bits());
            if seen.insert(key, ()).is_none() {
                balls.push(Ball {
                    center,
                    radius,
                    members,
                });
            }
            i = j;
        }
    }
    let mut balls_containing = vec![Vec::new(); n];
    for (bi, b) in balls.iter().enumerate() {
        for &m in &b.members {
            balls_containing[m].push(bi);
        }
    }
    Ok(BallFamily {
        bound,
        balls,
        balls_containing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generators::{gen_path, gen_tree};

    #[test]
    fn ball_is_open() {
        let tree = gen_tree(3, 1).unwrap();
        // Radius 1 on a unit-distance graph excludes the neighbors.
        let b = ball(&tree, 0, 1.0).unwrap();
        assert_eq!(b.members, vec![0]);
        // Radius 0.5 below the minimal distance: singleton.
        let b = ball(&tree, 0, 0.5).unwrap();
        assert_eq!(b.members, vec![0]);
        // Radius 1.5 on the depth-1 tree: all four points.
        let b = ball(&tree, 0, 1.5).unwrap();
        assert_eq!(b.members, vec![0, 1, 2, 3]);
    }

    #[test]
    fn ball_rejects_nonpositive_radius() {
        let tree = gen_tree(3, 1).unwrap();
        assert!(ball(&tree, 0, 0.0).is_err());
        assert!(ball(&tree, 0, -1.0).is_err());
    }

    #[test]
    fn family_on_two_point_space() {
        let space = FiniteSpace::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 1.0],
            None,
        )
        .unwrap();
        let fam = enumerate_balls(&space, 0.5).unwrap();
        assert_eq!(fam.len(), 2);
        assert!(fam.balls.iter().all(|b| b.members.len() == 1));
    }

    #[test]
    fn family_on_path3_matches_hand_count() {
        // Six distinct (center, members) classes at bound 1.5: three
        // singletons plus {0,1}, {0,1,2}, {1,2}.
        let path = gen_path(3).unwrap();
        let fam = enumerate_balls(&path, 1.5).unwrap();
        assert_eq!(fam.len(), 6);
        let mut sizes: Vec<usize> = fam.balls.iter().map(|b| b.members.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 1, 2, 2, 3]);
    }

    #[test]
    fn family_bound_below_min_distance_gives_singletons() {
        let path = gen_path(5).unwrap();
        let fam = enumerate_balls(&path, 0.25).unwrap();
        assert_eq!(fam.len(), 5);
    }

    #[test]
    fn asymmetric_distance_rejected() {
        let err = FiniteSpace::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0, 2.0, 0.0],
            vec![1.0, 1.0],
            None,
        )
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("asymmetric"), "{msg}");
    }

    #[test]
    fn triangle_violation_rejected() {
        // d(a,c) = 5 > d(a,b) + d(b,c) = 2.
        let err = FiniteSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            None,
        )
        .unwrap_err();
        assert!(format!("{err}").contains("triangle"));
    }
}
