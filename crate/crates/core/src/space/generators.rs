//! Canonical test spaces.
//!
//! Trees are the nondoubling exemplars (exponential volume growth), paths
//! and grids the doubling baselines, and the jittered hyperbolic-disk
//! sample provides a nondoubling space with non-integer distances.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HblError, Result};
use crate::space::FiniteSpace;

const MAX_POINTS: usize = 100_000;

/// Rooted homogeneous tree of degree `q` truncated at `depth`.
///
/// Every vertex has degree `q` except the leaves: the root has `q`
/// children and every other internal vertex has `q - 1`.  Counting
/// measure, shortest-path metric.
pub fn gen_tree(q: usize, depth: usize) -> Result<FiniteSpace> {
    if q < 2 {
        return Err(HblError::InvalidParameter(format!(
            "tree degree must be at least 2, got {}",
            q
        )));
    }
    let mut edges = Vec::new();
    let mut frontier = vec![0usize];
    let mut next_id = 1usize;
    for level in 0..depth {
        let mut next_frontier = Vec::new();
        let children = if level == 0 { q } else { q - 1 };
        for &parent in &frontier {
            for _ in 0..children {
                if next_id >= MAX_POINTS {
                    return Err(HblError::InvalidParameter(format!(
                        "tree(q={}, depth={}) exceeds the {}-point budget",
                        q, depth, MAX_POINTS
                    )));
                }
                edges.push((parent, next_id));
                next_frontier.push(next_id);
                next_id += 1;
            }
        }
        frontier = next_frontier;
    }
    let ids = (0..next_id).map(|i| i.to_string()).collect();
    let weights = vec![1.0; next_id];
    FiniteSpace::from_edges(ids, weights, edges)
}

/// Path graph on n vertices, unit weights.
pub fn gen_path(n: usize) -> Result<FiniteSpace> {
    if n == 0 {
        return Err(HblError::InvalidParameter("path needs n >= 1".into()));
    }
    if n > MAX_POINTS {
        return Err(HblError::InvalidParameter(format!(
            "path({}) exceeds the {}-point budget",
            n, MAX_POINTS
        )));
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    FiniteSpace::from_edges(ids, vec![1.0; n], edges)
}

/// d-dimensional grid graph with n vertices per side, d in {1, 2}.
pub fn gen_grid(d: usize, n: usize) -> Result<FiniteSpace> {
    if n == 0 {
        return Err(HblError::InvalidParameter("grid needs n >= 1".into()));
    }
    match d {
        1 => gen_path(n),
        2 => {
            let total = n
                .checked_mul(n)
                .filter(|&t| t <= MAX_POINTS)
                .ok_or_else(|| {
                    HblError::InvalidParameter(format!(
                        "grid(2, {}) exceeds the {}-point budget",
                        n, MAX_POINTS
                    ))
                })?;
            let ids = (0..total).map(|i| i.to_string()).collect();
            let mut edges = Vec::new();
            for r in 0..n {
                for c in 0..n {
                    let v = r * n + c;
                    if c + 1 < n {
                        edges.push((v, v + 1));
                    }
                    if r + 1 < n {
                        edges.push((v, v + n));
                    }
                }
            }
            FiniteSpace::from_edges(ids, vec![1.0; total], edges)
        }
        _ => Err(HblError::InvalidParameter(format!(
            "grid dimension must be 1 or 2, got {}",
            d
        ))),
    }
}

/// Jittered-grid sample of the Poincare disk.
///
/// `n_cells` is the cell count per axis.  The square circumscribing the
/// Euclidean disk of radius tanh(max_radius / 2) is divided into
/// n_cells^2 cells; each cell intersecting the disk contributes one point
/// sampled uniformly from the intersection.  The weight of a point z is the
/// hyperbolic area density 4 / (1 - |z|^2)^2 times the Euclidean cell area,
/// and distances are the Poincare disk distances
/// arccosh(1 + 2 |z - w|^2 / ((1 - |z|^2)(1 - |w|^2))).
pub fn gen_hyperbolic_disk(n_cells: usize, max_radius: f64, seed: u64) -> Result<FiniteSpace> {
    if n_cells == 0 {
        return Err(HblError::InvalidParameter(
            "hyperbolic sample needs n_cells >= 1".into(),
        ));
    }
    if !(max_radius.is_finite() && max_radius > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "max_radius must be positive, got {}",
            max_radius
        )));
    }
    if n_cells * n_cells > MAX_POINTS {
        return Err(HblError::InvalidParameter(format!(
            "hyperbolic sample with {}^2 cells exceeds the {}-point budget",
            n_cells, MAX_POINTS
        )));
    }
    let r_euclid = (max_radius / 2.0).tanh();
    let cell = 2.0 * r_euclid / n_cells as f64;
    let cell_area = cell * cell;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut weights = Vec::new();
    for gy in 0..n_cells {
        for gx in 0..n_cells {
            let x0 = -r_euclid + gx as f64 * cell;
            let y0 = -r_euclid + gy as f64 * cell;
            // Rejection sampling within cell /\ open disk; skip cells that
            // miss the disk.  A sample on or outside the disk is rejected
            // internally and never emitted.
            let mut accepted = None;
            for _ in 0..256 {
                let x = x0 + rng.gen::<f64>() * cell;
                let y = y0 + rng.gen::<f64>() * cell;
                if x * x + y * y < r_euclid * r_euclid {
                    accepted = Some((x, y));
                    break;
                }
            }
            if let Some((x, y)) = accepted {
                if points
                    .iter()
                    .any(|&(px, py)| px == x && py == y)
                {
                    // Duplicate coordinates would give distance 0; reject.
                    continue;
                }
                let rho2 = x * x + y * y;
                weights.push(4.0 / ((1.0 - rho2) * (1.0 - rho2)) * cell_area);
                points.push((x, y));
            }
        }
    }
    if points.is_empty() {
        return Err(HblError::DegenerateSpace(
            "hyperbolic sample produced no points".into(),
        ));
    }
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = poincare_dist(points[i], points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    FiniteSpace::new(ids, dist, weights, None)
}

/// Poincare disk distance between two points of the open unit disk.
pub fn poincare_dist((x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> f64 {
    let dx = x1 - x2;
    let dy = y1 - y2;
    let num = 2.0 * (dx * dx + dy * dy);
    let den = (1.0 - (x1 * x1 + y1 * y1)) * (1.0 - (x2 * x2 + y2 * y2));
    (1.0 + num / den).acosh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_depth0_is_single_point() {
        let t = gen_tree(3, 0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.weight(0), 1.0);
    }

    #[test]
    fn tree_depth1_has_center_and_leaves() {
        let t = gen_tree(3, 1).unwrap();
        assert_eq!(t.len(), 4);
        for leaf in 1..4 {
            assert_eq!(t.dist(0, leaf), 1.0);
        }
        assert_eq!(t.dist(1, 2), 2.0);
    }

    #[test]
    fn tree_degree_below_2_rejected() {
        assert!(matches!(
            gen_tree(1, 2),
            Err(HblError::InvalidParameter(_))
        ));
    }

    #[test]
    fn tree_sizes() {
        // 3-regular tree: 3 * 2^d - 2 points at depth d.
        assert_eq!(gen_tree(3, 5).unwrap().len(), 94);
        assert_eq!(gen_tree(4, 3).unwrap().len(), 53);
    }

    #[test]
    fn path_metric() {
        let p = gen_path(3).unwrap();
        assert_eq!(p.dist(0, 2), 2.0);
        assert_eq!(gen_path(1).unwrap().len(), 1);
    }

    #[test]
    fn grid_metric_is_manhattan() {
        let g = gen_grid(2, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.dist(0, 8), 4.0);
        assert_eq!(g.diameter(), 4.0);
    }

    #[test]
    fn hyperbolic_single_cell() {
        let h = gen_hyperbolic_disk(1, 2.0, 7).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h.weight(0) > 0.0);
    }

    #[test]
    fn hyperbolic_weights_grow_toward_boundary() {
        // Density ratio between |z| = 0.9 and the origin is (1/(1-0.81))^2.
        let near = 4.0 / (1.0 - 0.81f64).powi(2);
        let at0 = 4.0;
        assert!((near / at0 - 27.700831024930747).abs() < 1e-9);
    }

    #[test]
    fn hyperbolic_sample_is_metric() {
        // Construction validates the triangle inequality within 1e-12.
        let h = gen_hyperbolic_disk(12, 3.0, 42).unwrap();
        assert!(h.len() > 50);
        assert!(h.diameter() > 1.0);
    }

    #[test]
    fn hyperbolic_determinism() {
        let a = gen_hyperbolic_disk(8, 2.5, 11).unwrap();
        let b = gen_hyperbolic_disk(8, 2.5, 11).unwrap();
        assert_eq!(a, b);
    }
}
