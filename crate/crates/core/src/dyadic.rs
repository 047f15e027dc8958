//! Christ-style dyadic cube forests on a finite space.
//!
//! Construction: nested greedy maximal delta^k-separated nets with
//! nearest-center chain assignment.  The coarsest resolution holds a single
//! cube, the finest resolution holds only singletons, nesting and
//! partitioning hold exactly by construction, and the diameter / inner-ball
//! constants are *measured* on the result rather than fixed a priori.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::space::{Ball, FiniteSpace};

/// Order in which points are scanned while building nets; also resolves
/// nearest-center ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    Id,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    /// Net point the assignment chain lands on; always a member.
    pub center: usize,
    /// Sorted point indices.
    pub members: Vec<usize>,
    /// Index of the containing cube one level coarser (None at the
    /// coarsest level).
    pub parent: Option<usize>,
    /// Indices of contained cubes one level finer.
    pub children: Vec<usize>,
}

impl Cube {
    pub fn contains(&self, point: usize) -> bool {
        self.members.binary_search(&point).is_ok()
    }

    pub fn diam(&self, space: &FiniteSpace) -> f64 {
        let mut d = 0.0f64;
        for (i, &a) in self.members.iter().enumerate() {
            for &b in &self.members[i + 1..] {
                d = d.max(space.dist(a, b));
            }
        }
        d
    }

    pub fn mass(&self, space: &FiniteSpace) -> f64 {
        space.mass_of(&self.members)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicForest {
    pub delta: f64,
    /// Coarsest resolution index; delta^k_min exceeds the diameter.
    pub k_min: i32,
    /// Finest resolution index; all cubes are singletons there.
    pub k_max: i32,
    /// levels[i] holds the cubes of resolution k_min + i.
    pub levels: Vec<Vec<Cube>>,
    /// Per level, assignment[i][p] is the cube index containing point p.
    pub assignment: Vec<Vec<usize>>,
    /// Measured inner-ball constant: B(center, realized_a0 * delta^k) is
    /// contained in every cube of every resolution k.
    pub realized_a0: f64,
    /// Measured diameter constant: diam(Q) <= realized_c1 * delta^k.
    pub realized_c1: f64,
}

impl DyadicForest {
    pub fn scale(&self, k: i32) -> f64 {
        self.delta.powi(k)
    }

    pub fn resolutions(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_max
    }

    pub fn level(&self, k: i32) -> Result<&[Cube]> {
        if k < self.k_min || k > self.k_max {
            return Err(HblError::InvalidParameter(format!(
                "resolution {} outside forest range [{}, {}]",
                k, self.k_min, self.k_max
            )));
        }
        Ok(&self.levels[(k - self.k_min) as usize])
    }

    /// Index of the cube of resolution k containing the point.
    pub fn cube_index_of(&self, k: i32, point: usize) -> Result<usize> {
        self.level(k)?;
        Ok(self.assignment[(k - self.k_min) as usize][point])
    }

    pub fn cube_of(&self, k: i32, point: usize) -> Result<&Cube> {
        let idx = self.cube_index_of(k, point)?;
        Ok(&self.levels[(k - self.k_min) as usize][idx])
    }

    /// The coarsest resolution whose cubes all have diameter at most a
    /// quarter of the space diameter: the designated stand-in for the
    /// paper-style fixed base resolution.
    pub fn base_resolution(&self, space: &FiniteSpace) -> i32 {
        let target = space.diameter() / 4.0;
        for k in self.resolutions() {
            let level = &self.levels[(k - self.k_min) as usize];
            let max_diam = level.iter().map(|c| c.diam(space)).fold(0.0f64, f64::max);
            if max_diam <= target {
                return k;
            }
        }
        self.k_max
    }
}

fn tie_break_order(space: &FiniteSpace, tie_break: TieBreak) -> Vec<usize> {
    let mut order: Vec<usize> = (0..space.len()).collect();
    if let TieBreak::Random(seed) = tie_break {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    order
}

/// Build the dyadic forest for a space at the given scale ratio delta.
pub fn build_forest(space: &FiniteSpace, delta: f64, tie_break: TieBreak) -> Result<DyadicForest> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(HblError::InvalidParameter(format!(
            "delta must lie in (0,1), got {}",
            delta
        )));
    }
    if !space.diameter().is_finite() {
        return Err(HblError::InvalidParameter(
            "dyadic forest requires a connected space (finite diameter)".into(),
        ));
    }
    let n = space.len();
    let order = tie_break_order(space, tie_break);
    let mut rank = vec![0usize; n];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r;
    }

    // Resolution range: delta^k_min strictly exceeds the diameter (one net
    // point covers everything), delta^k_max is at most the minimal positive
    // distance (every point is net-separated).
    let diam = space.diameter();
    let d_min = space.min_positive_dist();
    let (k_min, k_max) = if n == 1 {
        (0, 0)
    } else {
        let mut k_min = 0i32;
        while delta.powi(k_min) <= diam {
            k_min -= 1;
            if k_min < -4000 {
                return Err(HblError::InvalidParameter(
                    "resolution range underflow while seeking the coarsest level".into(),
                ));
            }
        }
        let mut k_max = k_min;
        while delta.powi(k_max) > d_min {
            k_max += 1;
            if k_max > 4000 {
                return Err(HblError::InvalidParameter(
                    "resolution range overflow while seeking the finest level".into(),
                ));
            }
        }
        (k_min, k_max)
    };

    let n_levels = (k_max - k_min + 1) as usize;

    // Nested nets, finest to coarsest: the net at the finest level is every
    // point; each coarser net is the greedy maximal delta^k-separated
    // subset of the finer one, scanned in tie-break order.
    let mut nets: Vec<Vec<usize>> = vec![Vec::new(); n_levels];
    nets[n_levels - 1] = order.clone();
    for li in (0..n_levels.saturating_sub(1)).rev() {
        let k = k_min + li as i32;
        let scale = delta.powi(k);
        let mut net: Vec<usize> = Vec::new();
        for &cand in &nets[li + 1] {
            if net.iter().all(|&z| space.dist(cand, z) >= scale) {
                net.push(cand);
            }
        }
        nets[li] = net;
    }

    // Chain assignment: the representative at the finest level is the point
    // itself; one level coarser, the representative maps to its nearest net
    // point (ties resolved by tie-break rank).  Nested nets guarantee that
    // a net point represents itself, so every cube contains its center.
    let mut rep: Vec<Vec<usize>> = vec![vec![0; n]; n_levels];
    for p in 0..n {
        rep[n_levels - 1][p] = p;
    }
    for li in (0..n_levels.saturating_sub(1)).rev() {
        let net = &nets[li];
        for p in 0..n {
            let from = rep[li + 1][p];
            let mut best = net[0];
            let mut best_key = (space.dist(from, net[0]), rank[net[0]]);
            for &z in &net[1..] {
                let key = (space.dist(from, z), rank[z]);
                if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                    best = z;
                    best_key = key;
                }
            }
            rep[li][p] = best;
        }
    }

    // Materialize cubes level by level; net points with empty chain
    // preimage are dropped.
    let mut levels: Vec<Vec<Cube>> = Vec::with_capacity(n_levels);
    let mut assignment: Vec<Vec<usize>> = Vec::with_capacity(n_levels);
    for li in 0..n_levels {
        let mut cubes: Vec<Cube> = Vec::new();
        for &z in &nets[li] {
            let members: Vec<usize> = (0..n).filter(|&p| rep[li][p] == z).collect();
            if members.is_empty() {
                continue;
            }
            cubes.push(Cube {
                center: z,
                members,
                parent: None,
                children: Vec::new(),
            });
        }
        let mut assign = vec![usize::MAX; n];
        for (ci, cube) in cubes.iter().enumerate() {
            for &m in &cube.members {
                assign[m] = ci;
            }
        }
        levels.push(cubes);
        assignment.push(assign);
    }

    // Parent/child links via the assignment maps.
    for li in 1..n_levels {
        let parent_of: Vec<usize> = levels[li]
            .iter()
            .map(|cube| assignment[li - 1][cube.members[0]])
            .collect();
        for (ci, &parent) in parent_of.iter().enumerate() {
            levels[li][ci].parent = Some(parent);
            levels[li - 1][parent].children.push(ci);
        }
    }

    let mut forest = DyadicForest {
        delta,
        k_min,
        k_max,
        levels,
        assignment,
        realized_a0: 1.0,
        realized_c1: 1.0,
    };
    let (a0, c1) = measure_constants(space, &forest);
    forest.realized_a0 = a0;
    forest.realized_c1 = c1;
    Ok(forest)
}

/// Measure (a0, c1): the largest a0 and smallest c1 for which the
/// inner-ball and diameter bounds hold across all cubes.  The single-point
/// space (no nontrivial cube) reports the convention value 1 for both.
fn measure_constants(space: &FiniteSpace, forest: &DyadicForest) -> (f64, f64) {
    let n = space.len();
    let mut c1 = 0.0f64;
    let mut a0 = f64::INFINITY;
    for k in forest.k_min..=forest.k_max {
        let scale = forest.delta.powi(k);
        for cube in &forest.levels[(k - forest.k_min) as usize] {
            c1 = c1.max(cube.diam(space) / scale);
            if cube.members.len() < n {
                let r_max = (0..n)
                    .filter(|p| !cube.contains(*p))
                    .map(|p| space.dist(cube.center, p))
                    .fold(f64::INFINITY, f64::min);
                a0 = a0.min(r_max / scale);
            }
        }
    }
    if !a0.is_finite() {
        a0 = 1.0;
    }
    if c1 == 0.0 {
        c1 = 1.0;
    }
    (a0, c1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestViolation {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestReport {
    pub violations: Vec<ForestViolation>,
    pub realized_a0: f64,
    pub realized_c1: f64,
    pub levels: usize,
    pub cubes: usize,
}

impl ForestReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-derive every structural property of the forest from its members:
/// partition per level, nesting (subset-or-disjoint), unique coarser
/// ancestor, diameter bound and inner-ball bound against the *stored*
/// realized constants.  Violations are data, not errors.
pub fn verify_forest(space: &FiniteSpace, forest: &DyadicForest) -> ForestReport {
    let mut violations = Vec::new();
    let n = space.len();
    let n_levels = forest.levels.len();

    if n_levels != (forest.k_max - forest.k_min + 1) as usize {
        violations.push(ForestViolation {
            code: "level-count".into(),
            detail: format!(
                "{} levels stored for range [{}, {}]",
                n_levels, forest.k_min, forest.k_max
            ),
        });
    }

    // Partition: each level covers every point exactly once.
    for (li, level) in forest.levels.iter().enumerate() {
        let mut count = vec![0usize; n];
        for cube in level {
            for &m in &cube.members {
                count[m] += 1;
            }
            if !cube.contains(cube.center) {
                violations.push(ForestViolation {
                    code: "center-outside-cube".into(),
                    detail: format!(
                        "level {} cube centered at {} does not contain its center",
                        li, cube.center
                    ),
                });
            }
        }
        for (p, &c) in count.iter().enumerate() {
            if c != 1 {
                violations.push(ForestViolation {
                    code: "partition".into(),
                    detail: format!("level {} covers point {} {} times", li, p, c),
                });
            }
        }
    }

    // Nesting across every pair of levels: finer cubes are contained in or
    // disjoint from coarser ones, with exactly one full container.
    for fine in 1..n_levels {
        for coarse in 0..fine {
            for cube in &forest.levels[fine] {
                let mut containers = std::collections::HashSet::new();
                for &m in &cube.members {
                    containers.insert(forest.assignment[coarse][m]);
                }
                if containers.len() != 1 {
                    violations.push(ForestViolation {
                        code: "nesting".into(),
                        detail: format!(
                            "cube at level {} centered at {} straddles {} cubes of level {}",
                            fine,
                            cube.center,
                            containers.len(),
                            coarse
                        ),
                    });
                }
            }
        }
    }

    // Parent links match the assignment of the members.
    for li in 1..n_levels {
        for (ci, cube) in forest.levels[li].iter().enumerate() {
            let expect = forest.assignment[li - 1][cube.members[0]];
            if cube.parent != Some(expect) {
                violations.push(ForestViolation {
                    code: "parent-link".into(),
                    detail: format!(
                        "cube {} at level {} has parent {:?}, expected {}",
                        ci, li, cube.parent, expect
                    ),
                });
            }
        }
    }

    // Diameter and inner-ball bounds with the stored constants.
    let (a0, c1) = measure_constants(space, forest);
    if a0 != forest.realized_a0 || c1 != forest.realized_c1 {
        violations.push(ForestViolation {
            code: "realized-constants".into(),
            detail: format!(
                "stored (a0, c1) = ({}, {}), measured ({}, {})",
                forest.realized_a0, forest.realized_c1, a0, c1
            ),
        });
    }
    for k in forest.k_min..=forest.k_max {
        let scale = forest.delta.powi(k);
        for cube in &forest.levels[(k - forest.k_min) as usize] {
            if cube.diam(space) > forest.realized_c1 * scale {
                violations.push(ForestViolation {
                    code: "diameter".into(),
                    detail: format!(
                        "cube at resolution {} centered at {} has diameter {} > {}",
                        k,
                        cube.center,
                        cube.diam(space),
                        forest.realized_c1 * scale
                    ),
                });
            }
            let r = forest.realized_a0 * scale;
            for p in 0..n {
                if space.dist(cube.center, p) < r && !cube.contains(p) {
                    violations.push(ForestViolation {
                        code: "inner-ball".into(),
                        detail: format!(
                            "B(center {}, a0 * delta^{}) leaks out of its cube at point {}",
                            cube.center, k, p
                        ),
                    });
                }
            }
        }
    }

    ForestReport {
        violations,
        realized_a0: forest.realized_a0,
        realized_c1: forest.realized_c1,
        levels: n_levels,
        cubes: forest.levels.iter().map(Vec::len).sum(),
    }
}

/// Which branch of the cube/ball measure interaction applied.
///
/// Balls are open, so the equality branch requires r_B strictly above
/// c1 * delta^k: at exact equality a member sitting at distance exactly
/// diam(Q) from the ball center would be excluded.  The lower-bound branch
/// covers the boundary case; its proof goes through one level finer with
/// the same doubling ratio c1/(a0 delta).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CubeBallCase {
    /// r_B > c1 * delta^k: the cube is swallowed by the ball.
    Equality,
    /// r_B <= c1 * delta^k: the ball keeps at least 1/D of its mass in Q.
    LowerBound,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeBallReport {
    pub case: CubeBallCase,
    pub mu_ball_cap_cube: f64,
    pub mu_cube: f64,
    pub mu_ball: f64,
    /// Doubling constant used in the lower-bound branch.
    pub bound_constant: f64,
    pub holds: bool,
}

/// Measure interaction between a ball and the resolution-k cube holding the
/// ball's center: either the cube is contained in the ball (equality of
/// masses) or the ball keeps at least a 1/D share of its mass inside.
///
/// `d_constant` is the doubling constant D_{c1/(a0 delta), .} computed on
/// the space; callers obtain it once and reuse it across queries.
pub fn cube_ball_interaction(
    space: &FiniteSpace,
    forest: &DyadicForest,
    ball: &Ball,
    k: i32,
    cube_index: usize,
    d_constant: f64,
) -> Result<CubeBallReport> {
    let level = forest.level(k)?;
    let cube = level.get(cube_index).ok_or_else(|| {
        HblError::InvalidParameter(format!(
            "cube index {} out of range at resolution {}",
            cube_index, k
        ))
    })?;
    if !cube.contains(ball.center) {
        return Err(HblError::InvalidParameter(format!(
            "ball center {} lies outside the queried cube",
            ball.center
        )));
    }
    let scale = forest.delta.powi(k);
    let threshold = forest.realized_c1 * scale;
    let mu_cube = cube.mass(space);
    let mu_ball = ball.mass(space);
    let inter: Vec<usize> = cube
        .members
        .iter()
        .copied()
        .filter(|&m| ball.contains(m))
        .collect();
    let mu_inter = space.mass_of(&inter);
    let (case, holds) = if ball.radius > threshold {
        (CubeBallCase::Equality, mu_inter == mu_cube)
    } else {
        (
            CubeBallCase::LowerBound,
            mu_inter * d_constant >= mu_ball * (1.0 - 1e-12),
        )
    };
    Ok(CubeBallReport {
        case,
        mu_ball_cap_cube: mu_inter,
        mu_cube,
        mu_ball,
        bound_constant: d_constant,
        holds,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringSelection {
    /// Selected cubes as (resolution, cube index) pairs.
    pub selected: Vec<(i32, usize)>,
    pub achieved_mass: f64,
    pub target_mass: f64,
    /// dist(Q, A^c) for each selected cube, parallel to `selected`.
    pub boundary_distances: Vec<f64>,
    /// False when even the full qualifying collection misses the target.
    pub feasible: bool,
}

/// Covering selection: among the maximal dyadic cubes of resolution at
/// least `nu_min` contained in A, keep those meeting the boundary band
/// A_kappa, then greedily accumulate mass (largest first) until reaching
/// the fraction (1 - e^(-i_hat * kappa)) / 2 of mu(A).
pub fn covering_select(
    space: &FiniteSpace,
    forest: &DyadicForest,
    a_set: &[usize],
    kappa: f64,
    nu_min: i32,
    i_hat: f64,
) -> Result<CoveringSelection> {
    let n = space.len();
    if a_set.is_empty() || a_set.len() >= n {
        return Err(HblError::InvalidParameter(
            "covering selection needs a nonempty proper subset".into(),
        ));
    }
    if !(kappa > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "kappa must be positive, got {}",
            kappa
        )));
    }
    let nu_min = nu_min.max(forest.k_min);
    if nu_min > forest.k_max {
        return Err(HblError::InvalidParameter(format!(
            "resolution floor {} exceeds the finest level {}",
            nu_min, forest.k_max
        )));
    }
    let mut in_a = vec![false; n];
    for &p in a_set {
        in_a[p] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&p| !in_a[p]).collect();

    // Maximal cubes inside A: scan levels coarse to fine, skipping cubes
    // whose points are already covered by a selected coarser cube.
    let mut covered = vec![false; n];
    let mut maximal: Vec<(i32, usize)> = Vec::new();
    for k in nu_min..=forest.k_max {
        for (ci, cube) in forest.level(k)?.iter().enumerate() {
            if covered[cube.members[0]] {
                continue;
            }
            if cube.members.iter().all(|&m| in_a[m]) {
                maximal.push((k, ci));
                for &m in &cube.members {
                    covered[m] = true;
                }
            }
        }
    }

    // Keep cubes meeting the band A_kappa.
    let mut in_band = vec![false; n];
    for &x in a_set {
        if space.dist_to_set(x, &complement) <= kappa {
            in_band[x] = true;
        }
    }
    let mut qualifying: Vec<(i32, usize, f64)> = maximal
        .iter()
        .filter(|&&(k, ci)| {
            forest.levels[(k - forest.k_min) as usize][ci]
                .members
                .iter()
                .any(|&m| in_band[m])
        })
        .map(|&(k, ci)| {
            let mass = forest.levels[(k - forest.k_min) as usize][ci].mass(space);
            (k, ci, mass)
        })
        .collect();
    qualifying.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));

    let mu_a = space.mass_of(a_set);
    let target_mass = (1.0 - (-i_hat * kappa).exp()) / 2.0 * mu_a;
    let mut achieved = 0.0;
    let mut selected = Vec::new();
    let mut boundary_distances = Vec::new();
    for &(k, ci, mass) in &qualifying {
        if achieved >= target_mass && !selected.is_empty() {
            break;
        }
        if target_mass == 0.0 {
            break;
        }
        achieved += mass;
        let cube = &forest.levels[(k - forest.k_min) as usize][ci];
        let d = cube
            .members
            .iter()
            .map(|&m| space.dist_to_set(m, &complement))
            .fold(f64::INFINITY, f64::min);
        selected.push((k, ci));
        boundary_distances.push(d);
    }
    let feasible = achieved >= target_mass;
    Ok(CoveringSelection {
        selected,
        achieved_mass: achieved,
        target_mass,
        boundary_distances,
        feasible,
    })
}

/// File representation: levels of cubes carrying point ids.
pub fn forest_to_json(space: &FiniteSpace, forest: &DyadicForest) -> serde_json::Value {
    let levels: Vec<serde_json::Value> = forest
        .levels
        .iter()
        .map(|level| {
            level
                .iter()
                .map(|cube| {
                    serde_json::json!({
                        "center": space.id(cube.center),
                        "memberIds": cube
                            .members
                            .iter()
                            .map(|&m| space.id(m))
                            .collect::<Vec<_>>(),
                        "parent": cube.parent,
                    })
                })
                .collect()
        })
        .collect();
    serde_json::json!({
        "delta": forest.delta,
        "kMin": forest.k_min,
        "kMax": forest.k_max,
        "realizedA0": forest.realized_a0,
        "realizedC1": forest.realized_c1,
        "levels": levels,
    })
}

/// Parse a forest file against a space, rebuilding assignment maps and
/// child links.
pub fn forest_from_json(
    space: &FiniteSpace,
    value: &serde_json::Value,
) -> Result<DyadicForest> {
    let get = |key: &str| -> Result<&serde_json::Value> {
        value
            .get(key)
            .ok_or_else(|| HblError::ParseError(format!("forest: missing field {:?}", key)))
    };
    let delta = get("delta")?
        .as_f64()
        .ok_or_else(|| HblError::ParseError("forest: /delta must be a number".into()))?;
    let k_min = get("kMin")?
        .as_i64()
        .ok_or_else(|| HblError::ParseError("forest: /kMin must be an integer".into()))?
        as i32;
    let k_max = get("kMax")?
        .as_i64()
        .ok_or_else(|| HblError::ParseError("forest: /kMax must be an integer".into()))?
        as i32;
    let realized_a0 = get("realizedA0")?
        .as_f64()
        .ok_or_else(|| HblError::ParseError("forest: /realizedA0 must be a number".into()))?;
    let realized_c1 = get("realizedC1")?
        .as_f64()
        .ok_or_else(|| HblError::ParseError("forest: /realizedC1 must be a number".into()))?;
    let levels_v = get("levels")?
        .as_array()
        .ok_or_else(|| HblError::ParseError("forest: /levels must be an array".into()))?;
    let resolve = |id: &serde_json::Value, ptr: String| -> Result<usize> {
        let s = id
            .as_str()
            .map(|s| s.to_string())
            .or_else(|| id.as_u64().map(|n| n.to_string()))
            .ok_or_else(|| HblError::ParseError(format!("forest: {ptr} must be a point id")))?;
        space
            .index_of(&s)
            .ok_or_else(|| HblError::DataError(format!("forest references unknown point {s:?}")))
    };
    let mut levels: Vec<Vec<Cube>> = Vec::with_capacity(levels_v.len());
    for (li, level_v) in levels_v.iter().enumerate() {
        let cubes_v = level_v.as_array().ok_or_else(|| {
            HblError::ParseError(format!("forest: /levels/{li} must be an array"))
        })?;
        let mut cubes = Vec::with_capacity(cubes_v.len());
        for (ci, cube_v) in cubes_v.iter().enumerate() {
            let center = resolve(
                cube_v.get("center").unwrap_or(&serde_json::Value::Null),
                format!("/levels/{li}/{ci}/center"),
            )?;
            let members_v = cube_v
                .get("memberIds")
                .and_then(|m| m.as_array())
                .ok_or_else(|| {
                    HblError::ParseError(format!(
                        "forest: /levels/{li}/{ci}/memberIds must be an array"
                    ))
                })?;
            let mut members = Vec::with_capacity(members_v.len());
            for (mi, m) in members_v.iter().enumerate() {
                members.push(resolve(m, format!("/levels/{li}/{ci}/memberIds/{mi}"))?);
            }
            members.sort_unstable();
            let parent = match cube_v.get("parent") {
                Some(serde_json::Value::Null) | None => None,
                Some(v) => Some(v.as_u64().ok_or_else(|| {
                    HblError::ParseError(format!(
                        "forest: /levels/{li}/{ci}/parent must be an index"
                    ))
                })? as usize),
            };
            cubes.push(Cube {
                center,
                members,
                parent,
                children: Vec::new(),
            });
        }
        levels.push(cubes);
    }
    // Rebuild assignments and children, validating the partition.
    let n = space.len();
    let mut assignment = Vec::with_capacity(levels.len());
    for (li, level) in levels.iter().enumerate() {
        let mut assign = vec![usize::MAX; n];
        for (ci, cube) in level.iter().enumerate() {
            for &m in &cube.members {
                if assign[m] != usize::MAX {
                    return Err(HblError::DataError(format!(
                        "forest level {li} covers point {} twice",
                        space.id(m)
                    )));
                }
                assign[m] = ci;
            }
        }
        if let Some(p) = assign.iter().position(|&c| c == usize::MAX) {
            return Err(HblError::DataError(format!(
                "forest level {li} misses point {}",
                space.id(p)
            )));
        }
        assignment.push(assign);
    }
    for li in 1..levels.len() {
        let parents: Vec<Option<usize>> = levels[li].iter().map(|c| c.parent).collect();
        for (ci, parent) in parents.iter().enumerate() {
            let p = parent.ok_or_else(|| {
                HblError::DataError(format!("forest cube {ci} at level {li} lacks a parent"))
            })?;
            if p >= levels[li - 1].len() {
                return Err(HblError::DataError(format!(
                    "forest cube {ci} at level {li} has out-of-range parent {p}"
                )));
            }
            levels[li - 1][p].children.push(ci);
        }
    }
    Ok(DyadicForest {
        delta,
        k_min,
        k_max,
        levels,
        assignment,
        realized_a0,
        realized_c1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generators::{gen_path, gen_tree};
    use crate::space::geometry::doubling_constant;
    use crate::space::{ball, enumerate_balls};

    #[test]
    fn forest_json_roundtrip() {
        let tree = gen_tree(3, 3).unwrap();
        let f = build_forest(&tree, 0.5, TieBreak::Id).unwrap();
        let v = forest_to_json(&tree, &f);
        let parsed = forest_from_json(&tree, &v).unwrap();
        assert_eq!(f, parsed);
        assert!(verify_forest(&tree, &parsed).passed());
    }

    #[test]
    fn path4_forest_by_hand() {
        // delta = 1/2: levels -2 (whole path), -1 ({0,1} and {2,3}),
        // 0 (singletons), with id tie-break.
        let p = gen_path(4).unwrap();
        let f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        assert_eq!((f.k_min, f.k_max), (-2, 0));
        assert_eq!(f.levels[0].len(), 1);
        assert_eq!(f.levels[0][0].members, vec![0, 1, 2, 3]);
        assert_eq!(f.levels[1].len(), 2);
        assert_eq!(f.levels[1][0].members, vec![0, 1]);
        assert_eq!(f.levels[1][1].members, vec![2, 3]);
        assert_eq!(f.levels[2].len(), 4);
        let rep = verify_forest(&p, &f);
        assert!(rep.passed(), "{:?}", rep.violations);
    }

    #[test]
    fn single_point_forest() {
        let s = gen_path(1).unwrap();
        let f = build_forest(&s, 0.5, TieBreak::Id).unwrap();
        assert_eq!((f.k_min, f.k_max), (0, 0));
        assert_eq!(f.levels[0].len(), 1);
        assert_eq!(f.realized_c1, 1.0);
        assert!(verify_forest(&s, &f).passed());
    }

    #[test]
    fn cube_counts_coarsen() {
        let tree = gen_tree(3, 4).unwrap();
        let f = build_forest(&tree, 0.5, TieBreak::Id).unwrap();
        let counts: Vec<usize> = f.levels.iter().map(Vec::len).collect();
        for w in counts.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(counts[0], 1);
        assert_eq!(*counts.last().unwrap(), tree.len());
    }

    #[test]
    fn forests_verify_on_corpus() {
        for space in [gen_tree(3, 4).unwrap(), gen_path(16).unwrap()] {
            for delta in [0.4, 0.5, 0.6] {
                let f = build_forest(&space, delta, TieBreak::Id).unwrap();
                let rep = verify_forest(&space, &f);
                assert!(rep.passed(), "delta={delta}: {:?}", rep.violations);
            }
        }
    }

    #[test]
    fn random_tiebreak_is_deterministic() {
        let tree = gen_tree(3, 3).unwrap();
        let f1 = build_forest(&tree, 0.5, TieBreak::Random(9)).unwrap();
        let f2 = build_forest(&tree, 0.5, TieBreak::Random(9)).unwrap();
        assert_eq!(f1, f2);
        assert!(verify_forest(&tree, &f1).passed());
    }

    #[test]
    fn corrupted_forest_reports_partition_violation() {
        let p = gen_path(4).unwrap();
        let mut f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        // Move point 1 into the second level-(-1) cube without updating
        // the first.
        f.levels[1][1].members.insert(0, 1);
        let rep = verify_forest(&p, &f);
        assert!(!rep.passed());
        assert!(rep.violations.iter().any(|v| v.code == "partition"));
    }

    #[test]
    fn invalid_delta_rejected() {
        let p = gen_path(4).unwrap();
        assert!(build_forest(&p, 0.0, TieBreak::Id).is_err());
        assert!(build_forest(&p, 1.0, TieBreak::Id).is_err());
    }

    #[test]
    fn cube_ball_equality_case() {
        // A ball swallowing its cube: mu(B /\ Q) = mu(Q).
        let p = gen_path(8).unwrap();
        let f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        let tau = (f.realized_c1 / (f.realized_a0 * f.delta)).max(1.0);
        let d = doubling_constant(&p, tau, f.delta.powi(f.k_min)).unwrap();
        // Finest level: singleton cube, any ball containing it.
        let b = ball(&p, 3, 1.0).unwrap();
        let ci = f.cube_index_of(f.k_max, 3).unwrap();
        let rep = cube_ball_interaction(&p, &f, &b, f.k_max, ci, d).unwrap();
        assert_eq!(rep.case, CubeBallCase::Equality);
        assert!(rep.holds);
        assert_eq!(rep.mu_ball_cap_cube, rep.mu_cube);
    }

    #[test]
    fn cube_ball_oracle_small_spaces() {
        // Exhaustive (family ball, cube) scan on spaces of <= 30 points:
        // the declared case must hold for every pair, with the doubling
        // constant brute-forced on the same space.
        for space in [gen_path(8).unwrap(), gen_tree(3, 2).unwrap()] {
            let f = build_forest(&space, 0.5, TieBreak::Id).unwrap();
            let tau = (f.realized_c1 / (f.realized_a0 * f.delta)).max(1.0);
            let d = doubling_constant(&space, tau, f.delta.powi(f.k_min)).unwrap();
            let family = enumerate_balls(&space, space.diameter() + 1.0).unwrap();
            for b in &family.balls {
                for k in f.k_min..=f.k_max {
                    let ci = f.cube_index_of(k, b.center).unwrap();
                    let rep = cube_ball_interaction(&space, &f, b, k, ci, d).unwrap();
                    assert!(
                        rep.holds,
                        "space {} ball at {} radius {} level {k}: {:?}",
                        space.len(),
                        b.center,
                        b.radius,
                        rep
                    );
                }
            }
        }
    }

    #[test]
    fn cube_ball_rejects_outside_center() {
        let p = gen_path(8).unwrap();
        let f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        let b = ball(&p, 0, 1.0).unwrap();
        let ci = f.cube_index_of(f.k_max, 7).unwrap();
        assert!(cube_ball_interaction(&p, &f, &b, f.k_max, ci, 2.0).is_err());
    }

    #[test]
    fn covering_single_cube() {
        // A equal to one cube, kappa beyond its diameter: the selection is
        // that cube with full mass fraction.
        let p = gen_path(4).unwrap();
        let f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        let a = f.levels[1][0].members.clone(); // {0, 1}
        let sel = covering_select(&p, &f, &a, 2.0, f.k_min, 0.5).unwrap();
        assert!(sel.feasible);
        assert_eq!(sel.selected.len(), 1);
        assert_eq!(sel.achieved_mass, 2.0);
        assert!(sel.boundary_distances[0] <= 2.0);
    }

    #[test]
    fn covering_zero_ihat_gives_empty_selection() {
        let p = gen_path(4).unwrap();
        let f = build_forest(&p, 0.5, TieBreak::Id).unwrap();
        let sel = covering_select(&p, &f, &[0, 1], 1.0, f.k_min, 0.0).unwrap();
        assert!(sel.feasible);
        assert!(sel.selected.is_empty());
        assert_eq!(sel.target_mass, 0.0);
    }

    #[test]
    fn covering_is_disjoint_and_boundary_proximal() {
        let tree = gen_tree(3, 5).unwrap();
        let f = build_forest(&tree, 0.5, TieBreak::Id).unwrap();
        let a = ball(&tree, 0, 3.5).unwrap().members;
        let sel = covering_select(&tree, &f, &a, 1.0, f.k_min, 0.4).unwrap();
        assert!(sel.feasible, "{:?}", sel);
        // Pairwise disjoint members.
        let mut seen = vec![false; tree.len()];
        for &(k, ci) in &sel.selected {
            for &m in &f.levels[(k - f.k_min) as usize][ci].members {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
        for &d in &sel.boundary_distances {
            assert!(d <= 1.0);
        }
    }
}
