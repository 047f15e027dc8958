//! Geometric diagnostics: local doubling constants, isoperimetric
//! profiles, the approximate midpoint property and volume growth.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::numeric::kahan_sum;
use crate::space::{enumerate_balls, FiniteSpace};

/// Per-center distance profile: points sorted by distance plus prefix mass
/// sums, so that mu({y : dist(c, y) < r}) is a binary search away.
struct CenterProfile {
    /// Distances of all points from the center, sorted ascending.
    dists: Vec<f64>,
    /// prefix_mass[i] = mass of the i nearest points.
    prefix_mass: Vec<f64>,
}

fn center_profiles(space: &FiniteSpace) -> Vec<CenterProfile> {
    (0..space.len())
        .map(|c| {
            let order = space.order_by_distance(c);
            let dists: Vec<f64> = order.iter().map(|&p| space.dist(c, p)).collect();
            let mut prefix_mass = Vec::with_capacity(order.len() + 1);
            let mut acc = 0.0;
            prefix_mass.push(0.0);
            for &p in &order {
                acc += space.weight(p);
                prefix_mass.push(acc);
            }
            CenterProfile { dists, prefix_mass }
        })
        .collect()
}

impl CenterProfile {
    /// Mass of the open ball {y : dist < r}.
    fn open_ball_mass(&self, r: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d < r);
        self.prefix_mass[k]
    }
}

/// One entry of the doubling map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoublingEntry {
    pub tau: f64,
    pub b: f64,
    pub value: f64,
}

/// D_{tau,b}: the smallest constant C such that mu(B') <= C mu(B) over
/// *all* open-ball pairs B subset B' with r_B <= b and r_{B'} <= tau r_B.
///
/// Pairs are enumerated through member sets together with existence of
/// admissible radii: some r_B in (maxdist(B), min(b, nextdist(B))] and
/// some r_{B'} in (maxdist(B'), tau r_B].  The containing ball ranges over
/// balls at all centers, not only concentric dilates.  This enumeration is
/// the one the theorem-derived bounds (cube/ball interaction, atom
/// splitting, good-lambda) rely on: it dominates every pair the proofs
/// construct, and it is monotone in both tau and b.
pub fn doubling_constant(space: &FiniteSpace, tau: f64, b: f64) -> Result<f64> {
    if tau < 1.0 {
        return Err(HblError::InvalidParameter(format!(
            "doubling ratio must be >= 1, got {}",
            tau
        )));
    }
    let family = enumerate_balls(space, b)?;
    let profiles = center_profiles(space);
    let n = space.len();
    let best = family
        .balls
        .par_iter()
        .map(|small| {
            let mu_small = small.mass(space);
            // Largest admissible radius for the small ball is its canonical
            // radius min(b, next distance).
            let r_small_max = small.radius;
            let mut best = 1.0f64;
            for c in 0..n {
                let reach = small
                    .members
                    .iter()
                    .map(|&m| space.dist(c, m))
                    .fold(0.0, f64::max);
                // B' realizable with radius r' in (maxdist(B'), tau * r_small_max]
                // and B' must contain the small ball: r' > reach.  The largest
                // member set takes r' = tau * r_small_max.
                let r_big = tau * r_small_max;
                if reach >= r_big {
                    continue;
                }
                let mu_big = profiles[c].open_ball_mass(r_big);
                best = best.max(mu_big / mu_small);
            }
            best
        })
        .reduce(|| 1.0, f64::max);
    Ok(best)
}

/// Compute the doubling map over grids of tau and b.
pub fn doubling_constants(
    space: &FiniteSpace,
    taus: &[f64],
    bs: &[f64],
) -> Result<Vec<DoublingEntry>> {
    let mut entries = Vec::new();
    for &tau in taus {
        if tau < 2.0 {
            return Err(HblError::InvalidParameter(format!(
                "doubling map requires tau >= 2, got {}",
                tau
            )));
        }
        for &b in bs {
            if !(b > 0.0) {
                return Err(HblError::InvalidParameter(format!(
                    "doubling map requires b > 0, got {}",
                    b
                )));
            }
            entries.push(DoublingEntry {
                tau,
                b,
                value: doubling_constant(space, tau, b)?,
            });
        }
    }
    Ok(entries)
}

/// How subsets are drawn in sampled isoperimetric mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsetSampler {
    /// All canonical balls, random connected subgraphs (random clusters on
    /// non-graph spaces) and complements of all of these.
    Default,
    /// Only canonical balls and their complements.
    BallsOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoperimetricProfile {
    /// (kappa, C_hat_kappa) pairs in the kappa grid order.
    pub kappa_values: Vec<(f64, f64)>,
    /// max over the kappa grid of C_hat_kappa.
    pub i_hat: f64,
    /// True when every eligible subset was enumerated; the value is then
    /// certified rather than an estimate.
    pub exhaustive: bool,
}

/// Threshold below which subset enumeration is exhaustive.
pub const EXHAUSTIVE_LIMIT: usize = 18;

/// Eligibility rule for subsets entering the isoperimetric minimum:
/// nonempty, proper, and of diameter at most half the space diameter.
///
/// The diameter cap is the finite-truncation surrogate of quantifying over
/// *bounded* open sets in an unbounded space; without it, every growing
/// space (including trees) has subsets hugging the truncation boundary
/// whose band ratio tends to zero, and the doubling/nondoubling contrast
/// disappears.
pub fn subset_eligible(space: &FiniteSpace, subset: &[usize]) -> bool {
    if subset.is_empty() || subset.len() == space.len() {
        return false;
    }
    let cap = space.diameter() / 2.0;
    for (i, &a) in subset.iter().enumerate() {
        for &b in &subset[i + 1..] {
            if space.dist(a, b) > cap {
                return false;
            }
        }
    }
    true
}

/// Isoperimetric profile: for each kappa, the worst ratio
/// mu(A_kappa) / (kappa mu(A)) over eligible subsets A, where
/// A_kappa = {x in A : dist(x, A^c) <= kappa}.
pub fn isoperimetric_profile(
    space: &FiniteSpace,
    kappas: &[f64],
    sampler: SubsetSampler,
    n_samples: usize,
    seed: u64,
) -> Result<IsoperimetricProfile> {
    if space.len() < 2 {
        return Err(HblError::DegenerateSpace(
            "isoperimetric profile needs a proper subset; space has one point".into(),
        ));
    }
    if kappas.is_empty() || kappas.iter().any(|&k| !(k > 0.0)) {
        return Err(HblError::InvalidParameter(
            "kappa grid must be nonempty and positive".into(),
        ));
    }
    if n_samples == 0 {
        return Err(HblError::InvalidParameter("n_samples must be >= 1".into()));
    }
    let n = space.len();
    let exhaustive = n <= EXHAUSTIVE_LIMIT;
    let mut best = vec![f64::INFINITY; kappas.len()];

    let mut scan = |subset: &[usize]| {
        if !subset_eligible(space, subset) {
            return;
        }
        let mut in_a = vec![false; n];
        for &p in subset {
            in_a[p] = true;
        }
        let complement: Vec<usize> = (0..n).filter(|&p| !in_a[p]).collect();
        let mu_a = space.mass_of(subset);
        for (ki, &kappa) in kappas.iter().enumerate() {
            let band_mass = kahan_sum(subset.iter().filter_map(|&x| {
                let d = space.dist_to_set(x, &complement);
                (d <= kappa).then(|| space.weight(x))
            }));
            let ratio = band_mass / (kappa * mu_a);
            if ratio < best[ki] {
                best[ki] = ratio;
            }
        }
    };

    if exhaustive {
        let masks: u64 = 1u64 << n;
        for mask in 1..masks - 1 {
            let subset: Vec<usize> = (0..n).filter(|&p| mask & (1 << p) != 0).collect();
            scan(&subset);
        }
    } else {
        // Balls of every canonical radius, plus their complements.
        let family = enumerate_balls(space, space.diameter() + 1.0)?;
        for b in &family.balls {
            scan(&b.members);
            let mut in_b = vec![false; n];
            for &m in &b.members {
                in_b[m] = true;
            }
            let comp: Vec<usize> = (0..n).filter(|&p| !in_b[p]).collect();
            scan(&comp);
        }
        if sampler == SubsetSampler::Default {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n_samples {
                let subset = random_cluster(space, &mut rng);
                scan(&subset);
                let mut in_a = vec![false; n];
                for &p in &subset {
                    in_a[p] = true;
                }
                let comp: Vec<usize> = (0..n).filter(|&p| !in_a[p]).collect();
                scan(&comp);
            }
        }
    }

    let kappa_values: Vec<(f64, f64)> = kappas.iter().copied().zip(best.iter().copied()).collect();
    let i_hat = best.iter().copied().fold(0.0, f64::max);
    Ok(IsoperimetricProfile {
        kappa_values,
        i_hat,
        exhaustive,
    })
}

/// Random connected cluster grown from a random seed point: BFS over edges
/// when adjacency is present, nearest-point growth otherwise.
fn random_cluster(space: &FiniteSpace, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = space.len();
    let target = 1 + rng.gen_range(0..n.max(2) - 1);
    let start = rng.gen_range(0..n);
    let mut chosen = vec![false; n];
    chosen[start] = true;
    let mut cluster = vec![start];
    if let Some(edges) = space.edges() {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut frontier = vec![start];
        while cluster.len() < target && !frontier.is_empty() {
            let pick = rng.gen_range(0..frontier.len());
            let u = frontier.swap_remove(pick);
            for &v in &adj[u] {
                if !chosen[v] && cluster.len() < target {
                    chosen[v] = true;
                    cluster.push(v);
                    frontier.push(v);
                }
            }
        }
    } else {
        while cluster.len() < target {
            // Add the unchosen point nearest to the cluster, with random
            // tie-breaking by scan order.
            let mut best: Option<(f64, usize)> = None;
            for p in 0..n {
                if chosen[p] {
                    continue;
                }
                let d = space.dist_to_set(p, &cluster);
                if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                    best = Some((d, p));
                }
            }
            match best {
                Some((_, p)) => {
                    chosen[p] = true;
                    cluster.push(p);
                }
                None => break,
            }
        }
    }
    cluster.sort_unstable();
    cluster
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmpReport {
    pub r0: f64,
    pub beta: f64,
    pub pass: bool,
    /// Pairs with dist > r0 admitting no ball of radius < beta * dist that
    /// contains both.
    pub violations: Vec<(usize, usize)>,
}

/// Check the approximate midpoint property with constants (r0, beta).
///
/// A pair (x, y) with dist(x, y) > r0 passes when some open ball of radius
/// strictly less than beta * dist(x, y) contains both, i.e. when some
/// center z has max(dist(z,x), dist(z,y)) < beta * dist(x, y).
pub fn amp_check(space: &FiniteSpace, r0: f64, beta: f64) -> Result<AmpReport> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(HblError::InvalidParameter(format!(
            "amp beta must lie in (1/2, 1), got {}",
            beta
        )));
    }
    if r0 < 0.0 {
        return Err(HblError::InvalidParameter(format!(
            "amp R0 must be nonnegative, got {}",
            r0
        )));
    }
    let n = space.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut violations: Vec<(usize, usize)> = pairs
        .par_iter()
        .filter(|&&(x, y)| {
            let d = space.dist(x, y);
            if d <= r0 {
                return false;
            }
            let needed = beta * d;
            !(0..n).any(|z| space.dist(z, x).max(space.dist(z, y)) < needed)
        })
        .copied()
        .collect();
    violations.sort_unstable();
    Ok(AmpReport {
        r0,
        beta,
        pass: violations.is_empty(),
        violations,
    })
}

/// Smallest radius of an open ball containing both x and y, over all
/// centers: used as a witness by the atom splitting construction.
pub fn amp_witness(space: &FiniteSpace, x: usize, y: usize) -> (usize, f64) {
    let n = space.len();
    let mut best = (x, f64::INFINITY);
    for z in 0..n {
        let m = space.dist(z, x).max(space.dist(z, y));
        if m < best.1 {
            best = (z, m);
        }
    }
    best
}

/// Volume growth profile: (r, mu(B(o, r))) at every distinct radius r from
/// the origin, using open balls at radius just above each distance.
pub fn volume_growth(space: &FiniteSpace, origin: usize) -> Vec<(f64, f64)> {
    let order = space.order_by_distance(origin);
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let d = space.dist(origin, order[i]);
        let mut j = i;
        while j < order.len() && space.dist(origin, order[j]) == d {
            acc += space.weight(order[j]);
            j += 1;
        }
        out.push((d, acc));
        i = j;
    }
    out
}
