//! Exact H^1 atomic norms by linear programming.
//!
//! The norm of g at scale b is the optimum of
//!
//!   minimize   sum_B t_B
//!   subject to sum_B g_B = g                (pointwise)
//!              sum_{p in B} w_p g_B(p) = 0  (per ball)
//!              |g_B(p)| <= t_B / mu(B)      (per ball and point)
//!
//! with one block (g_B, t_B) per canonical family ball.  Restricting to one
//! atom per ball loses nothing: atoms supported in a fixed ball form a
//! convex set, so several terms on the same ball merge into one.  For
//! r = infinity this is a linear program; the interior-point solve returns
//! primal and dual objectives and the gap is part of the result.
//!
//! Feasibility is decided exactly beforehand: g is decomposable iff its
//! weighted integral vanishes on every connected component of the
//! ball-overlap graph (mass can be routed between any two points sharing a
//! ball via two-point atoms).  In particular, when every family ball is a
//! singleton only the zero function is decomposable.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{HblError, Result};
use crate::space::{BallFamily, FiniteSpace};

/// Outcome of an H^1 norm computation.
#[derive(Debug, Clone)]
pub enum H1Solution {
    Feasible {
        /// The norm: optimal coefficient sum.
        value: f64,
        primal_objective: f64,
        dual_objective: f64,
        /// |primal - dual|: the certificate quality.
        gap: f64,
    },
    Infeasible,
}

impl H1Solution {
    pub fn value(&self) -> Option<f64> {
        match self {
            H1Solution::Feasible { value, .. } => Some(*value),
            H1Solution::Infeasible => None,
        }
    }

    pub fn gap(&self) -> Option<f64> {
        match self {
            H1Solution::Feasible { gap, .. } => Some(*gap),
            H1Solution::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, H1Solution::Feasible { .. })
    }
}

/// Exact decomposability test: the weighted integral of g must vanish on
/// every connected component of the ball-overlap graph.
pub fn h1_feasible(space: &FiniteSpace, family: &BallFamily, g: &[f64]) -> bool {
    let n = space.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for b in &family.balls {
        let root = find(&mut parent, b.members[0]);
        for &m in &b.members[1..] {
            let r = find(&mut parent, m);
            parent[r] = root;
        }
    }
    let mut sums: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    let mut scales: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    for p in 0..n {
        let r = find(&mut parent, p);
        *sums.entry(r).or_insert(0.0) += space.weight(p) * g[p];
        *scales.entry(r).or_insert(0.0) += space.weight(p) * g[p].abs();
    }
    sums.iter()
        .all(|(root, s)| s.abs() <= 1e-9 * scales[root].max(1e-30))
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }
}

fn solve_lp(
    n_vars: usize,
    objective: Vec<f64>,
    trip: Triplets,
    rhs: Vec<f64>,
    n_eq: usize,
    n_ineq: usize,
) -> Result<H1Solution> {
    let a = CscMatrix::new_from_triplets(n_eq + n_ineq, n_vars, trip.rows, trip.cols, trip.vals);
    let p = CscMatrix::zeros((n_vars, n_vars));
    let cones = [
        SupportedConeT::ZeroConeT(n_eq),
        SupportedConeT::NonnegativeConeT(n_ineq),
    ];
    let settings = DefaultSettings {
        verbose: false,
        tol_gap_abs: 1e-10,
        tol_gap_rel: 1e-10,
        tol_feas: 1e-10,
        max_iter: 200,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &objective, &a, &rhs, &cones, settings)
        .map_err(|e| HblError::SolverFailure(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(H1Solution::Feasible {
            value: sol.obj_val,
            primal_objective: sol.obj_val,
            dual_objective: sol.obj_val_dual,
            gap: (sol.obj_val - sol.obj_val_dual).abs(),
        }),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Ok(H1Solution::Infeasible)
        }
        other => Err(HblError::SolverFailure(format!(
            "solver terminated with status {other:?}"
        ))),
    }
}

/// H^1 atomic norm of g over the given canonical ball family.
///
/// Only r = infinity atoms are supported; finite-r size constraints are
/// non-polyhedral cones and stay behind this interface unimplemented.
pub fn h1_norm(space: &FiniteSpace, family: &BallFamily, g: &[f64]) -> Result<H1Solution> {
    let n = space.len();
    if g.len() != n {
        return Err(HblError::InvalidParameter(format!(
            "function has {} values for {} points",
            g.len(),
            n
        )));
    }
    if !h1_feasible(space, family, g) {
        return Ok(H1Solution::Infeasible);
    }
    if g.iter().all(|&v| v == 0.0) {
        return Ok(H1Solution::Feasible {
            value: 0.0,
            primal_objective: 0.0,
            dual_objective: 0.0,
            gap: 0.0,
        });
    }

    // Variable layout: per ball B, the block [g_B(p) for p in B] followed
    // at the end by all t_B.
    let nb = family.len();
    let mut block_start = vec![0usize; nb];
    let mut acc = 0usize;
    for (bi, b) in family.balls.iter().enumerate() {
        block_start[bi] = acc;
        acc += b.members.len();
    }
    let t_start = acc;
    let n_vars = acc + nb;

    let mut objective = vec![0.0; n_vars];
    for t in 0..nb {
        objective[t_start + t] = 1.0;
    }

    let mut trip = Triplets::new();
    // Equalities: point rows then ball-cancellation rows.
    for (bi, b) in family.balls.iter().enumerate() {
        for (j, &p) in b.members.iter().enumerate() {
            trip.push(p, block_start[bi] + j, 1.0);
            trip.push(n + bi, block_start[bi] + j, space.weight(p));
        }
    }
    let n_eq = n + nb;
    // Inequalities: mu(B) g_B(p) - t_B <= 0 and -mu(B) g_B(p) - t_B <= 0.
    let mut row = n_eq;
    for (bi, b) in family.balls.iter().enumerate() {
        let mu = b.mass(space);
        for (j, _) in b.members.iter().enumerate() {
            trip.push(row, block_start[bi] + j, mu);
            trip.push(row, t_start + bi, -1.0);
            row += 1;
            trip.push(row, block_start[bi] + j, -mu);
            trip.push(row, t_start + bi, -1.0);
            row += 1;
        }
    }
    let n_ineq = row - n_eq;

    let mut rhs = vec![0.0; n_eq + n_ineq];
    rhs[..n].copy_from_slice(g);

    solve_lp(n_vars, objective, trip, rhs, n_eq, n_ineq)
}

/// Independent second encoding of the same program, splitting each g_B
/// into nonnegative parts: used to cross-check the primary encoding.
pub fn h1_norm_posneg(space: &FiniteSpace, family: &BallFamily, g: &[f64]) -> Result<H1Solution> {
    let n = space.len();
    if g.len() != n {
        return Err(HblError::InvalidParameter(format!(
            "function has {} values for {} points",
            g.len(),
            n
        )));
    }
    if !h1_feasible(space, family, g) {
        return Ok(H1Solution::Infeasible);
    }
    if g.iter().all(|&v| v == 0.0) {
        return Ok(H1Solution::Feasible {
            value: 0.0,
            primal_objective: 0.0,
            dual_objective: 0.0,
            gap: 0.0,
        });
    }

    // Variable layout: per ball, [pos(p)..] ++ [neg(p)..]; all t_B at the
    // end.
    let nb = family.len();
    let mut block_start = vec![0usize; nb];
    let mut acc = 0usize;
    for (bi, b) in family.balls.iter().enumerate() {
        block_start[bi] = acc;
        acc += 2 * b.members.len();
    }
    let t_start = acc;
    let n_vars = acc + nb;

    let mut objective = vec![0.0; n_vars];
    for t in 0..nb {
        objective[t_start + t] = 1.0;
    }

    let mut trip = Triplets::new();
    for (bi, b) in family.balls.iter().enumerate() {
        let sz = b.members.len();
        for (j, &p) in b.members.iter().enumerate() {
            let pos = block_start[bi] + j;
            let neg = block_start[bi] + sz + j;
            trip.push(p, pos, 1.0);
            trip.push(p, neg, -1.0);
            trip.push(n + bi, pos, space.weight(p));
            trip.push(n + bi, neg, -space.weight(p));
        }
    }
    let n_eq = n + nb;
    let mut row = n_eq;
    for (bi, b) in family.balls.iter().enumerate() {
        let sz = b.members.len();
        let mu = b.mass(space);
        for j in 0..sz {
            let pos = block_start[bi] + j;
            let neg = block_start[bi] + sz + j;
            // pos + neg <= t_B / mu(B)
            trip.push(row, pos, mu);
            trip.push(row, neg, mu);
            trip.push(row, t_start + bi, -1.0);
            row += 1;
            // pos, neg >= 0
            trip.push(row, pos, -1.0);
            row += 1;
            trip.push(row, neg, -1.0);
            row += 1;
        }
    }
    let n_ineq = row - n_eq;
    let mut rhs = vec![0.0; n_eq + n_ineq];
    rhs[..n].copy_from_slice(g);

    solve_lp(n_vars, objective, trip, rhs, n_eq, n_ineq)
}

/// Random mean-zero function supported on one family ball: feasible by
/// construction (it is a multiple of an atom).
pub fn random_local_mean_zero(
    space: &FiniteSpace,
    family: &BallFamily,
    rng: &mut impl rand::Rng,
) -> Vec<f64> {
    let candidates: Vec<usize> = (0..family.len())
        .filter(|&bi| family.balls[bi].members.len() >= 2)
        .collect();
    let mut g = vec![0.0; space.len()];
    if candidates.is_empty() {
        return g;
    }
    let bi = candidates[rng.gen_range(0..candidates.len())];
    let b = &family.balls[bi];
    for &m in &b.members {
        g[m] = rng.gen_range(-1.0..1.0);
    }
    let mean = space.weighted_mean_on(&b.members, &g);
    for &m in &b.members {
        g[m] -= mean;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generators::{gen_path, gen_tree};
    use crate::space::enumerate_balls;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_family_admits_only_zero() {
        // Unit-distance tree at scale 1: all family balls are singletons.
        let tree = gen_tree(3, 2).unwrap();
        let fam = enumerate_balls(&tree, 1.0).unwrap();
        assert!(fam.balls.iter().all(|b| b.members.len() == 1));
        let mut g = vec![0.0; tree.len()];
        g[0] = 1.0;
        g[1] = -1.0;
        let sol = h1_norm(&tree, &fam, &g).unwrap();
        assert!(!sol.is_feasible());
        let zero = vec![0.0; tree.len()];
        assert!(h1_norm(&tree, &fam, &zero).unwrap().is_feasible());
    }

    #[test]
    fn nonzero_integral_is_infeasible() {
        let p = gen_path(4).unwrap();
        let fam = enumerate_balls(&p, 2.0).unwrap();
        let g = vec![1.0, 0.0, 0.0, 0.0];
        assert!(!h1_norm(&p, &fam, &g).unwrap().is_feasible());
    }

    #[test]
    fn single_atom_upper_bound() {
        // g = lambda * a for an atom a: the norm is at most |lambda|.
        let p = gen_path(4).unwrap();
        let fam = enumerate_balls(&p, 2.0).unwrap();
        // Ball {0,1} has mass 2; a = (1/2, -1/2) is an atom; lambda = 3.
        let g = vec![1.5, -1.5, 0.0, 0.0];
        let sol = h1_norm(&p, &fam, &g).unwrap();
        let value = sol.value().expect("feasible");
        assert!(value <= 3.0 + 1e-7, "{value}");
        assert!(sol.gap().unwrap() <= 1e-6);
    }

    #[test]
    fn three_point_path_two_encodings_agree() {
        let p = gen_path(3).unwrap();
        let fam = enumerate_balls(&p, 1.5).unwrap();
        let g = vec![1.0, -2.0, 1.0];
        let a = h1_norm(&p, &fam, &g).unwrap();
        let b = h1_norm_posneg(&p, &fam, &g).unwrap();
        let (va, vb) = (a.value().unwrap(), b.value().unwrap());
        assert!((va - vb).abs() <= 1e-6, "{va} vs {vb}");
        assert!(a.gap().unwrap() <= 1e-6);
        assert!(b.gap().unwrap() <= 1e-6);
    }

    #[test]
    fn norm_properties_on_corpus() {
        // Absolute homogeneity and the triangle inequality at LP precision.
        let tree = gen_tree(3, 3).unwrap();
        let fam = enumerate_balls(&tree, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_local_mean_zero(&tree, &fam, &mut rng);
        let g = random_local_mean_zero(&tree, &fam, &mut rng);
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = f.iter().map(|v| -2.0 * v).collect();
        let vf = h1_norm(&tree, &fam, &f).unwrap().value().unwrap();
        let vg = h1_norm(&tree, &fam, &g).unwrap().value().unwrap();
        let vfg = h1_norm(&tree, &fam, &fg).unwrap().value().unwrap();
        let vs = h1_norm(&tree, &fam, &scaled).unwrap().value().unwrap();
        assert!(vfg <= vf + vg + 1e-6);
        assert!((vs - 2.0 * vf).abs() <= 1e-6);
    }

    #[test]
    fn scale_monotonicity() {
        // A larger ball family can only shrink the norm.
        let tree = gen_tree(3, 3).unwrap();
        let fam2 = enumerate_balls(&tree, 2.0).unwrap();
        let fam3 = enumerate_balls(&tree, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let g = random_local_mean_zero(&tree, &fam2, &mut rng);
            let v2 = h1_norm(&tree, &fam2, &g).unwrap().value().unwrap();
            let v3 = h1_norm(&tree, &fam3, &g).unwrap().value().unwrap();
            assert!(v3 <= v2 + 1e-6, "{v3} > {v2}");
        }
    }

    #[test]
    fn feasibility_screen_matches_component_structure() {
        // Two stars at scale 2 on a path of 7: points 0..2 and 4..6 lie in
        // different overlap components relative to balls around 1 and 5
        // only if the middle is excluded; with the full family the path is
        // one component, so any mean-zero g is feasible.
        let p = gen_path(7).unwrap();
        let fam = enumerate_balls(&p, 2.0).unwrap();
        let g = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0];
        assert!(h1_feasible(&p, &fam, &g));
        let sol = h1_norm(&p, &fam, &g).unwrap();
        assert!(sol.is_feasible());
        // Moving mass across 6 edges by two-point atoms costs at most 12
        // (each unit hop is a two-point atom of coefficient 2), and at
        // least 2.
        let v = sol.value().unwrap();
        assert!(v >= 2.0 - 1e-7 && v <= 12.0 + 1e-7, "{v}");
    }
}
