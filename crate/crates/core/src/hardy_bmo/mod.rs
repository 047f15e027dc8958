//! Atoms, atomic decompositions, BMO norms, the John-Nirenberg experiment
//! and the H^1/BMO duality pairing.

pub mod lp;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::numeric::{kahan_sum, weighted_inner};
use crate::space::{Ball, BallFamily, FiniteSpace};

pub use lp::{h1_feasible, h1_norm, h1_norm_posneg, H1Solution};
pub use split::{split_atom, split_coefficient_bound, split_term_bound, SplitParams};

/// Size exponent of an atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AtomExponent {
    Infinity,
    Finite(f64),
}

/// A (1, r)-atom: supported in a ball, weighted mean zero, size bounded by
/// the reciprocal ball mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atom {
    pub support: Ball,
    /// Values aligned with `support.members`.
    pub values: Vec<f64>,
    pub exponent: AtomExponent,
}

impl Atom {
    /// Weighted L^1 norm of the atom over its support.
    pub fn l1_norm(&self, space: &FiniteSpace) -> f64 {
        kahan_sum(
            self.support
                .members
                .iter()
                .zip(&self.values)
                .map(|(&m, v)| space.weight(m) * v.abs()),
        )
    }

    pub fn integral(&self, space: &FiniteSpace) -> f64 {
        kahan_sum(
            self.support
                .members
                .iter()
                .zip(&self.values)
                .map(|(&m, v)| space.weight(m) * v),
        )
    }

    /// Dense representation over the whole space.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&m, &v) in self.support.members.iter().zip(&self.values) {
            out[m] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomViolation {
    pub kind: String,
    pub magnitude: f64,
    pub bound: f64,
}

/// Check the two atom invariants; an empty list means the atom is valid.
pub fn validate_atom(space: &FiniteSpace, atom: &Atom) -> Vec<AtomViolation> {
    let mut violations = Vec::new();
    if atom.values.len() != atom.support.members.len() {
        violations.push(AtomViolation {
            kind: "shape".into(),
            magnitude: atom.values.len() as f64,
            bound: atom.support.members.len() as f64,
        });
        return violations;
    }
    let mu = atom.support.mass(space);
    let cancel = atom.integral(space).abs();
    let cancel_bound = 1e-10 * atom.l1_norm(space);
    if cancel > cancel_bound {
        violations.push(AtomViolation {
            kind: "cancellation".into(),
            magnitude: cancel,
            bound: cancel_bound,
        });
    }
    let size_bound = 1.0 / mu;
    let size = match atom.exponent {
        AtomExponent::Infinity => atom.values.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        AtomExponent::Finite(r) => {
            if !(r > 1.0 && r.is_finite()) {
                violations.push(AtomViolation {
                    kind: "exponent".into(),
                    magnitude: r,
                    bound: f64::INFINITY,
                });
                return violations;
            }
            let mean_r = kahan_sum(
                atom.support
                    .members
                    .iter()
                    .zip(&atom.values)
                    .map(|(&m, v)| space.weight(m) * v.abs().powf(r)),
            ) / mu;
            mean_r.powf(1.0 / r)
        }
    };
    if size > size_bound * (1.0 + 1e-12) {
        violations.push(AtomViolation {
            kind: "size".into(),
            magnitude: size,
            bound: size_bound,
        });
    }
    violations
}

/// A weighted list of atoms at a common scale bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomicDecomposition {
    pub terms: Vec<(f64, Atom)>,
    /// All support radii are at most this scale.
    pub scale: f64,
}

impl AtomicDecomposition {
    pub fn evaluate(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (lambda, atom) in &self.terms {
            for (&m, &v) in atom.support.members.iter().zip(&atom.values) {
                out[m] += lambda * v;
            }
        }
        out
    }

    pub fn coefficient_sum(&self) -> f64 {
        kahan_sum(self.terms.iter().map(|(l, _)| l.abs()))
    }

    pub fn max_support_radius(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, a)| a.support.radius)
            .fold(0.0, f64::max)
    }

    /// Relative L^1 distance between the evaluated sum and a target.
    pub fn reconstruction_error(&self, space: &FiniteSpace, target: &[f64]) -> f64 {
        let got = self.evaluate(space.len());
        let num = kahan_sum(
            (0..space.len()).map(|p| space.weight(p) * (got[p] - target[p]).abs()),
        );
        let den = kahan_sum((0..space.len()).map(|p| space.weight(p) * target[p].abs()));
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmoValue {
    pub q: f64,
    pub b: f64,
    pub value: f64,
    /// Index into the family of a ball attaining the supremum (None when
    /// the norm vanishes).
    pub argmax_ball: Option<usize>,
}

/// N_b^q(f): the largest mean q-oscillation over family balls.
pub fn bmo_norm(space: &FiniteSpace, family: &BallFamily, f: &[f64], q: f64) -> Result<BmoValue> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(HblError::InvalidParameter(format!(
            "BMO exponent must lie in [1, inf), got {}",
            q
        )));
    }
    let mut value = 0.0f64;
    let mut argmax = None;
    for (bi, b) in family.balls.iter().enumerate() {
        let osc = space.mean_oscillation_on(&b.members, f, q);
        if osc > value {
            value = osc;
            argmax = Some(bi);
        }
    }
    Ok(BmoValue {
        q,
        b: family.bound,
        value,
        argmax_ball: argmax,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleEquivalenceReport {
    pub b: f64,
    pub c: f64,
    /// Worst ratio across the corpus (H^1: ||.||_c / ||.||_b, BMO: N_b / N_c).
    pub max_ratio: f64,
    /// Instances skipped because the function was constant (BMO) or
    /// infeasible at both scales (H^1).
    pub skipped: usize,
    /// One-directional inequality violations (must stay empty).
    pub ordering_violations: usize,
}

/// BMO scale equivalence: N_c^q <= N_b^q holds by family inclusion, and
/// the reported constant bounds N_b^q / N_c^q over the corpus.
pub fn bmo_scale_equivalence(
    space: &FiniteSpace,
    corpus: &[Vec<f64>],
    q: f64,
    b: f64,
    c: f64,
) -> Result<ScaleEquivalenceReport> {
    if !(c < b && c > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "scale equivalence needs 0 < c < b, got c={}, b={}",
            c, b
        )));
    }
    let fam_b = crate::space::enumerate_balls(space, b)?;
    let fam_c = crate::space::enumerate_balls(space, c)?;
    let mut max_ratio = 1.0f64;
    let mut skipped = 0usize;
    let mut violations = 0usize;
    for f in corpus {
        let nb = bmo_norm(space, &fam_b, f, q)?.value;
        let nc = bmo_norm(space, &fam_c, f, q)?.value;
        if nb == 0.0 {
            skipped += 1;
            continue;
        }
        if nc > nb * (1.0 + 1e-12) {
            violations += 1;
        }
        if nc > 0.0 {
            max_ratio = max_ratio.max(nb / nc);
        } else {
            max_ratio = f64::INFINITY;
        }
    }
    Ok(ScaleEquivalenceReport {
        b,
        c,
        max_ratio,
        skipped,
        ordering_violations: violations,
    })
}

/// H^1 scale equivalence over a corpus of decomposable functions.
///
/// Requires the approximate midpoint property to hold at (r0, beta) and
/// the atom-splitting feasibility condition r0 <= beta c (with c < b);
/// refuses to certify otherwise.  The one-directional inequality
/// ||.||_{H_b} <= ||.||_{H_c} holds by family inclusion.
pub fn h1_scale_equivalence(
    space: &FiniteSpace,
    corpus: &[Vec<f64>],
    b: f64,
    c: f64,
    r0: f64,
    beta: f64,
) -> Result<ScaleEquivalenceReport> {
    if !(c < b && c > 0.0) {
        return Err(HblError::InvalidParameter(format!(
            "scale equivalence needs 0 < c < b, got c={}, b={}",
            c, b
        )));
    }
    if r0 > beta * c {
        return Err(HblError::InvalidParameter(format!(
            "scale equivalence needs r0 <= beta * c, got {} > {}",
            r0,
            beta * c
        )));
    }
    let amp = crate::space::geometry::amp_check(space, r0, beta)?;
    if !amp.pass {
        return Err(HblError::InvalidParameter(format!(
            "approximate midpoint property fails at (r0={}, beta={}); \
             run amp_check first",
            r0, beta
        )));
    }
    let fam_b = crate::space::enumerate_balls(space, b)?;
    let fam_c = crate::space::enumerate_balls(space, c)?;
    let mut max_ratio = 1.0f64;
    let mut skipped = 0usize;
    let mut violations = 0usize;
    for g in corpus {
        let vb = h1_norm(space, &fam_b, g)?;
        let vc = h1_norm(space, &fam_c, g)?;
        match (vb.value(), vc.value()) {
            (Some(vb), Some(vc)) => {
                if vb > vc * (1.0 + 1e-9) + 1e-12 {
                    violations += 1;
                }
                if vb > 0.0 {
                    max_ratio = max_ratio.max(vc / vb);
                }
            }
            (Some(_), None) => {
                // Feasible at the large scale but not the small one would
                // contradict the rescaling proposition under AMP.
                violations += 1;
            }
            _ => skipped += 1,
        }
    }
    Ok(ScaleEquivalenceReport {
        b,
        c,
        max_ratio,
        skipped,
        ordering_violations: violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JnRow {
    pub s: f64,
    /// Worst ratio mu({x in B : |f - f_B| > s}) / mu(B) over family balls.
    pub ratio: f64,
    pub worst_ball: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JnReport {
    pub rows: Vec<JnRow>,
    /// Envelope constants: every row satisfies ratio <= j e^(-eta s / n_f).
    pub j: f64,
    pub eta: f64,
    pub n_f: f64,
    /// All ratios vanished (f has no visible oscillation at this scale).
    pub degenerate: bool,
}

impl JnReport {
    /// Exponential-integrability constant of the fitted envelope at
    /// c = eta/2: bounds the ball mean of e^(c |f - f_B| / n_f).
    pub fn exp_integral_constant(&self) -> f64 {
        1.0 + self.j
    }

    /// Envelope-implied bound on N^q / N^1 for q > 1.
    pub fn q_norm_constant(&self, q: f64) -> f64 {
        let c = self.eta / 2.0;
        ((q / (c * std::f64::consts::E)).powf(q) * self.exp_integral_constant()).powf(1.0 / q)
    }
}

/// Level-set decay experiment: worst-ball exceedance ratios per threshold,
/// with an exponential envelope fitted on the decaying range and inflated
/// to cover every row.
///
/// `n_f` is the norm N(f) at scale 2 max(c1, b0), computed by the caller.
pub fn jn_experiment(
    space: &FiniteSpace,
    family_b0: &BallFamily,
    f: &[f64],
    n_f: f64,
    s_grid: &[f64],
) -> Result<JnReport> {
    if !(n_f > 0.0) {
        return Err(HblError::InvalidParameter(
            "John-Nirenberg experiment needs a nonconstant f (N(f) > 0)".into(),
        ));
    }
    if s_grid.is_empty() || s_grid.iter().any(|&s| !(s > 0.0)) {
        return Err(HblError::InvalidParameter(
            "threshold grid must be nonempty and positive".into(),
        ));
    }
    let mut rows = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let mut worst = 0.0f64;
        let mut worst_ball = None;
        for (bi, b) in family_b0.balls.iter().enumerate() {
            let mean = space.weighted_mean_on(&b.members, f);
            let mass = kahan_sum(
                b.members
                    .iter()
                    .filter(|&&x| (f[x] - mean).abs() > s)
                    .map(|&x| space.weight(x)),
            );
            let ratio = mass / b.mass(space);
            if ratio > worst {
                worst = ratio;
                worst_ball = Some(bi);
            }
        }
        rows.push(JnRow {
            s,
            ratio: worst,
            worst_ball,
        });
    }
    let degenerate = rows.iter().all(|r| r.ratio == 0.0);

    // Slope of log ratios over the decaying window, then the minimal
    // envelope constant covering every row.
    let window: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ratio > 1e-6 && r.ratio < 1.0)
        .map(|r| (r.s, r.ratio.ln()))
        .collect();
    let eta = if window.len() >= 2 {
        let m = window.len() as f64;
        let sx = kahan_sum(window.iter().map(|&(s, _)| s));
        let sy = kahan_sum(window.iter().map(|&(_, y)| y));
        let sxx = kahan_sum(window.iter().map(|&(s, _)| s * s));
        let sxy = kahan_sum(window.iter().map(|&(s, y)| s * y));
        let denom = m * sxx - sx * sx;
        if denom > 0.0 {
            let slope = (m * sxy - sx * sy) / denom;
            (-slope * n_f).max(0.0)
        } else {
            0.0
        }
    } else if !degenerate {
        // Too few decaying rows to regress: fall back to the decay between
        // the last nonzero ratio and the grid end.
        let last_nonzero = rows.iter().rev().find(|r| r.ratio > 0.0).unwrap();
        let s_end = rows.last().unwrap().s;
        if s_end > last_nonzero.s {
            n_f * (1.0 / last_nonzero.ratio.max(1e-12)).ln() / (s_end - last_nonzero.s)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let j = rows
        .iter()
        .filter(|r| r.ratio > 0.0)
        .map(|r| r.ratio * (eta * r.s / n_f).exp())
        .fold(0.0f64, f64::max);
    Ok(JnReport {
        rows,
        j,
        eta,
        n_f,
        degenerate,
    })
}

/// Default threshold grid for the John-Nirenberg experiment: the distinct
/// oscillation values |f - f_B| over the family plus one point beyond the
/// largest, thinned to at most `max_len` entries.
pub fn jn_default_grid(
    space: &FiniteSpace,
    family: &BallFamily,
    f: &[f64],
    max_len: usize,
) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::new();
    for b in &family.balls {
        let mean = space.weighted_mean_on(&b.members, f);
        for &x in &b.members {
            let v = (f[x] - mean).abs();
            if v > 0.0 {
                vals.push(v);
            }
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup();
    if vals.is_empty() {
        return vec![1.0];
    }
    let mut grid: Vec<f64> = if vals.len() > max_len.max(2) - 1 {
        let step = vals.len() as f64 / (max_len - 1) as f64;
        (0..max_len - 1)
            .map(|i| vals[((i as f64 * step) as usize).min(vals.len() - 1)])
            .collect()
    } else {
        vals.clone()
    };
    grid.push(vals.last().unwrap() * 1.25);
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingReport {
    pub pairing: f64,
    pub n1: f64,
    pub h1: f64,
    pub lp_gap: f64,
    pub bound_holds: bool,
    /// True when g was not decomposable at this scale.
    pub skipped: bool,
}

/// Duality pairing bound: |<f, g>| <= N^1_b(f) ||g||_{H_b} with constant 1
/// for r = infinity atoms, certified by the LP primal/dual pair.
pub fn duality_pairing_check(
    space: &FiniteSpace,
    family: &BallFamily,
    f: &[f64],
    g: &[f64],
) -> Result<PairingReport> {
    let sol = h1_norm(space, family, g)?;
    let (h1, gap) = match (sol.value(), sol.gap()) {
        (Some(v), Some(g)) => (v, g),
        _ => {
            return Ok(PairingReport {
                pairing: 0.0,
                n1: 0.0,
                h1: f64::INFINITY,
                lp_gap: f64::NAN,
                bound_holds: true,
                skipped: true,
            })
        }
    };
    let n1 = bmo_norm(space, family, f, 1.0)?.value;
    let pairing = weighted_inner(f, g, space.weights());
    let bound = n1 * h1;
    let bound_holds = pairing.abs() <= bound * (1.0 + 1e-9) + 1e-12;
    Ok(PairingReport {
        pairing,
        n1,
        h1,
        lp_gap: gap,
        bound_holds,
        skipped: false,
    })
}

/// Default global scale b0: 1.1 r0 / (1 - beta) rounded up to the next
/// distinct positive distance value (the diameter when no distance
/// reaches that far).
pub fn default_b0(space: &FiniteSpace, r0: f64, beta: f64) -> f64 {
    let target = 1.1 * r0 / (1.0 - beta);
    let mut best = f64::INFINITY;
    for i in 0..space.len() {
        for j in (i + 1)..space.len() {
            let d = space.dist(i, j);
            if d >= target && d > 0.0 {
                best = best.min(d);
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        space.diameter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generators::{gen_path, gen_tree};
    use crate::space::{ball, enumerate_balls};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_point_space() -> FiniteSpace {
        FiniteSpace::new(
            vec!["x".into(), "y".into()],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 1.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_atom_validates() {
        let s = two_point_space();
        let b = ball(&s, 0, 1.5).unwrap();
        let atom = Atom {
            support: b,
            values: vec![0.0, 0.0],
            exponent: AtomExponent::Infinity,
        };
        assert!(validate_atom(&s, &atom).is_empty());
    }

    #[test]
    fn two_point_atom_validates_and_perturbation_fails() {
        let s = two_point_space();
        let b = ball(&s, 0, 1.5).unwrap();
        let atom = Atom {
            support: b.clone(),
            values: vec![0.5, -0.5],
            exponent: AtomExponent::Infinity,
        };
        assert!(validate_atom(&s, &atom).is_empty());
        let scaled = Atom {
            support: b,
            values: vec![0.505, -0.505],
            exponent: AtomExponent::Infinity,
        };
        let viols = validate_atom(&s, &scaled);
        assert!(viols.iter().any(|v| v.kind == "size"));
    }

    #[test]
    fn finite_r_atom_size() {
        let s = two_point_space();
        let b = ball(&s, 0, 1.5).unwrap();
        // mu(B) = 2; r = 2 size: ((1/2)(2 * 0.25))^(1/2) = 0.5 == 1/mu.
        let atom = Atom {
            support: b,
            values: vec![0.5, -0.5],
            exponent: AtomExponent::Finite(2.0),
        };
        assert!(validate_atom(&s, &atom).is_empty());
    }

    #[test]
    fn bmo_norm_basics() {
        let s = two_point_space();
        let fam = enumerate_balls(&s, 1.5).unwrap();
        let v = bmo_norm(&s, &fam, &[1.0, 0.0], 1.0).unwrap();
        assert!((v.value - 0.5).abs() < 1e-15);
        assert!(v.argmax_ball.is_some());
        let c = bmo_norm(&s, &fam, &[3.0, 3.0], 1.0).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(c.argmax_ball.is_none());
    }

    #[test]
    fn bmo_invariances() {
        let tree = gen_tree(3, 3).unwrap();
        let fam = enumerate_balls(&tree, 3.0).unwrap();
        let f: Vec<f64> = (0..tree.len()).map(|i| ((i % 5) as f64).sqrt()).collect();
        let shifted: Vec<f64> = f.iter().map(|v| v + 7.0).collect();
        let scaled: Vec<f64> = f.iter().map(|v| v * 4.0).collect();
        let n0 = bmo_norm(&tree, &fam, &f, 1.0).unwrap().value;
        let n1 = bmo_norm(&tree, &fam, &shifted, 1.0).unwrap().value;
        let n2 = bmo_norm(&tree, &fam, &scaled, 1.0).unwrap().value;
        assert!((n0 - n1).abs() < 1e-12);
        assert!((n2 - 4.0 * n0).abs() < 1e-12);
        // Smaller scale, smaller sup family.
        let fam_small = enumerate_balls(&tree, 1.5).unwrap();
        let ns = bmo_norm(&tree, &fam_small, &f, 1.0).unwrap().value;
        assert!(ns <= n0 + 1e-15);
    }

    #[test]
    fn bmo_scale_equivalence_on_tree() {
        let tree = gen_tree(3, 4).unwrap();
        let f: Vec<f64> = (0..tree.len())
            .map(|i| (1.0 + tree.dist(0, i)).ln())
            .collect();
        let rep =
            bmo_scale_equivalence(&tree, &[f, vec![1.0; tree.len()]], 1.0, 4.0, 2.5).unwrap();
        assert_eq!(rep.ordering_violations, 0);
        assert_eq!(rep.skipped, 1);
        assert!(rep.max_ratio.is_finite());
        assert!(rep.max_ratio >= 1.0);
    }

    #[test]
    fn h1_scale_equivalence_guards_amp() {
        // Paths fail AMP at r0 = 0 for adjacent pairs.
        let p = gen_path(6).unwrap();
        let err = h1_scale_equivalence(&p, &[], 3.0, 2.0, 0.0, 0.75);
        assert!(err.is_err());
    }

    #[test]
    fn h1_scale_equivalence_on_tree() {
        let tree = gen_tree(3, 4).unwrap();
        let fam_c = enumerate_balls(&tree, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<Vec<f64>> = (0..4)
            .map(|_| lp::random_local_mean_zero(&tree, &fam_c, &mut rng))
            .collect();
        let rep = h1_scale_equivalence(&tree, &corpus, 4.0, 2.5, 1.0, 0.75).unwrap();
        assert_eq!(rep.ordering_violations, 0, "{rep:?}");
        assert!(rep.max_ratio >= 1.0 && rep.max_ratio.is_finite());
    }

    #[test]
    fn jn_two_point_step_function() {
        let s = two_point_space();
        let fam = enumerate_balls(&s, 1.5).unwrap();
        let f = [1.0, 0.0];
        // |f - f_B| = 1/2 on the two-point ball: the ratio is 1 for
        // s < 1/2 and 0 beyond.
        let rep = jn_experiment(&s, &fam, &f, 0.5, &[0.25, 0.75]).unwrap();
        assert_eq!(rep.rows[0].ratio, 1.0);
        assert_eq!(rep.rows[1].ratio, 0.0);
        assert!(!rep.degenerate);
        for r in &rep.rows {
            assert!(r.ratio <= rep.j * (-rep.eta * r.s / rep.n_f).exp() + 1e-12);
        }
    }

    #[test]
    fn jn_on_tree_log_distance() {
        let tree = gen_tree(3, 4).unwrap();
        let b0 = 2.0;
        let fam = enumerate_balls(&tree, b0).unwrap();
        let f: Vec<f64> = (0..tree.len())
            .map(|i| (1.0 + tree.dist(0, i)).ln())
            .collect();
        // Norm at scale 2 max(c1, b0) with c1 from the default forest.
        let forest =
            crate::dyadic::build_forest(&tree, 0.5, crate::dyadic::TieBreak::Id).unwrap();
        let scale = 2.0 * forest.realized_c1.max(b0);
        let fam_n = enumerate_balls(&tree, scale).unwrap();
        let n_f = bmo_norm(&tree, &fam_n, &f, 1.0).unwrap().value;
        let grid = jn_default_grid(&tree, &fam, &f, 32);
        let rep = jn_experiment(&tree, &fam, &f, n_f, &grid).unwrap();
        assert!(!rep.degenerate);
        assert!(rep.eta > 0.0, "eta = {}", rep.eta);
        for r in &rep.rows {
            assert!(
                r.ratio <= rep.j * (-rep.eta * r.s / rep.n_f).exp() + 1e-12,
                "row at s={} not covered",
                r.s
            );
        }
        // Corollary echo: the q = 2 norm is controlled by the envelope
        // constant times the q = 1 norm.
        let n2 = bmo_norm(&tree, &fam_n, &f, 2.0).unwrap().value;
        assert!(n2 <= rep.q_norm_constant(2.0) * n_f + 1e-9);
    }

    #[test]
    fn pairing_bound_on_atoms() {
        let p = gen_path(5).unwrap();
        let fam = enumerate_balls(&p, 2.0).unwrap();
        let f: Vec<f64> = (0..5).map(|i| (i as f64).powi(2) / 4.0).collect();
        let g = vec![0.5, -0.5, 0.0, 0.0, 0.0];
        let rep = duality_pairing_check(&p, &fam, &f, &g).unwrap();
        assert!(!rep.skipped);
        assert!(rep.bound_holds, "{rep:?}");
        assert!(rep.lp_gap <= 1e-6);
    }

    #[test]
    fn pairing_skips_infeasible() {
        let tree = gen_tree(3, 2).unwrap();
        let fam = enumerate_balls(&tree, 1.0).unwrap();
        let mut g = vec![0.0; tree.len()];
        g[0] = 1.0;
        g[1] = -1.0;
        let rep = duality_pairing_check(&tree, &fam, &g.clone(), &g).unwrap();
        assert!(rep.skipped);
    }

    #[test]
    fn pairing_zero_for_constant_f() {
        let p = gen_path(4).unwrap();
        let fam = enumerate_balls(&p, 2.0).unwrap();
        let g = vec![0.5, -0.5, 0.0, 0.0];
        let rep = duality_pairing_check(&p, &fam, &[2.0; 4], &g).unwrap();
        assert!(rep.pairing.abs() < 1e-12);
        assert!(rep.bound_holds);
    }

    #[test]
    fn default_b0_rounds_to_distance() {
        let tree = gen_tree(3, 4).unwrap();
        // 1.1 * 1 / (1 - 0.75) = 4.4 -> next integer distance 5.
        assert_eq!(default_b0(&tree, 1.0, 0.75), 5.0);
        // r0 = 0: smallest positive distance.
        assert_eq!(default_b0(&tree, 0.0, 0.75), 1.0);
    }
}
