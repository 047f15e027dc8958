//! Atom splitting: rewrite an atom supported in a large ball as a short
//! combination of atoms supported in balls of a smaller scale.
//!
//! One pass covers the support ball B = B(c, r) by balls B_j = B(z_j, b' r)
//! around a maximal b'r-separated net {z_j} (b' = (1-beta)/2), forms the
//! partition of unity psi_j = 1_{B_j} / sum_k 1_{B_k}, and splits
//!
//!   a = sum_j phi_j,   phi_j = a psi_j - A_j 1_{B_0},
//!   A_j = (1/mu(B_0)) int a psi_j,   B_0 = B(c, b' r).
//!
//! Each phi_j has integral zero and is supported in B_j u B_0, which fits
//! in a ball of radius strictly below (beta + b') r: via the approximate
//! midpoint property when z_j is far from c, via B(c, r0 + b' r) when
//! r0 bounds their distance, and via 2 B_0 when z_j lies in B_0.  After
//! normalizing by 2 D_{1/b'} D_{beta/b'+1} every piece is an atom, and the
//! pass repeats until all supports have radius at most c.
//!
//! Every pass needs r0 <= beta * (current radius); since only balls with
//! radius above c are split, r0 <= beta * c suffices for the whole run.
//! This is weaker than requiring r0/(1-beta) < c, and it is what makes
//! splitting down to c = 2.5 on unit-distance trees with (r0, beta) =
//! (1, 3/4) possible.

use serde::{Deserialize, Serialize};

use crate::error::{HblError, Result};
use crate::hardy_bmo::{Atom, AtomExponent, AtomicDecomposition};
use crate::numeric::kahan_sum;
use crate::space::geometry::{amp_witness, doubling_constant};
use crate::space::{ball, FiniteSpace};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitParams {
    /// Target scale: all output supports have radius at most c.
    pub c: f64,
    /// Scale bound of the input atom's support ball.
    pub b_big: f64,
    pub beta: f64,
    pub r0: f64,
}

impl SplitParams {
    pub fn beta_prime(&self) -> f64 {
        (1.0 - self.beta) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.5 && self.beta < 1.0) {
            return Err(HblError::InvalidParameter(format!(
                "beta must lie in (1/2, 1), got {}",
                self.beta
            )));
        }
        if self.r0 < 0.0 {
            return Err(HblError::InvalidParameter(format!(
                "r0 must be nonnegative, got {}",
                self.r0
            )));
        }
        if !(self.c > 0.0 && self.c < self.b_big) {
            return Err(HblError::InvalidParameter(format!(
                "need 0 < c < b, got c={}, b={}",
                self.c, self.b_big
            )));
        }
        if self.r0 > self.beta * self.c {
            return Err(HblError::InvalidParameter(format!(
                "need r0 <= beta * c for the support rebalancing, got {} > {}",
                self.r0,
                self.beta * self.c
            )));
        }
        Ok(())
    }

    /// Upper bound on the number of passes until every support has radius
    /// at most c.
    pub fn pass_cap(&self) -> usize {
        let shrink = self.beta + self.beta_prime();
        ((self.c / self.b_big).ln() / shrink.ln()).ceil() as usize + 2
    }
}

/// Coefficient bound per pass: 2 D_{1/b', b} D_{beta/b' + 1, b}.
pub fn split_coefficient_bound(space: &FiniteSpace, params: &SplitParams) -> Result<f64> {
    let bp = params.beta_prime();
    let d1 = doubling_constant(space, (1.0 / bp).max(1.0), params.b_big)?;
    let d2 = doubling_constant(space, (params.beta / bp + 1.0).max(1.0), params.b_big)?;
    Ok(2.0 * d1 * d2)
}

/// A priori bound on the number of output terms: the per-pass net size is
/// at most the packing constant D_{2/b' + 1, b} (disjoint b'r/2-balls
/// around net points inside the (1 + b'/2)-dilate), raised to the pass cap.
pub fn split_term_bound(space: &FiniteSpace, params: &SplitParams) -> Result<usize> {
    let bp = params.beta_prime();
    let packing = doubling_constant(space, 2.0 / bp + 1.0, params.b_big)?;
    let per_pass = packing.floor().max(1.0) as usize;
    Ok(per_pass.saturating_pow(params.pass_cap() as u32))
}

/// Split one atom into pieces supported at scale b' relative to its ball.
fn split_once(
    space: &FiniteSpace,
    atom: &Atom,
    params: &SplitParams,
    lambda_bound: f64,
) -> Result<Vec<Atom>> {
    let b = &atom.support;
    let r = b.radius;
    let bp = params.beta_prime();
    let sep = bp * r;
    let dense = atom.to_dense(space.len());

    // Maximal sep-separated net over the support members, id order.
    let mut net: Vec<usize> = Vec::new();
    for &cand in &b.members {
        if net.iter().all(|&z| space.dist(cand, z) >= sep) {
            net.push(cand);
        }
    }

    // Coverage counts of the partition of unity.
    let coverage: Vec<usize> = b
        .members
        .iter()
        .map(|&x| net.iter().filter(|&&z| space.dist(z, x) < sep).count())
        .collect();
    debug_assert!(coverage.iter().all(|&c| c >= 1));

    let b0 = ball(space, b.center, sep)?;
    let mu_b0 = b0.mass(space);

    let mut pieces = Vec::with_capacity(net.len());
    for &z in &net {
        // a * psi_j and its integral.
        let mut weighted: Vec<(usize, f64)> = Vec::new();
        for (i, &x) in b.members.iter().enumerate() {
            if space.dist(z, x) < sep {
                weighted.push((x, dense[x] / coverage[i] as f64));
            }
        }
        let integral = kahan_sum(weighted.iter().map(|&(x, v)| space.weight(x) * v));
        let a_j = integral / mu_b0;

        // Support ball for B_j u B_0.
        let rho = space.dist(b.center, z);
        let support = if rho < sep {
            ball(space, b.center, 2.0 * sep)?
        } else if rho <= params.r0 {
            ball(space, b.center, params.r0 + sep)?
        } else {
            let (witness, reach) = amp_witness(space, b.center, z);
            if reach >= params.beta * rho {
                return Err(HblError::AmpFailure {
                    x: space.id(b.center).to_string(),
                    y: space.id(z).to_string(),
                });
            }
            let r_amp = (reach + params.beta * rho) / 2.0;
            ball(space, witness, r_amp + sep)?
        };

        let mut values = vec![0.0; support.members.len()];
        let index_of: std::collections::HashMap<usize, usize> = support
            .members
            .iter()
            .enumerate()
            .map(|(i, &m)| (m, i))
            .collect();
        for &(x, v) in &weighted {
            let slot = index_of.get(&x).ok_or_else(|| {
                HblError::NonContraction(format!(
                    "piece support leaked out of its ball at point {}",
                    space.id(x)
                ))
            })?;
            values[*slot] += v / lambda_bound;
        }
        for &x in &b0.members {
            let slot = index_of.get(&x).ok_or_else(|| {
                HblError::NonContraction(format!(
                    "central ball leaked out of the piece ball at point {}",
                    space.id(x)
                ))
            })?;
            values[*slot] -= a_j / lambda_bound;
        }
        pieces.push(Atom {
            support,
            values,
            exponent: atom.exponent,
        });
    }
    Ok(pieces)
}

/// Split an atom on a ball of radius at most b into a decomposition whose
/// supports all have radius at most c, iterating the one-pass construction.
///
/// The result reconstructs the input exactly (up to floating-point
/// roundoff); every output passes `validate_atom`; coefficients are
/// bounded by the computed per-pass constant raised to the pass count.
pub fn split_atom(
    space: &FiniteSpace,
    atom: &Atom,
    params: &SplitParams,
) -> Result<AtomicDecomposition> {
    params.validate()?;
    if atom.exponent != AtomExponent::Infinity {
        return Err(HblError::InvalidParameter(
            "splitting is implemented for r = infinity atoms only".into(),
        ));
    }
    if atom.support.radius > params.b_big {
        return Err(HblError::InvalidParameter(format!(
            "atom support radius {} exceeds the scale bound {}",
            atom.support.radius, params.b_big
        )));
    }
    let lambda_bound = split_coefficient_bound(space, params)?;
    let cap = params.pass_cap();

    let mut terms: Vec<(f64, Atom)> = vec![(1.0, atom.clone())];
    for _pass in 0..=cap {
        if terms.iter().all(|(_, a)| a.support.radius <= params.c) {
            return Ok(AtomicDecomposition {
                terms,
                scale: params.c,
            });
        }
        let mut next = Vec::with_capacity(terms.len());
        for (lambda, a) in terms {
            if a.support.radius <= params.c {
                next.push((lambda, a));
            } else {
                for piece in split_once(space, &a, params, lambda_bound)? {
                    next.push((lambda * lambda_bound, piece));
                }
            }
        }
        terms = next;
    }
    Err(HblError::NonContraction(format!(
        "support radius still above {} after {} passes",
        params.c, cap
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy_bmo::validate_atom;
    use crate::space::generators::gen_tree;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_atom(space: &FiniteSpace, center: usize, radius: f64, seed: u64) -> Atom {
        let support = ball(space, center, radius).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = support
            .members
            .iter()
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        // Center to weighted mean zero, then scale to the size bound.
        let mass = support.mass(space);
        let mean = kahan_sum(
            support
                .members
                .iter()
                .zip(&values)
                .map(|(&m, v)| space.weight(m) * v),
        ) / mass;
        for v in values.iter_mut() {
            *v -= mean;
        }
        let max = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max > 0.0 {
            let scale = 1.0 / (mass * max);
            for v in values.iter_mut() {
                *v *= scale;
            }
        }
        Atom {
            support,
            values,
            exponent: AtomExponent::Infinity,
        }
    }

    fn tree_params() -> SplitParams {
        SplitParams {
            c: 2.5,
            b_big: 4.0,
            beta: 0.75,
            r0: 1.0,
        }
    }

    #[test]
    fn atom_already_small_passes_through() {
        let tree = gen_tree(3, 5).unwrap();
        let atom = random_atom(&tree, 0, 2.0, 1);
        let dec = split_atom(&tree, &atom, &tree_params()).unwrap();
        assert_eq!(dec.terms.len(), 1);
        assert_eq!(dec.terms[0].0, 1.0);
    }

    #[test]
    fn splits_radius3_atoms_on_tree() {
        let tree = gen_tree(3, 5).unwrap();
        let params = tree_params();
        let lambda_bound = split_coefficient_bound(&tree, &params).unwrap();
        let term_bound = split_term_bound(&tree, &params).unwrap();
        let cap = params.pass_cap();
        for seed in 0..10u64 {
            let atom = random_atom(&tree, (seed as usize * 13) % tree.len(), 3.0, seed);
            assert!(validate_atom(&tree, &atom).is_empty());
            let dec = split_atom(&tree, &atom, &params).unwrap();
            assert!(dec.max_support_radius() <= params.c);
            assert!(dec.terms.len() <= term_bound);
            let coeff_cap = lambda_bound.powi(cap as i32);
            for (lambda, piece) in &dec.terms {
                assert!(lambda.abs() <= coeff_cap);
                let viols = validate_atom(&tree, piece);
                assert!(viols.is_empty(), "seed {seed}: {viols:?}");
            }
            let err = dec.reconstruction_error(&tree, &atom.to_dense(tree.len()));
            assert!(err <= 1e-9, "seed {seed}: reconstruction error {err}");
        }
    }

    #[test]
    fn rejects_infeasible_targets() {
        let tree = gen_tree(3, 5).unwrap();
        let atom = random_atom(&tree, 0, 3.0, 2);
        // r0 > beta * c: the support rebalancing cannot terminate.
        let params = SplitParams {
            c: 1.0,
            b_big: 4.0,
            beta: 0.75,
            r0: 1.0,
        };
        assert!(split_atom(&tree, &atom, &params).is_err());
        // c >= b is rejected outright.
        let params = SplitParams {
            c: 5.0,
            b_big: 4.0,
            beta: 0.75,
            r0: 1.0,
        };
        assert!(split_atom(&tree, &atom, &params).is_err());
    }

    #[test]
    fn finite_r_atoms_not_split() {
        let tree = gen_tree(3, 5).unwrap();
        let mut atom = random_atom(&tree, 0, 3.0, 3);
        atom.exponent = AtomExponent::Finite(2.0);
        assert!(split_atom(&tree, &atom, &tree_params()).is_err());
    }
}
