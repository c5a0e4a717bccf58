//! Matrix-free operator expressions: sums of scaled products of position
//! operators.
//!
//! Iterated-integral sums over a grid with `d` increments live naturally on
//! spaces whose dense dimension (`~d^depth`) is out of reach, but every
//! operator they involve is a short product of position operators `X(f)`.
//! An [`OpExpr`] keeps that structure: a list of terms `c * X(f_1) .. X(f_k)`.
//! Application to a natural-basis vector costs one sweep per factor, the
//! q-adjoint just reverses each product (position operators with real
//! loadings are q-self-adjoint), and operator norms come from block power
//! iteration on `A* A` in the q-geometry, where `A*` is again an expression.

use super::vector::{apply_annihilation_into, apply_creation_into, gram_apply, VState};
use super::Space;
use crate::linalg::{self, CMat, C};
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A real one-particle vector `f = sum_i weights[i] e_i`; `X(f)` is its
/// position operator.
#[derive(Debug, Clone)]
pub struct PosComb {
    weights: Vec<f64>,
}

impl PosComb {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// Basis vector `e_i` scaled by `w`.
    pub fn mode(modes: usize, i: usize, w: f64) -> Self {
        let mut weights = vec![0.0; modes];
        weights[i] = w;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Sum of scaled products of position operators. The empty product is the
/// identity.
#[derive(Debug, Clone)]
pub struct OpExpr {
    space: Arc<Space>,
    terms: Vec<(C, Vec<PosComb>)>,
}

impl OpExpr {
    pub fn zero(space: &Arc<Space>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: Vec::new(),
        }
    }

    pub fn identity(space: &Arc<Space>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: vec![(C::new(1.0, 0.0), Vec::new())],
        }
    }

    pub fn position(space: &Arc<Space>, f: PosComb) -> Self {
        Self::term(space, C::new(1.0, 0.0), vec![f])
    }

    pub fn term(space: &Arc<Space>, coeff: C, factors: Vec<PosComb>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: vec![(coeff, factors)],
        }
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[(C, Vec<PosComb>)] {
        &self.terms
    }

    pub fn push_term(&mut self, coeff: C, factors: Vec<PosComb>) {
        self.terms.push((coeff, factors));
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(C::new(-1.0, 0.0)))
    }

    pub fn scaled(&self, c: C) -> Self {
        Self {
            space: Arc::clone(&self.space),
            terms: self.terms.iter().map(|(a, f)| (*a * c, f.clone())).collect(),
        }
    }

    /// Product; term count multiplies, so keep factors short.
    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, fa) in &self.terms {
            for (cb, fb) in &other.terms {
                let mut f = fa.clone();
                f.extend_from_slice(fb);
                terms.push((*ca * *cb, f));
            }
        }
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }

    /// q-adjoint: conjugate coefficients, reverse each product.
    pub fn adjoint(&self) -> Self {
        Self {
            space: Arc::clone(&self.space),
            terms: self
                .terms
                .iter()
                .map(|(c, f)| {
                    let mut rev = f.clone();
                    rev.reverse();
                    (c.conj(), rev)
                })
                .collect(),
        }
    }

    /// Applies the expression to natural-basis coordinates. Terms evaluate
    /// in parallel and reduce in term order.
    pub fn apply(&self, v: &[C]) -> Vec<C> {
        let dim = self.space.dim();
        assert_eq!(v.len(), dim);
        let per_term = par::map_slice(&self.terms, |(coeff, factors)| {
            let mut cur = v.to_vec();
            let mut next = vec![C::new(0.0, 0.0); dim];
            for f in factors.iter().rev() {
                next.iter_mut().for_each(|x| *x = C::new(0.0, 0.0));
                apply_creation_into(&self.space, f.weights(), &cur, &mut next);
                apply_annihilation_into(&self.space, f.weights(), &cur, &mut next);
                std::mem::swap(&mut cur, &mut next);
            }
            (*coeff, cur)
        });
        let mut out = vec![C::new(0.0, 0.0); dim];
        for (coeff, term) in per_term {
            for (o, t) in out.iter_mut().zip(term) {
                *o += t * coeff;
            }
        }
        out
    }

    pub fn apply_state(&self, v: &VState) -> VState {
        VState::from_coords(&self.space, self.apply(v.coords()))
    }

    /// Vacuum expectation.
    pub fn phi(&self) -> C {
        self.apply_state(&VState::vacuum(&self.space)).vacuum_amplitude()
    }

    /// `L2` norm under the vacuum state.
    pub fn l2_norm(&self) -> f64 {
        self.apply_state(&VState::vacuum(&self.space)).norm()
    }

    /// Lower estimate of the operator norm by block power iteration on
    /// `A* A` in the q-geometry. Deterministic for a fixed seed.
    pub fn op_norm_estimate(&self, opts: &NormOptions) -> NormEstimate {
        let dim = self.space.dim();
        let adj = self.adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let b = opts.block.max(1).min(dim);
        let mut block: Vec<Vec<C>> = (0..b)
            .map(|_| {
                (0..dim)
                    .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect()
            })
            .collect();
        orthonormalize(&self.space, &mut block);
        let mut estimate = 0.0f64;
        let mut iterations = 0;
        let mut converged = false;
        for it in 1..=opts.max_iters {
            iterations = it;
            let images: Vec<Vec<C>> = par::map_slice(&block, |v| adj.apply(&self.apply(v)));
            // Rayleigh-Ritz on the block: S_ij = <v_i, (A*A) v_j>_q.
            let s = CMat::from_fn(b, b, |i, j| {
                let gj = gram_apply(&self.space, &images[j]);
                block[i]
                    .iter()
                    .zip(&gj)
                    .map(|(a, x)| a.conj() * x)
                    .sum::<C>()
            });
            let lam = linalg::hermitian_eigenvalues(&s)
                .into_iter()
                .fold(0.0f64, f64::max);
            let new_est = lam.max(0.0).sqrt();
            let rel = (new_est - estimate).abs() / new_est.max(1e-300);
            estimate = estimate.max(new_est);
            if rel < opts.rel_tol && it > 1 {
                converged = true;
                break;
            }
            block = images;
            orthonormalize(&self.space, &mut block);
        }
        NormEstimate {
            value: estimate,
            iterations,
            converged,
        }
    }
}

/// Modified Gram-Schmidt in the q-inner product; vectors that collapse get
/// replaced by deterministic basis vectors.
fn orthonormalize(space: &Arc<Space>, block: &mut [Vec<C>]) {
    let dim = space.dim();
    for i in 0..block.len() {
        for j in 0..i {
            let gj = gram_apply(space, &block[i]);
            let ip: C = block[j].iter().zip(&gj).map(|(a, x)| a.conj() * x).sum();
            let (bj, bi) = {
                let (lo, hi) = block.split_at_mut(i);
                (&lo[j], &mut hi[0])
            };
            for (x, y) in bi.iter_mut().zip(bj) {
                *x -= *y * ip;
            }
        }
        let norm = VState::from_coords(space, block[i].clone()).norm();
        if norm < 1e-12 {
            block[i].iter_mut().for_each(|x| *x = C::new(0.0, 0.0));
            block[i][i % dim] = C::new(1.0, 0.0);
        } else {
            let inv = 1.0 / norm;
            block[i].iter_mut().for_each(|x| *x *= inv);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormOptions {
    pub block: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            block: 3,
            max_iters: 60,
            rel_tol: 1e-9,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn sample_expr(space: &Arc<Space>) -> OpExpr {
        // 0.7 X(f) X(g) - (0.2 + 0.1i) X(h) + 0.4 I
        let f = PosComb::new(vec![0.6, 0.0, 0.8]);
        let g = PosComb::new(vec![0.0, 1.0, 0.0]);
        let h = PosComb::new(vec![0.3, -0.5, 0.1]);
        let mut e = OpExpr::term(space, c(0.7, 0.0), vec![f, g]);
        e.push_term(c(-0.2, -0.1), vec![h]);
        e.push_term(c(0.4, 0.0), Vec::new());
        e
    }

    /// Materializes the expression by applying it to natural basis vectors,
    /// whitens, and compares against the dense operator algebra.
    #[test]
    fn expression_matches_dense_composition() {
        let space = Space::new(0.44, 3, 2).unwrap();
        let e = sample_expr(&space);
        let dim = space.dim();
        let mut nat = CMat::zeros(dim, dim);
        for j in 0..dim {
            let mut v = vec![c(0.0, 0.0); dim];
            v[j] = c(1.0, 0.0);
            let col = e.apply(&v);
            for i in 0..dim {
                nat[(i, j)] = col[i];
            }
        }
        let whitened = space.whiten_matrix(&nat);
        let xf = space.position_op(&[0.6, 0.0, 0.8]).unwrap();
        let xg = space.position_op(&[0.0, 1.0, 0.0]).unwrap();
        let xh = space.position_op(&[0.3, -0.5, 0.1]).unwrap();
        let dense = &(&(&xf * &xg).scaled(c(0.7, 0.0)) - &xh.scaled(c(0.2, 0.1)))
            + &space.identity_op().scaled(c(0.4, 0.0));
        assert!(linalg::max_abs(&(&whitened - dense.matrix())) < 1e-11);
    }

    #[test]
    fn adjoint_is_the_q_adjoint() {
        let space = Space::new(0.8, 3, 2).unwrap();
        let e = sample_expr(&space);
        let ea = e.adjoint();
        // <u, A v>_q = <A* u, v>_q on a few deterministic vectors.
        let dim = space.dim();
        let mk = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            VState::from_coords(
                &space,
                (0..dim)
                    .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
            )
        };
        for s in 0..3u64 {
            let u = mk(s);
            let v = mk(s + 100);
            let lhs = u.gram_dot(&e.apply_state(&v));
            let rhs = ea.apply_state(&u).gram_dot(&v);
            assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-11);
            assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-11);
        }
    }

    #[test]
    fn phi_and_l2_match_dense() {
        let space = Space::new(0.65, 3, 2).unwrap();
        let e = sample_expr(&space);
        let xf = space.position_op(&[0.6, 0.0, 0.8]).unwrap();
        let xg = space.position_op(&[0.0, 1.0, 0.0]).unwrap();
        let xh = space.position_op(&[0.3, -0.5, 0.1]).unwrap();
        let dense = &(&(&xf * &xg).scaled(c(0.7, 0.0)) - &xh.scaled(c(0.2, 0.1)))
            + &space.identity_op().scaled(c(0.4, 0.0));
        let p = e.phi();
        assert_abs_diff_eq!(p.re, dense.phi().re, epsilon = 1e-12);
        assert_abs_diff_eq!(p.im, dense.phi().im, epsilon = 1e-12);
        assert_abs_diff_eq!(e.l2_norm(), dense.l2_norm(), epsilon = 1e-11);
    }

    #[test]
    fn norm_estimate_approaches_dense_norm_from_below() {
        let space = Space::new(0.5, 3, 2).unwrap();
        let e = sample_expr(&space);
        let xf = space.position_op(&[0.6, 0.0, 0.8]).unwrap();
        let xg = space.position_op(&[0.0, 1.0, 0.0]).unwrap();
        let xh = space.position_op(&[0.3, -0.5, 0.1]).unwrap();
        let dense = &(&(&xf * &xg).scaled(c(0.7, 0.0)) - &xh.scaled(c(0.2, 0.1)))
            + &space.identity_op().scaled(c(0.4, 0.0));
        let truth = dense.op_norm();
        let est = e.op_norm_estimate(&NormOptions {
            block: 4,
            max_iters: 300,
            rel_tol: 1e-12,
            seed: 11,
        });
        assert!(est.value <= truth + 1e-9, "{} vs {}", est.value, truth);
        assert_abs_diff_eq!(est.value, truth, epsilon = 1e-7);
    }

    #[test]
    fn norm_estimate_is_seed_stable() {
        let space = Space::new(0.5, 2, 2).unwrap();
        let e = OpExpr::position(&space, PosComb::new(vec![0.7, 0.7]));
        let opts = NormOptions::default();
        let a = e.op_norm_estimate(&opts).value;
        let b = e.op_norm_estimate(&opts).value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn product_expression_composes_applications() {
        let space = Space::new(0.35, 2, 3).unwrap();
        let a = OpExpr::position(&space, PosComb::new(vec![1.0, 0.0]));
        let b = OpExpr::position(&space, PosComb::new(vec![0.4, 0.6]));
        let ab = a.mul(&b);
        let v = VState::vacuum(&space);
        let direct = ab.apply_state(&v);
        let composed = a.apply_state(&b.apply_state(&v));
        let diff: f64 = direct
            .coords()
            .iter()
            .zip(composed.coords())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-13);
    }
}
