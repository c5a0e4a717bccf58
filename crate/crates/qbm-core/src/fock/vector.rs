//! Matrix-free vectors on a truncated q-Fock space.
//!
//! States are natural-basis coordinate vectors. Creation, annihilation and
//! position operators apply in `O(dim * (modes + depth))` without forming
//! matrices, and the q-inner product applies the Gram structurally (levels
//! up to three need at most the six permutations of `S_3`). Vacuum
//! amplitudes of operator products give moments directly, because the Gram
//! fixes the vacuum row; that makes deep moment sweeps cheap when successive
//! words share prefixes.

use super::Space;
use crate::linalg::C;
use std::sync::Arc;

/// A vector in natural-basis coordinates.
#[derive(Debug, Clone)]
pub struct VState {
    space: Arc<Space>,
    coords: Vec<C>,
}

impl VState {
    pub fn vacuum(space: &Arc<Space>) -> Self {
        let mut coords = vec![C::new(0.0, 0.0); space.dim()];
        coords[0] = C::new(1.0, 0.0);
        Self {
            space: Arc::clone(space),
            coords,
        }
    }

    pub fn from_coords(space: &Arc<Space>, coords: Vec<C>) -> Self {
        assert_eq!(coords.len(), space.dim());
        Self {
            space: Arc::clone(space),
            coords,
        }
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn coords(&self) -> &[C] {
        &self.coords
    }

    /// Coefficient on the vacuum word. For a state built as
    /// `A_1 .. A_k vacuum` this is the moment `phi(A_1 .. A_k)`.
    pub fn vacuum_amplitude(&self) -> C {
        self.coords[0]
    }

    pub fn apply_creation(&self, coeffs: &[f64]) -> Self {
        let mut out = vec![C::new(0.0, 0.0); self.space.dim()];
        apply_creation_into(&self.space, coeffs, &self.coords, &mut out);
        Self::from_coords(&self.space, out)
    }

    pub fn apply_annihilation(&self, coeffs: &[f64]) -> Self {
        let mut out = vec![C::new(0.0, 0.0); self.space.dim()];
        apply_annihilation_into(&self.space, coeffs, &self.coords, &mut out);
        Self::from_coords(&self.space, out)
    }

    /// Applies the position operator `X(f) = a(f) + a*(f)`.
    pub fn apply_position(&self, coeffs: &[f64]) -> Self {
        let mut out = vec![C::new(0.0, 0.0); self.space.dim()];
        apply_creation_into(&self.space, coeffs, &self.coords, &mut out);
        apply_annihilation_into(&self.space, coeffs, &self.coords, &mut out);
        Self::from_coords(&self.space, out)
    }

    /// q-inner product `<self, other>_q` (antilinear in `self`).
    pub fn gram_dot(&self, other: &Self) -> C {
        let gv = gram_apply(&self.space, &other.coords);
        self.coords
            .iter()
            .zip(&gv)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        let n2 = self.gram_dot(self);
        debug_assert!(n2.im.abs() <= 1e-9 * (1.0 + n2.re.abs()));
        n2.re.max(0.0).sqrt()
    }
}

/// `out += a*(f) v` in natural coordinates: prepending each mode in the
/// support of `f`, with the top level truncated away.
pub(crate) fn apply_creation_into(space: &Space, coeffs: &[f64], v: &[C], out: &mut [C]) {
    debug_assert_eq!(coeffs.len(), space.modes());
    for n in 0..space.depth() {
        let off = space.level_offset(n);
        let off_up = space.level_offset(n + 1);
        for rel in 0..space.level_dim(n) {
            let amp = v[off + rel];
            if amp == C::new(0.0, 0.0) {
                continue;
            }
            for (i, &c) in coeffs.iter().enumerate() {
                if c != 0.0 {
                    out[off_up + space.prepend_rel(i, n, rel)] += amp * c;
                }
            }
        }
    }
}

/// `out += a(f) v`: removes one slot at a time with weight
/// `q^{k-1} <f, (slot k letter)>`.
pub(crate) fn apply_annihilation_into(space: &Space, coeffs: &[f64], v: &[C], out: &mut [C]) {
    debug_assert_eq!(coeffs.len(), space.modes());
    let d = space.modes();
    let q = space.q();
    for n in 1..=space.depth() {
        let off = space.level_offset(n);
        let off_down = space.level_offset(n - 1);
        for rel in 0..space.level_dim(n) {
            let amp = v[off + rel];
            if amp == C::new(0.0, 0.0) {
                continue;
            }
            let mut place = d.pow(n as u32 - 1);
            let mut qs = 1.0;
            for _ in 0..n {
                let digit = (rel / place) % d;
                let c = coeffs[digit];
                if c != 0.0 {
                    let removed = (rel / (place * d)) * place + rel % place;
                    out[off_down + removed] += amp * (qs * c);
                }
                qs *= q;
                place /= d;
            }
        }
    }
}

/// Applies the Gram matrix structurally. Levels 0 and 1 are the identity;
/// level `n` sums `q^{inv(sigma)}` over slot permutations, which we expand
/// explicitly for `n <= 3` (the only levels the matrix-free paths need).
pub(crate) fn gram_apply(space: &Space, v: &[C]) -> Vec<C> {
    assert!(
        space.depth() <= 3,
        "structural Gram application is implemented for depth <= 3"
    );
    let d = space.modes();
    let q = space.q();
    let mut out = v.to_vec();
    if space.depth() >= 2 {
        let off = space.level_offset(2);
        for a in 0..d {
            for b in 0..d {
                out[off + a * d + b] = v[off + a * d + b] + v[off + b * d + a] * q;
            }
        }
    }
    if space.depth() >= 3 {
        let off = space.level_offset(3);
        let (q2, q3) = (q * q, q * q * q);
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let idx = |x: usize, y: usize, z: usize| off + (x * d + y) * d + z;
                    out[idx(a, b, c)] = v[idx(a, b, c)]
                        + (v[idx(a, c, b)] + v[idx(b, a, c)]) * q
                        + (v[idx(b, c, a)] + v[idx(c, a, b)]) * q2
                        + v[idx(c, b, a)] * q3;
                }
            }
        }
    }
    out
}

/// Depth-first sweep over all words of length `1..=max_len` in the given
/// generators (position operators). Words sharing a tail share the
/// intermediate states, so the sweep costs one operator application per
/// visited word. `visit` receives the word (indices into `gens`) and the
/// moment `phi(X_{w_1} .. X_{w_r})`.
pub fn moment_sweep(
    space: &Arc<Space>,
    gens: &[Vec<f64>],
    max_len: usize,
    visit: &mut dyn FnMut(&[usize], C),
) {
    // The word acts on the vacuum from the right: extending the word on the
    // LEFT reuses the state, so enumerate suffix-first and report reversed.
    let mut word_rev = Vec::with_capacity(max_len);
    let root = VState::vacuum(space);
    sweep_rec(&root, gens, max_len, &mut word_rev, visit);
}

fn sweep_rec(
    state: &VState,
    gens: &[Vec<f64>],
    remaining: usize,
    word_rev: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize], C),
) {
    if remaining == 0 {
        return;
    }
    for (g, coeffs) in gens.iter().enumerate() {
        let next = state.apply_position(coeffs);
        word_rev.push(g);
        let word: Vec<usize> = word_rev.iter().rev().copied().collect();
        visit(&word, next.vacuum_amplitude());
        sweep_rec(&next, gens, remaining - 1, word_rev, visit);
        word_rev.pop();
    }
}
