//! Word-indexed vacuum vectors for position-product expressions.
//!
//! The coordinate path in the core crate allocates the full truncated
//! Fock space, which rules out chaos degree four over 64 base cells. An
//! expression with a handful of factors only ever reaches a sparse set
//! of words, so this evaluator tracks amplitudes word by word and pays
//! only for what the expression touches. Results are exact at every
//! degree the expression reaches; there is no truncation.

use num_complex::Complex64 as C;
use qbm_core::fock::expr::OpExpr;
use std::collections::HashMap;

/// Letters per word the packed encoding can hold.
const MAX_LEN: usize = 7;

const ZERO: C = C::new(0.0, 0.0);

fn pack(word: &[u8]) -> u64 {
    debug_assert!(word.len() <= MAX_LEN);
    let mut key = (word.len() as u64) << 56;
    for (i, &m) in word.iter().enumerate() {
        key |= (m as u64) << (8 * i);
    }
    key
}

fn unpack(key: u64) -> Vec<u8> {
    let len = (key >> 56) as usize;
    (0..len).map(|i| (key >> (8 * i)) as u8).collect()
}

/// One position factor `a(f) + a*(f)`: creation prepends a letter,
/// annihilation removes slot `k` with weight `q^(k-1) <f, letter>`,
/// matching the coordinate kernels.
fn apply_position(q: f64, f: &[f64], v: &HashMap<u64, C>) -> HashMap<u64, C> {
    let mut out: HashMap<u64, C> = HashMap::with_capacity(v.len() * 2);
    for (&key, &amp) in v {
        let w = unpack(key);
        assert!(w.len() < MAX_LEN, "expression exceeds {MAX_LEN} letters");
        let mut nw = Vec::with_capacity(w.len() + 1);
        for (m, &c) in f.iter().enumerate() {
            if c != 0.0 {
                nw.clear();
                nw.push(m as u8);
                nw.extend_from_slice(&w);
                *out.entry(pack(&nw)).or_insert(ZERO) += amp * c;
            }
        }
        let mut qs = 1.0;
        for k in 0..w.len() {
            let c = f[w[k] as usize];
            if c != 0.0 {
                nw.clear();
                nw.extend_from_slice(&w[..k]);
                nw.extend_from_slice(&w[k + 1..]);
                *out.entry(pack(&nw)).or_insert(ZERO) += amp * (qs * c);
            }
            qs *= q;
        }
    }
    out
}

/// Vacuum vector of `expr` as packed-word amplitudes.
pub fn vacuum_words(expr: &OpExpr) -> HashMap<u64, C> {
    let q = expr.space().q();
    let modes = expr.space().modes();
    let mut total: HashMap<u64, C> = HashMap::new();
    for (coeff, factors) in expr.terms() {
        let mut v = HashMap::from([(pack(&[]), C::new(1.0, 0.0))]);
        for f in factors.iter().rev() {
            debug_assert_eq!(f.weights().len(), modes);
            v = apply_position(q, f.weights(), &v);
        }
        for (key, amp) in v {
            *total.entry(key).or_insert(ZERO) += amp * coeff;
        }
    }
    total
}

/// q-inner product of two words over orthonormal letters: sum over slot
/// matchings weighted by `q^(inversions)`, expanded by peeling the first
/// letter of `a`.
fn word_inner(q: f64, a: &[u8], b: &[u8]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let Some((&head, rest_a)) = a.split_first() else {
        return 1.0;
    };
    let mut total = 0.0;
    let mut qs = 1.0;
    for k in 0..b.len() {
        if b[k] == head {
            let mut rest_b = b.to_vec();
            rest_b.remove(k);
            total += qs * word_inner(q, rest_a, &rest_b);
        }
        qs *= q;
    }
    total
}

/// Vacuum amplitude, the state value of the expression that produced `v`.
pub fn state_value(v: &HashMap<u64, C>) -> C {
    v.get(&pack(&[])).copied().unwrap_or(ZERO)
}

/// `L2` norm of a word vector. Words with different letter multisets are
/// orthogonal, so the Gram sum runs block by block over sorted keys.
pub fn l2_norm_words(q: f64, v: &HashMap<u64, C>) -> f64 {
    let mut blocks: HashMap<u64, Vec<(Vec<u8>, C)>> = HashMap::new();
    for (&key, &amp) in v {
        if amp == ZERO {
            continue;
        }
        let w = unpack(key);
        let mut sorted = w.clone();
        sorted.sort_unstable();
        blocks.entry(pack(&sorted)).or_default().push((w, amp));
    }
    let mut total = 0.0;
    for members in blocks.values() {
        for (i, (wa, aa)) in members.iter().enumerate() {
            for (wb, ab) in &members[i..] {
                let g = word_inner(q, wa, wb);
                if g == 0.0 {
                    continue;
                }
                let cross = (aa.conj() * ab).re * g;
                total += if wa == wb { cross } else { 2.0 * cross };
            }
        }
    }
    total.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use qbm_core::fock::expr::PosComb;
    use qbm_core::fock::Space;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn repeated_word_gram_matches_inversion_count() {
        // <abab, abab> enumerates four slot matchings with inversion
        // counts 0, 3, 3, 4.
        for &q in &[0.0f64, 0.4, 0.9] {
            let w = [3u8, 7, 3, 7];
            let v = HashMap::from([(pack(&w), C::new(1.0, 0.0))]);
            let want = (1.0 + 2.0 * q.powi(3) + q.powi(4)).sqrt();
            assert!((l2_norm_words(q, &v) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_coordinate_path_through_depth_three() {
        // Up to three factors a dense depth-3 space evaluates exactly, so
        // the two paths must agree to rounding.
        for (trial, &q) in [0.0, 0.37, 0.8].iter().enumerate() {
            let space = Space::new(q, 5, 3).unwrap();
            let mut rng = StdRng::seed_from_u64(91 + trial as u64);
            for _ in 0..8 {
                let mut expr = OpExpr::zero(&space);
                for _ in 0..rng.gen_range(1..=3) {
                    let nf = rng.gen_range(1..=3usize);
                    let factors = (0..nf)
                        .map(|_| {
                            let w = (0..5)
                                .map(|_| {
                                    if rng.gen_bool(0.3) {
                                        0.0
                                    } else {
                                        rng.gen_range(-1.0..1.0)
                                    }
                                })
                                .collect();
                            PosComb::new(w)
                        })
                        .collect();
                    let coeff = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    expr.push_term(coeff, factors);
                }
                let words = vacuum_words(&expr);
                assert!((l2_norm_words(q, &words) - expr.l2_norm()).abs() < 1e-11);
                assert!((state_value(&words) - expr.phi()).norm() < 1e-11);
            }
        }
    }
}
