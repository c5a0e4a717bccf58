//! Symbolic polynomial engine over a jointly q-Gaussian family.
//!
//! A [`WordPoly`] is a complex linear combination of words in the generators
//! `Y_0, .., Y_{n-1}` of a [`GaussianModel`]. Products concatenate words, the
//! adjoint reverses them (generators are self-adjoint), and the state `phi`
//! evaluates each word through the exact pair-partition formula of the parent
//! module. Nothing here is truncated or represented on a finite-dimensional
//! space, which makes this engine the ground truth for expectations, L2
//! geometry, conditional expectations and the chaos-degree scaling operator.

use super::{q_moment, CovarianceSpec, PairingError};
use crate::linalg::{self, CMat, C};
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

/// A q-Gaussian family: covariance data plus the deformation parameter.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    spec: CovarianceSpec,
    q: f64,
}

impl GaussianModel {
    pub fn new(spec: CovarianceSpec, q: f64) -> Result<Self, PairingError> {
        // The representation theory behind the rest of the crate needs
        // 0 <= q < 1; the combinatorial layer below would accept any q.
        assert!(
            (0.0..1.0).contains(&q),
            "deformation parameter q = {q} must lie in [0, 1)"
        );
        Ok(Self { spec, q })
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn cov(&self, a: usize, b: usize) -> f64 {
        self.spec.cov(a, b)
    }

    /// Moment of a single word.
    pub fn moment(&self, word: &[usize]) -> Result<f64, PairingError> {
        q_moment(word, &self.spec, self.q)
    }
}

/// Element of the *-algebra generated by the family: a finite complex
/// combination of words (products of generators).
#[derive(Debug, Clone, PartialEq)]
pub struct WordPoly {
    terms: BTreeMap<Vec<usize>, C>,
}

impl WordPoly {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn one() -> Self {
        Self::scalar(C::new(1.0, 0.0))
    }

    pub fn scalar(c: C) -> Self {
        let mut terms = BTreeMap::new();
        if c != C::new(0.0, 0.0) {
            terms.insert(Vec::new(), c);
        }
        Self { terms }
    }

    pub fn generator(label: usize) -> Self {
        Self::word(&[label])
    }

    /// The single word `Y_{w_0} .. Y_{w_{r-1}}` with coefficient 1.
    pub fn word(labels: &[usize]) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(labels.to_vec(), C::new(1.0, 0.0));
        Self { terms }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], C)> {
        self.terms.iter().map(|(w, &c)| (w.as_slice(), c))
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn max_word_len(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    fn insert(&mut self, word: Vec<usize>, c: C) {
        if c == C::new(0.0, 0.0) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(word) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v == C::new(0.0, 0.0) {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn scaled(&self, c: C) -> Self {
        let mut out = Self::zero();
        for (w, v) in &self.terms {
            out.insert(w.clone(), *v * c);
        }
        out
    }

    /// Drops terms with coefficient magnitude at most `tol`.
    pub fn compress(&self, tol: f64) -> Self {
        let mut out = Self::zero();
        for (w, v) in &self.terms {
            if v.norm() > tol {
                out.insert(w.clone(), *v);
            }
        }
        out
    }

    /// Adjoint: words reverse, coefficients conjugate.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (w, v) in &self.terms {
            let mut rev = w.clone();
            rev.reverse();
            out.insert(rev, v.conj());
        }
        out
    }

    /// Largest coefficient magnitude of the difference; a cheap structural
    /// metric for tests.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let mut keys: Vec<&Vec<usize>> = self.terms.keys().collect();
        keys.extend(other.terms.keys());
        keys.sort();
        keys.dedup();
        let zero = C::new(0.0, 0.0);
        keys.iter()
            .map(|k| {
                let a = self.terms.get(*k).copied().unwrap_or(zero);
                let b = other.terms.get(*k).copied().unwrap_or(zero);
                (a - b).norm()
            })
            .fold(0.0, f64::max)
    }

    /// The state `phi` applied termwise through the moment formula.
    pub fn phi(&self, model: &GaussianModel) -> Result<C, PairingError> {
        let mut acc = C::new(0.0, 0.0);
        for (w, c) in &self.terms {
            acc += *c * model.moment(w)?;
        }
        Ok(acc)
    }

    /// Inner product `<A, B> = phi(A B*)`: linear in `A`, antilinear in `B`.
    pub fn inner(&self, other: &Self, model: &GaussianModel) -> Result<C, PairingError> {
        (self * &other.adjoint()).phi(model)
    }

    /// `L2` norm under the state.
    pub fn l2_norm(&self, model: &GaussianModel) -> Result<f64, PairingError> {
        let n2 = self.inner(self, model)?;
        debug_assert!(n2.im.abs() <= 1e-9 * (1.0 + n2.re.abs()), "norm^2 must be real");
        Ok(n2.re.max(0.0).sqrt())
    }

    /// Expansion in the Wick (chaos) basis. Keys are tensor words `xi`, and
    /// the Wick word `W(xi)` of degree `m` is orthogonal to every degree
    /// other than `m`. Left multiplication by a generator obeys
    ///
    /// ```text
    /// Y_a W(h_1 .. h_m) = W(a h_1 .. h_m)
    ///                     + sum_k q^{k-1} cov(a, h_k) W(.. h_{k-1} h_{k+1} ..)
    /// ```
    fn to_wick(&self, model: &GaussianModel) -> BTreeMap<Vec<usize>, C> {
        let mut out: BTreeMap<Vec<usize>, C> = BTreeMap::new();
        for (word, c) in &self.terms {
            let mut cur: BTreeMap<Vec<usize>, C> = BTreeMap::new();
            cur.insert(Vec::new(), *c);
            for &a in word.iter().rev() {
                cur = wick_left_mul(a, &cur, model);
            }
            for (w, v) in cur {
                merge(&mut out, w, v);
            }
        }
        out
    }

    fn from_wick(wick: &BTreeMap<Vec<usize>, C>, model: &GaussianModel) -> Self {
        let mut cache: BTreeMap<Vec<usize>, WordPoly> = BTreeMap::new();
        let mut out = Self::zero();
        for (xi, c) in wick {
            let expanded = wick_word_as_poly(xi, model, &mut cache);
            out = &out + &expanded.scaled(*c);
        }
        out
    }

    /// Scales the chaos-degree-`m` component by `factor(m)`.
    pub fn chaos_scaled(&self, model: &GaussianModel, factor: impl Fn(usize) -> f64) -> Self {
        let mut wick = self.to_wick(model);
        for (w, c) in wick.iter_mut() {
            *c *= factor(w.len());
        }
        Self::from_wick(&wick, model)
    }

    /// The chaos-degree scaling operator with factor `q^m` on degree `m`:
    /// the second quantization of `q * Id`. Fixes scalars, multiplies each
    /// generator by `q`, preserves `phi`, and contracts the `L2` norm.
    pub fn gamma_q(&self, model: &GaussianModel) -> Self {
        let q = model.q();
        self.chaos_scaled(model, |m| q.powi(m as i32))
    }
}

fn merge(map: &mut BTreeMap<Vec<usize>, C>, w: Vec<usize>, c: C) {
    use std::collections::btree_map::Entry;
    if c == C::new(0.0, 0.0) {
        return;
    }
    match map.entry(w) {
        Entry::Vacant(e) => {
            e.insert(c);
        }
        Entry::Occupied(mut e) => {
            let v = *e.get() + c;
            if v == C::new(0.0, 0.0) {
                e.remove();
            } else {
                *e.get_mut() = v;
            }
        }
    }
}

fn wick_left_mul(
    a: usize,
    wick: &BTreeMap<Vec<usize>, C>,
    model: &GaussianModel,
) -> BTreeMap<Vec<usize>, C> {
    let q = model.q();
    let mut out = BTreeMap::new();
    for (w, c) in wick {
        let mut created = Vec::with_capacity(w.len() + 1);
        created.push(a);
        created.extend_from_slice(w);
        merge(&mut out, created, *c);
        let mut qk = 1.0;
        for (k, &h) in w.iter().enumerate() {
            let cov = model.cov(a, h);
            if cov != 0.0 {
                let mut removed = w.clone();
                removed.remove(k);
                merge(&mut out, removed, *c * qk * cov);
            }
            qk *= q;
        }
    }
    out
}

/// `W(xi)` expanded back into products of generators, by inverting the
/// left-multiplication rule.
fn wick_word_as_poly(
    xi: &[usize],
    model: &GaussianModel,
    cache: &mut BTreeMap<Vec<usize>, WordPoly>,
) -> WordPoly {
    if let Some(hit) = cache.get(xi) {
        return hit.clone();
    }
    let poly = if xi.is_empty() {
        WordPoly::one()
    } else {
        let (a, rest) = (xi[0], &xi[1..]);
        let mut acc = &WordPoly::generator(a) * &wick_word_as_poly(rest, model, cache);
        let q = model.q();
        let mut qk = 1.0;
        for k in 0..rest.len() {
            let cov = model.cov(a, rest[k]);
            if cov != 0.0 {
                let mut removed = rest.to_vec();
                removed.remove(k);
                let sub = wick_word_as_poly(&removed, model, cache);
                acc = &acc - &sub.scaled(C::new(qk * cov, 0.0));
            }
            qk *= q;
        }
        acc
    };
    cache.insert(xi.to_vec(), poly.clone());
    poly
}

impl Add for &WordPoly {
    type Output = WordPoly;
    fn add(self, rhs: &WordPoly) -> WordPoly {
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.insert(w.clone(), *c);
        }
        out
    }
}

impl Sub for &WordPoly {
    type Output = WordPoly;
    fn sub(self, rhs: &WordPoly) -> WordPoly {
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.insert(w.clone(), -*c);
        }
        out
    }
}

impl Neg for &WordPoly {
    type Output = WordPoly;
    fn neg(self) -> WordPoly {
        self.scaled(C::new(-1.0, 0.0))
    }
}

impl Mul for &WordPoly {
    type Output = WordPoly;
    fn mul(self, rhs: &WordPoly) -> WordPoly {
        let mut out = WordPoly::zero();
        for (wa, ca) in &self.terms {
            for (wb, cb) in &rhs.terms {
                let mut w = Vec::with_capacity(wa.len() + wb.len());
                w.extend_from_slice(wa);
                w.extend_from_slice(wb);
                out.insert(w, *ca * *cb);
            }
        }
        out
    }
}

/// Orthogonal projection of `target` onto the linear span of `basis`, in the
/// geometry `<A, B> = phi(A B*)`. Solves the normal equations through a
/// spectral pseudo-inverse so linearly dependent spans are fine.
pub fn project_span(
    target: &WordPoly,
    basis: &[WordPoly],
    model: &GaussianModel,
) -> Result<WordPoly, PairingError> {
    let coeffs = span_coefficients(target, basis, model)?;
    let mut out = WordPoly::zero();
    for (x, b) in coeffs.iter().zip(basis) {
        out = &out + &b.scaled(*x);
    }
    Ok(out)
}

/// Coefficients of the projection of `target` on `basis`.
pub fn span_coefficients(
    target: &WordPoly,
    basis: &[WordPoly],
    model: &GaussianModel,
) -> Result<Vec<C>, PairingError> {
    let n = basis.len();
    let mut gram = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // Normal equations: sum_j x_j <b_j, b_i> = <target, b_i>.
            gram[(i, j)] = basis[j].inner(&basis[i], model)?;
        }
    }
    let mut rhs = Vec::with_capacity(n);
    for b in basis {
        rhs.push(target.inner(b, model)?);
    }
    Ok(linalg::pseudo_solve_hermitian(&gram, &rhs, crate::tol::GRAM_CUTOFF))
}

/// All words over `labels` with length at most `max_degree`, as polynomials;
/// the usual spanning set for a polynomial conditional expectation.
pub fn word_basis(labels: &[usize], max_degree: usize) -> Vec<WordPoly> {
    let mut out = vec![WordPoly::one()];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for w in &layer {
            for &l in labels {
                let mut ext = w.clone();
                ext.push(l);
                out.push(WordPoly::word(&ext));
                next.push(ext);
            }
        }
        layer = next;
    }
    out
}

/// Conditional expectation of `target` onto polynomials of degree at most
/// `max_degree` in the given past generators. Exact whenever the true
/// conditional expectation is itself such a polynomial.
pub fn conditional_expectation(
    target: &WordPoly,
    past_labels: &[usize],
    max_degree: usize,
    model: &GaussianModel,
) -> Result<WordPoly, PairingError> {
    project_span(target, &word_basis(past_labels, max_degree), model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn model_pair(s: f64, t: f64, q: f64) -> GaussianModel {
        GaussianModel::new(CovarianceSpec::brownian(&[s, t]), q).unwrap()
    }

    fn sample_polys() -> Vec<WordPoly> {
        let x0 = WordPoly::generator(0);
        let x1 = WordPoly::generator(1);
        vec![
            WordPoly::one(),
            x0.clone(),
            &(&x0 * &x1) + &x1.scaled(c(0.5, -0.25)),
            &(&x1 * &(&x0 * &x0)) - &WordPoly::scalar(c(0.0, 2.0)),
        ]
    }

    #[test]
    fn ring_laws_hold() {
        let ps = sample_polys();
        for a in &ps {
            for b in &ps {
                for d in &ps {
                    let sum = a + b;
                    let left = &sum * d;
                    let right = &(a * d) + &(b * d);
                    assert_eq!(left.max_coeff_diff(&right), 0.0);
                }
                let ab = (a * b).adjoint();
                let ba = &b.adjoint() * &a.adjoint();
                assert_eq!(ab.max_coeff_diff(&ba), 0.0);
                assert_eq!(a.adjoint().adjoint().max_coeff_diff(a), 0.0);
            }
        }
    }

    #[test]
    fn phi_of_words_matches_moment_formula() {
        let m = model_pair(0.4, 1.0, 0.6);
        let p = WordPoly::word(&[0, 1, 0, 1]);
        let direct = m.moment(&[0, 1, 0, 1]).unwrap();
        assert_abs_diff_eq!(p.phi(&m).unwrap().re, direct, epsilon = 1e-14);
        assert_abs_diff_eq!(p.phi(&m).unwrap().im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn l2_geometry_is_positive_and_cauchy_schwarz_holds() {
        let m = model_pair(0.4, 1.0, 0.35);
        let ps = sample_polys();
        for a in &ps {
            assert!(a.l2_norm(&m).unwrap() >= 0.0);
            for b in &ps {
                let lhs = a.inner(b, &m).unwrap().norm();
                let rhs = a.l2_norm(&m).unwrap() * b.l2_norm(&m).unwrap();
                assert!(lhs <= rhs + 1e-10, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn wick_round_trip_is_identity() {
        let m = model_pair(0.7, 1.3, 0.45);
        for p in sample_polys() {
            let back = WordPoly::from_wick(&p.to_wick(&m), &m);
            assert!(back.max_coeff_diff(&p) < 1e-12);
        }
    }

    #[test]
    fn wick_words_of_different_degree_are_orthogonal() {
        let m = model_pair(0.5, 2.0, 0.8);
        let mut cache = BTreeMap::new();
        let words: Vec<Vec<usize>> = vec![vec![], vec![0], vec![1, 0], vec![0, 0, 1]];
        let polys: Vec<WordPoly> = words
            .iter()
            .map(|w| wick_word_as_poly(w, &m, &mut cache))
            .collect();
        for (i, a) in polys.iter().enumerate() {
            for (j, b) in polys.iter().enumerate() {
                if words[i].len() != words[j].len() {
                    let ip = a.inner(b, &m).unwrap().norm();
                    assert!(ip < 1e-12, "degrees {} vs {}: {ip}", words[i].len(), words[j].len());
                }
            }
        }
    }

    #[test]
    fn chaos_scaling_on_small_cases() {
        let m = model_pair(0.8, 1.1, 0.55);
        let q = m.q();
        // Scalars are fixed, generators pick up one factor of q.
        let one = WordPoly::one();
        assert!(one.gamma_q(&m).max_coeff_diff(&one) < 1e-14);
        let x = WordPoly::generator(1);
        assert!(x.gamma_q(&m).max_coeff_diff(&x.scaled(c(q, 0.0))) < 1e-14);
        // Y_a Y_b = W(ab) + cov(a,b); the scaling hits only the chaos-2 part.
        let prod = &WordPoly::generator(0) * &WordPoly::generator(1);
        let cov = m.cov(0, 1);
        let expected = &prod.scaled(c(q * q, 0.0))
            + &WordPoly::scalar(c((1.0 - q * q) * cov, 0.0));
        assert!(prod.gamma_q(&m).max_coeff_diff(&expected) < 1e-12);
    }

    #[test]
    fn chaos_scaling_preserves_phi_and_contracts_l2() {
        let m = model_pair(0.6, 1.4, 0.4);
        for p in sample_polys() {
            let g = p.gamma_q(&m);
            let (a, b) = (g.phi(&m).unwrap(), p.phi(&m).unwrap());
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-11);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-11);
            assert!(g.l2_norm(&m).unwrap() <= p.l2_norm(&m).unwrap() + 1e-11);
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let m = model_pair(0.5, 1.0, 0.3);
        let basis = word_basis(&[0], 2);
        let target = WordPoly::word(&[1, 0, 1]);
        let proj = project_span(&target, &basis, &m).unwrap();
        let twice = project_span(&proj, &basis, &m).unwrap();
        assert!(proj.max_coeff_diff(&twice) < 1e-9);
        let residual = &target - &proj;
        for b in &basis {
            assert!(residual.inner(b, &m).unwrap().norm() < 1e-9);
        }
    }

    /// The process is a martingale: projecting a later marginal onto
    /// polynomials in an earlier one returns the earlier marginal.
    #[test]
    fn later_marginal_projects_to_earlier_one() {
        for q in [0.0, 0.45, 0.9] {
            let m = model_pair(0.6, 1.7, q);
            let ce = conditional_expectation(&WordPoly::generator(1), &[0], 3, &m).unwrap();
            let expected = WordPoly::generator(0);
            assert!(
                ce.compress(1e-9).max_coeff_diff(&expected) < 1e-9,
                "q = {q}: {ce:?}"
            );
        }
    }

    #[test]
    fn projection_handles_dependent_spanning_sets() {
        let m = model_pair(0.5, 1.0, 0.3);
        let x = WordPoly::generator(0);
        // Deliberately dependent: {1, X, X, 2X}.
        let basis = vec![WordPoly::one(), x.clone(), x.clone(), x.scaled(c(2.0, 0.0))];
        let target = WordPoly::generator(1);
        let proj = project_span(&target, &basis, &m).unwrap();
        let err = (&proj - &x).l2_norm(&m).unwrap();
        assert!(err < 1e-9, "projection distance {err}");
    }
}
