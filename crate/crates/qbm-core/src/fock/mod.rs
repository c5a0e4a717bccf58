//! Truncated q-Fock space and its operator algebra.
//!
//! The full space over a `d`-dimensional one-particle space is the direct sum
//! of tensor powers `H^{(0)} + H^{(1)} + ..` carrying the q-deformed inner
//! product `<g_1 x .. x g_n, h_1 x .. x h_n>_q = sum_sigma q^{inv(sigma)}
//! prod_k <g_k, h_{sigma(k)}>`. We truncate at a finite tensor degree. The
//! one-particle space has a fixed orthonormal basis of `modes` vectors (in
//! applications: normalized indicators of grid increments), so basis words
//! are digit strings and the level-`n` Gram matrix `P_n(q)` is built by the
//! recursion
//!
//! ```text
//! <e_i x u, w>_q = sum_k q^{k-1} [w_k = i] <u, w with slot k removed>_q
//! ```
//!
//! Dense operators are stored in the *whitened* basis `B = W A W^{-1}`, where
//! `W` is the (block-diagonal, upper-triangular) transpose of the Cholesky
//! factor of the Gram matrix. In that basis the q-inner product is the plain
//! Euclidean one, so the q-adjoint is the conjugate transpose, position
//! operators are honestly Hermitian, the operator norm is a plain largest
//! singular value, and the vacuum keeps coordinates `(1, 0, ..)`. Products
//! compose directly since whitening is an algebra isomorphism.
//!
//! Large spaces where a dense representation is out of reach use the
//! matrix-free engines in [`vector`] and [`expr`], which act on natural-basis
//! coordinates and apply the Gram structurally.

pub mod expr;
pub mod vector;

use crate::linalg::{self, CMat, RMat, C};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};
use thiserror::Error;

/// Largest dimension for which a dense (whitened) representation is built.
pub const DENSE_DIM_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("deformation parameter q = {0} is outside [0, 1)")]
    QOutOfRange(f64),
    #[error("space dimension {0} exceeds the dense representation cap {DENSE_DIM_CAP}")]
    TooLargeForDense(usize),
    #[error("coefficient vector has length {got}, space has {modes} modes")]
    CoeffLen { got: usize, modes: usize },
    #[error("operators live on different spaces")]
    SpaceMismatch,
}

/// A truncated q-Fock space: `modes` orthonormal one-particle vectors,
/// tensor degrees `0..=depth`.
#[derive(Debug)]
pub struct Space {
    q: f64,
    modes: usize,
    depth: usize,
    /// `offsets[n]` is the index of the first level-`n` word; the final entry
    /// is the total dimension.
    offsets: Vec<usize>,
    dense: OnceLock<DenseRep>,
}

#[derive(Debug)]
struct DenseRep {
    whiten: CMat,
    unwhiten: CMat,
}

impl Space {
    pub fn new(q: f64, modes: usize, depth: usize) -> Result<Arc<Self>, FockError> {
        if !(0.0..1.0).contains(&q) {
            return Err(FockError::QOutOfRange(q));
        }
        let mut offsets = Vec::with_capacity(depth + 2);
        let mut acc = 0usize;
        let mut level = 1usize;
        for _ in 0..=depth {
            offsets.push(acc);
            acc += level;
            level = level.saturating_mul(modes);
        }
        offsets.push(acc);
        Ok(Arc::new(Self {
            q,
            modes,
            depth,
            offsets,
            dense: OnceLock::new(),
        }))
    }

    /// The one-dimensional space holding only the vacuum; its operators are
    /// plain complex scalars. Used to drive the rough-path machinery with
    /// deterministic scalar paths.
    pub fn scalar() -> Arc<Self> {
        Self::new(0.0, 0, 0).expect("scalar space is always valid")
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn level_offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    pub fn level_dim(&self, n: usize) -> usize {
        self.offsets[n + 1] - self.offsets[n]
    }

    /// Tensor degree of the word at a global index.
    pub fn level_of(&self, idx: usize) -> usize {
        debug_assert!(idx < self.dim());
        self.offsets[1..=self.depth + 1]
            .iter()
            .position(|&o| idx < o)
            .unwrap()
    }

    /// Two spaces carry interchangeable operators iff these agree.
    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.q == other.q && self.modes == other.modes && self.depth == other.depth
    }

    /// Level-`n` Gram block `P_n(q)` in the natural word basis, built by the
    /// removal recursion. Quadratic in the level dimension; callers cache.
    pub fn gram_block(&self, n: usize) -> RMat {
        let d = self.modes;
        let mut prev = RMat::from_fn(1, 1, |_, _| 1.0);
        for m in 1..=n {
            let dim = d.pow(m as u32);
            let lower = d.pow((m - 1) as u32);
            let mut cur = RMat::zeros(dim, dim);
            for row in 0..dim {
                // row encodes i * lower + u with i the prepended mode.
                let i = row / lower;
                let u = row % lower;
                for w in 0..dim {
                    let mut acc = 0.0;
                    let mut qs = 1.0;
                    for k in 0..m {
                        // Digit k (from the left) of w and w with it removed.
                        let high = w / d.pow((m - k) as u32 - 1) / d;
                        let digit = (w / d.pow((m - 1 - k) as u32)) % d;
                        let low = w % d.pow((m - 1 - k) as u32);
                        if digit == i {
                            let removed = high * d.pow((m - 1 - k) as u32) + low;
                            acc += qs * prev[(u, removed)];
                        }
                        qs *= self.q;
                    }
                    cur[(row, w)] = acc;
                }
            }
            prev = cur;
        }
        prev
    }

    fn dense(&self) -> &DenseRep {
        self.dense.get_or_init(|| {
            let dim = self.dim();
            assert!(
                dim <= DENSE_DIM_CAP,
                "dense representation requested for dimension {dim} > {DENSE_DIM_CAP}"
            );
            let mut whiten = CMat::zeros(dim, dim);
            let mut unwhiten = CMat::zeros(dim, dim);
            for n in 0..=self.depth {
                let gram = self.gram_block(n);
                let l = linalg::cholesky_lower(&gram);
                let lc = linalg::complexify(&l);
                let linv = linalg::invert_lower(&lc);
                let off = self.offsets[n];
                let ld = self.level_dim(n);
                for i in 0..ld {
                    for j in 0..ld {
                        // W = L^T per block (upper), W^{-1} = (L^{-1})^T.
                        whiten[(off + i, off + j)] = lc[(j, i)];
                        unwhiten[(off + i, off + j)] = linv[(j, i)];
                    }
                }
            }
            DenseRep { whiten, unwhiten }
        })
    }

    /// Conjugates a natural-basis matrix into the whitened basis.
    pub fn whiten_matrix(&self, natural: &CMat) -> CMat {
        let rep = self.dense();
        &(&rep.whiten * natural) * &rep.unwhiten
    }

    /// Natural-basis index of the word `i . w` given mode `i` and the
    /// level-`n` relative index of `w`.
    #[inline]
    pub(crate) fn prepend_rel(&self, mode: usize, n: usize, rel: usize) -> usize {
        mode * self.level_dim(n) + rel
    }
}

/// Dense operator helpers; all matrices are whitened.
impl Space {
    fn op(self: &Arc<Self>, mat: CMat) -> Operator {
        Operator {
            space: Arc::clone(self),
            mat,
        }
    }

    pub fn zero_op(self: &Arc<Self>) -> Operator {
        self.op(CMat::zeros(self.dim(), self.dim()))
    }

    pub fn identity_op(self: &Arc<Self>) -> Operator {
        self.op(linalg::cidentity(self.dim()))
    }

    pub fn scalar_op(self: &Arc<Self>, c: C) -> Operator {
        let n = self.dim();
        self.op(CMat::from_fn(n, n, |i, j| {
            if i == j {
                c
            } else {
                C::new(0.0, 0.0)
            }
        }))
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<(), FockError> {
        if coeffs.len() != self.modes {
            return Err(FockError::CoeffLen {
                got: coeffs.len(),
                modes: self.modes,
            });
        }
        Ok(())
    }

    /// Creation operator `a*(f)` for `f = sum_i coeffs[i] e_i`: prepends `f`,
    /// truncating away the top level. In the natural basis this is a plain
    /// 0/1-pattern prepend; the q-deformation enters through the whitening.
    pub fn creation_op(self: &Arc<Self>, coeffs: &[f64]) -> Result<Operator, FockError> {
        self.check_coeffs(coeffs)?;
        let rep = self.dense();
        let dim = self.dim();
        // (W C)[:, col(w)] = sum_i coeffs[i] W[:, idx(i.w)]; then right-multiply
        // by W^{-1}.
        let mut wc = CMat::zeros(dim, dim);
        for n in 0..self.depth {
            let off = self.offsets[n];
            let off_up = self.offsets[n + 1];
            for rel in 0..self.level_dim(n) {
                let col = off + rel;
                for (i, &c) in coeffs.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let src = off_up + self.prepend_rel(i, n, rel);
                    for r in 0..dim {
                        let w = rep.whiten[(r, src)];
                        if w != C::new(0.0, 0.0) {
                            wc[(r, col)] += w * c;
                        }
                    }
                }
            }
        }
        Ok(self.op(&wc * &rep.unwhiten))
    }

    /// Annihilation operator `a(f)`, the q-adjoint of creation.
    pub fn annihilation_op(self: &Arc<Self>, coeffs: &[f64]) -> Result<Operator, FockError> {
        Ok(self.creation_op(coeffs)?.adjoint())
    }

    /// Position (field) operator `X(f) = a(f) + a*(f)`; Hermitian in the
    /// whitened basis for real `f`.
    pub fn position_op(self: &Arc<Self>, coeffs: &[f64]) -> Result<Operator, FockError> {
        let c = self.creation_op(coeffs)?;
        let a = c.adjoint();
        Ok(&c + &a)
    }

    /// Natural-basis indices of the embedded copy of `sub` (same q and
    /// depth, using the first `sub.modes` modes).
    pub fn embedding_indices(&self, sub: &Space) -> Vec<usize> {
        assert!(sub.modes <= self.modes && sub.depth == self.depth && sub.q == self.q);
        let mut out = Vec::with_capacity(sub.dim());
        for n in 0..=self.depth {
            let k = sub.modes;
            for rel_sub in 0..sub.level_dim(n) {
                // Redigit the base-k index in base `modes`.
                let mut rel_big = 0usize;
                let mut s = rel_sub;
                let mut place = 1usize;
                for _ in 0..n {
                    rel_big += (s % k) * place;
                    s /= k;
                    place *= self.modes;
                }
                out.push(self.offsets[n] + rel_big);
            }
        }
        out
    }
}

/// A dense operator on a truncated q-Fock space, stored in the whitened
/// basis, where the q-adjoint is the conjugate transpose.
#[derive(Debug, Clone)]
pub struct Operator {
    space: Arc<Space>,
    mat: CMat,
}

impl Operator {
    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    /// Whitened-basis matrix.
    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn from_whitened(space: &Arc<Space>, mat: CMat) -> Self {
        assert_eq!(mat.nrows(), space.dim());
        assert_eq!(mat.ncols(), space.dim());
        space.op(mat)
    }

    /// Vacuum expectation `<vacuum, A vacuum>_q`.
    pub fn phi(&self) -> C {
        self.mat[(0, 0)]
    }

    /// Coordinates of `A vacuum` in the whitened (orthonormal) basis.
    pub fn vacuum_vector(&self) -> Vec<C> {
        (0..self.space.dim()).map(|i| self.mat[(i, 0)]).collect()
    }

    /// `L2` norm of the operator under the vacuum state:
    /// `phi(A* A)^(1/2)`, the length of `A vacuum`.
    pub fn l2_norm(&self) -> f64 {
        self.vacuum_vector()
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Operator norm (largest singular value in the whitened basis).
    pub fn op_norm(&self) -> f64 {
        linalg::op_norm_dense(&self.mat)
    }

    /// q-adjoint.
    pub fn adjoint(&self) -> Self {
        self.space.op(linalg::adjoint(&self.mat))
    }

    pub fn scaled(&self, c: C) -> Self {
        self.space.op(CMat::from_fn(self.mat.nrows(), self.mat.ncols(), |i, j| {
            self.mat[(i, j)] * c
        }))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let diff = &self.mat - linalg::adjoint(&self.mat);
        linalg::max_abs(&diff) <= tol
    }

    /// Spectral functional calculus; the operator must be Hermitian.
    pub fn herm_fn(&self, f: impl Fn(f64) -> C) -> Self {
        debug_assert!(self.is_hermitian(1e-8 * (1.0 + linalg::max_abs(&self.mat))));
        self.space.op(linalg::hermitian_fn(&self.mat, f))
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn herm_eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.mat)
    }

    /// Compression to an embedded sub-space (first `sub.modes` modes): the
    /// matrix restricted to words over the retained modes. For operators in
    /// the algebra of the retained modes this is their faithful
    /// representation on the smaller space; in general it implements the
    /// state-preserving conditional expectation onto that algebra.
    pub fn compressed(&self, sub: &Arc<Space>) -> Operator {
        let idx = self.space.embedding_indices(sub);
        let m = CMat::from_fn(sub.dim(), sub.dim(), |i, j| self.mat[(idx[i], idx[j])]);
        sub.op(m)
    }

    fn assert_same_space(&self, other: &Self) {
        assert!(
            self.space.same_shape(&other.space),
            "operators live on different spaces"
        );
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        self.space.op(&self.mat + &rhs.mat)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        self.space.op(&self.mat - &rhs.mat)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.assert_same_space(rhs);
        self.space.op(&self.mat * &rhs.mat)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scaled(C::new(-1.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairings::poly::{GaussianModel, WordPoly};
    use crate::pairings::CovarianceSpec;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn dimensions_and_offsets() {
        let s = Space::new(0.5, 3, 2).unwrap();
        assert_eq!(s.dim(), 1 + 3 + 9);
        assert_eq!(s.level_offset(2), 4);
        assert_eq!(s.level_dim(2), 9);
        assert_eq!(s.level_of(0), 0);
        assert_eq!(s.level_of(5), 2);
        let scalar = Space::scalar();
        assert_eq!(scalar.dim(), 1);
    }

    #[test]
    fn gram_level_two_is_identity_plus_q_swap() {
        let q = 0.37;
        let s = Space::new(q, 2, 2).unwrap();
        let g = s.gram_block(2);
        // Words 00, 01, 10, 11; swap exchanges 01 and 10.
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i, j) {
                    _ if i == j && (i == 0 || i == 3) => 1.0 + q,
                    _ if i == j => 1.0,
                    (1, 2) | (2, 1) => q,
                    _ => 0.0,
                };
                assert_abs_diff_eq!(g[(i, j)], expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gram_matches_permutation_statistic() {
        // Independent evaluation: <v, w> = sum over permutations sigma with
        // sigma(v) = w of q^{inv(sigma)}.
        let q = 0.6;
        let s = Space::new(q, 2, 3).unwrap();
        let g = s.gram_block(3);
        let digits = |w: usize| [(w / 4) % 2, (w / 2) % 2, w % 2];
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let inv = |p: &[usize; 3]| {
            let mut n = 0;
            for a in 0..3 {
                for b in a + 1..3 {
                    if p[a] > p[b] {
                        n += 1;
                    }
                }
            }
            n
        };
        for v in 0..8 {
            for w in 0..8 {
                let dv = digits(v);
                let dw = digits(w);
                let mut expected = 0.0;
                for p in &perms {
                    if (0..3).all(|k| dv[p[k]] == dw[k]) {
                        expected += q.powi(inv(p));
                    }
                }
                assert_abs_diff_eq!(g[(v, w)], expected, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn whitening_is_an_isometry_of_the_gram() {
        let s = Space::new(0.7, 2, 3).unwrap();
        let rep = s.dense();
        let dim = s.dim();
        let mut gram = CMat::zeros(dim, dim);
        for n in 0..=s.depth() {
            let g = s.gram_block(n);
            let off = s.level_offset(n);
            for i in 0..s.level_dim(n) {
                for j in 0..s.level_dim(n) {
                    gram[(off + i, off + j)] = c(g[(i, j)], 0.0);
                }
            }
        }
        // W^H W = G and W W^{-1} = I.
        let whw = &linalg::adjoint(&rep.whiten) * &rep.whiten;
        assert!(linalg::max_abs(&(&whw - &gram)) < 1e-11);
        let id = &rep.whiten * &rep.unwhiten;
        assert!(linalg::max_abs(&(&id - &linalg::cidentity(dim))) < 1e-11);
    }

    #[test]
    fn annihilation_matches_its_defining_formula() {
        // a(f) e_{h_1 .. h_n} = sum_k q^{k-1} <f, h_k> e_{.. without k ..},
        // built in the natural basis and whitened, must equal the q-adjoint
        // of creation.
        let q = 0.45;
        let s = Space::new(q, 3, 3).unwrap();
        let f = [0.9, -0.4, 0.2];
        let dim = s.dim();
        let mut nat = CMat::zeros(dim, dim);
        for n in 1..=s.depth() {
            let d = s.modes();
            let off = s.level_offset(n);
            let off_down = s.level_offset(n - 1);
            for rel in 0..s.level_dim(n) {
                let mut qs = 1.0;
                for k in 0..n {
                    let p = d.pow((n - 1 - k) as u32);
                    let digit = (rel / p) % d;
                    let removed = (rel / (p * d)) * p + rel % p;
                    nat[(off_down + removed, off + rel)] += c(qs * f[digit], 0.0);
                    qs *= q;
                }
            }
        }
        let adjoint_form = s.creation_op(&f).unwrap().adjoint();
        let whitened = s.whiten_matrix(&nat);
        let diff = &whitened - adjoint_form.matrix();
        assert!(linalg::max_abs(&diff) < 1e-11);
    }

    #[test]
    fn annihilation_example_with_repeated_mode() {
        // a(e_0)(e_0 x e_0) = (1 + q) e_0.
        let q = 0.3;
        let s = Space::new(q, 2, 2).unwrap();
        let a = s.annihilation_op(&[1.0, 0.0]).unwrap();
        let cr = s.creation_op(&[1.0, 0.0]).unwrap();
        // e_0 x e_0 as a vacuum vector: apply creation twice.
        let two = &(&a * &cr) * &cr;
        let one = &cr;
        // Compare A (c* c vacuum) against (1+q) c* vacuum in L2.
        let diff_vec: Vec<C> = two
            .vacuum_vector()
            .iter()
            .zip(one.vacuum_vector())
            .map(|(x, y)| x - y * (1.0 + q))
            .collect();
        let err: f64 = diff_vec.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-12);
    }

    #[test]
    fn position_is_hermitian_and_phi_matches_oracle() {
        let q = 0.52;
        let s = Space::new(q, 2, 4).unwrap();
        // Two orthonormal modes with arbitrary real loadings.
        let f = [0.8, 0.6];
        let g = [0.6, -0.8];
        let xf = s.position_op(&f).unwrap();
        let xg = s.position_op(&g).unwrap();
        assert!(xf.is_hermitian(1e-11));
        // Joint moments of total degree <= 2 * depth are exact on the
        // truncation; compare against the pairing oracle.
        let spec = CovarianceSpec::from_matrix(
            2,
            vec![
                f.iter().map(|x| x * x).sum::<f64>(),
                f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>(),
                f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>(),
                g.iter().map(|x| x * x).sum::<f64>(),
            ],
        )
        .unwrap();
        let model = GaussianModel::new(spec, q).unwrap();
        let ops = [&xf, &xg];
        for word in [
            vec![0usize, 0],
            vec![0, 1],
            vec![0, 1, 0, 1],
            vec![0, 0, 0, 0],
            vec![1, 0, 0, 1, 1, 0],
            vec![0, 0, 0, 0, 0, 0, 0, 0],
        ] {
            let mut prod = s.identity_op();
            for &i in &word {
                prod = &prod * ops[i];
            }
            let expected = WordPoly::word(&word).phi(&model).unwrap();
            assert_abs_diff_eq!(prod.phi().re, expected.re, epsilon = 1e-10);
            assert_abs_diff_eq!(prod.phi().im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn truncation_is_exact_up_to_degree_twice_depth() {
        let q = 0.4;
        let spec = CovarianceSpec::from_matrix(1, vec![1.0]).unwrap();
        let model = GaussianModel::new(spec, q).unwrap();
        let s = Space::new(q, 1, 4).unwrap();
        let x = s.position_op(&[1.0]).unwrap();
        let mut pow = s.identity_op();
        let mut moments = Vec::new();
        for _ in 0..=10 {
            moments.push(pow.phi().re);
            pow = &pow * &x;
        }
        for r in 0..=8 {
            let oracle = model.moment(&vec![0; r]).unwrap();
            assert_abs_diff_eq!(moments[r], oracle, epsilon = 1e-10);
        }
        // Degree 10 needs level 5, which the truncation lacks.
        let oracle10 = model.moment(&vec![0; 10]).unwrap();
        assert!((moments[10] - oracle10).abs() > 1e-3);
    }

    #[test]
    fn l2_norm_squares_match_oracle_inner_products() {
        let q = 0.66;
        let s = Space::new(q, 2, 3).unwrap();
        let x0 = s.position_op(&[1.0, 0.0]).unwrap();
        let x1 = s.position_op(&[0.0, 1.0]).unwrap();
        let a = &(&x0 * &x1) - &s.scalar_op(c(0.3, 0.1));
        let spec = CovarianceSpec::diagonal(&[1.0, 1.0]).unwrap();
        let model = GaussianModel::new(spec, q).unwrap();
        let p = &(&WordPoly::generator(0) * &WordPoly::generator(1))
            - &WordPoly::scalar(c(0.3, 0.1));
        assert_abs_diff_eq!(
            a.l2_norm(),
            p.l2_norm(&model).unwrap(),
            epsilon = 1e-11
        );
    }

    #[test]
    fn operator_norm_of_position_is_rotation_invariant() {
        let q = 0.58;
        let s = Space::new(q, 2, 3).unwrap();
        let n1 = s.position_op(&[1.0, 0.0]).unwrap().op_norm();
        let n2 = s.position_op(&[0.6, 0.8]).unwrap().op_norm();
        let n3 = s
            .position_op(&[1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()])
            .unwrap()
            .op_norm();
        assert_abs_diff_eq!(n1, n2, epsilon = 1e-9);
        assert_abs_diff_eq!(n1, n3, epsilon = 1e-9);
        // And it scales linearly in the loading length.
        let n4 = s.position_op(&[0.5, 0.0]).unwrap().op_norm();
        assert_abs_diff_eq!(n4, 0.5 * n1, epsilon = 1e-9);
    }

    #[test]
    fn functional_calculus_produces_unitaries_from_positions() {
        let s = Space::new(0.42, 2, 3).unwrap();
        let x = s.position_op(&[0.7, 0.3]).unwrap();
        let u = x.herm_fn(|t| C::from_polar(1.0, 1.3 * t));
        let prod = &u * &u.adjoint();
        let id = s.identity_op();
        assert!(linalg::max_abs(&(prod.matrix() - id.matrix())) < 1e-11);
        // exp(i a X) exp(i b X) = exp(i (a+b) X).
        let ua = x.herm_fn(|t| C::from_polar(1.0, 0.4 * t));
        let ub = x.herm_fn(|t| C::from_polar(1.0, 0.9 * t));
        let uab = x.herm_fn(|t| C::from_polar(1.0, 1.3 * t));
        let prod_ab = &ua * &ub;
        assert!(linalg::max_abs(&(prod_ab.matrix() - uab.matrix())) < 1e-11);
    }

    #[test]
    fn compression_restricts_operators_of_the_sub_algebra() {
        let q = 0.5;
        let big = Space::new(q, 3, 2).unwrap();
        let sub = Space::new(q, 2, 2).unwrap();
        // A position operator supported on the first two modes.
        let x_big = big.position_op(&[0.8, -0.5, 0.0]).unwrap();
        let x_sub = sub.position_op(&[0.8, -0.5]).unwrap();
        let restricted = x_big.compressed(&sub);
        assert!(linalg::max_abs(&(restricted.matrix() - x_sub.matrix())) < 1e-11);
        // Product of two such operators restricts compatibly.
        let y_big = &x_big * &x_big;
        let y_sub = &x_sub * &x_sub;
        assert!(linalg::max_abs(&(y_big.compressed(&sub).matrix() - y_sub.matrix())) < 1e-10);
    }

    /// Compression of a *future* operator implements the conditional
    /// expectation: a later marginal compresses to the earlier one.
    #[test]
    fn compression_acts_as_conditional_expectation() {
        let q = 0.35;
        let big = Space::new(q, 2, 3).unwrap();
        let sub = Space::new(q, 1, 3).unwrap();
        let (h0, h1) = (0.4f64, 0.6f64);
        // X_t = over both increments, X_s = over the first only.
        let x_t = big.position_op(&[h0.sqrt(), h1.sqrt()]).unwrap();
        let x_s_small = sub.position_op(&[h0.sqrt()]).unwrap();
        let ce = x_t.compressed(&sub);
        assert!(linalg::max_abs(&(ce.matrix() - x_s_small.matrix())) < 1e-11);
        // phi is preserved by compression.
        let y = &x_t * &(&x_t * &x_t);
        let d = (y.compressed(&sub).phi() - y.phi()).norm();
        assert!(d < 1e-12);
    }

    #[test]
    fn scalar_space_operators_are_plain_scalars() {
        let s = Space::scalar();
        let a = s.scalar_op(c(2.0, 1.0));
        let b = s.scalar_op(c(0.5, -0.5));
        let prod = &a * &b;
        let expected = c(2.0, 1.0) * c(0.5, -0.5);
        assert_abs_diff_eq!(prod.phi().re, expected.re, epsilon = 1e-15);
        assert_abs_diff_eq!(prod.phi().im, expected.im, epsilon = 1e-15);
        assert_abs_diff_eq!(a.op_norm(), (5.0f64).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(a.l2_norm(), (5.0f64).sqrt(), epsilon = 1e-14);
    }
}
