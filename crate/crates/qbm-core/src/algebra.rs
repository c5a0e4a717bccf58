//! Tensor sharp-calculus over Fock operators and Fourier functional calculus
//! with first and second tensor derivatives.
//!
//! An order-2 tensor `T = Σ Aᵢ⊗Bᵢ` acts on an operator by `T♯X = Σ AᵢXBᵢ`;
//! an order-3 tensor contracts against one operator from either side and
//! leaves an order-2 tensor behind, `X♯(A⊗B⊗C) = (AXB)⊗C` and
//! `(A⊗B⊗C)♯X = A⊗(BXC)`. Functions are finite combinations of complex
//! exponentials `f(x) = Σ cⱼ e^{iξⱼx}`, which keeps every `f(X)` a
//! combination of unitaries of the whitened frame and gives the derivative
//! objects explicit quadrature representations:
//!
//! ```text
//!   ∂f(X)  = Σⱼ cⱼ·iξⱼ ∫₀¹ e^{iαξⱼX} ⊗ e^{i(1-α)ξⱼX} dα
//!   ∂²f(X) = Σⱼ cⱼ·(iξⱼ)² ∬_{α,β≥0, α+β≤1} e^{iαξⱼX} ⊗ e^{iβξⱼX} ⊗ e^{i(1-α-β)ξⱼX} dα dβ
//! ```
//!
//! Tensors carry `norm_bound`, the summed product of component operator
//! norms. It is an upper bound for the projective tensor norm, and every
//! construction here keeps it valid: explicit constructors compute component
//! norms, arithmetic propagates bounds through the triangle inequality and
//! submultiplicativity, and the quadrature constructors use that the
//! exponential factors are unitary.

use std::num::NonZeroUsize;
use std::ops::{Add, Neg, Sub};
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use thiserror::Error;

use crate::fock::{Operator, Space};
use crate::linalg::{self, C, CMat};
use crate::par;

/// Gauss-Legendre order per integration axis for the derivative quadratures.
/// The integrands are entire in the integration variables, so the error
/// decays superalgebraically; 32 nodes reach roundoff for every frequency in
/// use here.
pub const QUAD_ORDER: usize = 32;

/// Gate on the adjoint defect of functional-calculus arguments, relative to
/// the operator scale.
pub const SELF_ADJOINT_TOL: f64 = 1e-10;

/// Summands contributing less than this fraction of the total norm bound are
/// dropped, which keeps summand counts from growing without bound under
/// repeated arithmetic.
pub const COMPRESS_REL_TOL: f64 = 1e-14;

/// Eigenvalue gap, relative to the spectral spread, below which the divided
/// difference switches to the derivative at the midpoint.
const CLOSE_EIG_REL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum AlgebraError {
    #[error("tensor components live on different spaces")]
    SpaceMismatch,
    #[error("operator is not self-adjoint: adjoint defect {defect:.3e} exceeds {tol:.3e}")]
    NotSelfAdjoint { defect: f64, tol: f64 },
    #[error("function of regularity class {got} where class {need} is required")]
    RegularityTooLow { need: usize, got: usize },
}

/// Returns an error unless `x` equals its adjoint up to roundoff.
pub fn require_self_adjoint(x: &Operator) -> Result<(), AlgebraError> {
    let m = x.matrix();
    let defect = linalg::max_abs(&(m - &linalg::adjoint(m)));
    let tol = SELF_ADJOINT_TOL * (1.0 + linalg::max_abs(m));
    if defect > tol {
        Err(AlgebraError::NotSelfAdjoint { defect, tol })
    } else {
        Ok(())
    }
}

/// Anything that contracts operators like an order-2 tensor, `X ↦ T♯X`.
///
/// Explicit tensors implement it by their summand sums; derivative kernels
/// implement it in eigenframe form without ever materializing summands. The
/// rough-path layer is written against this trait so both representations
/// feed the same integral formulas.
pub trait SharpAction {
    fn space(&self) -> &Arc<Space>;
    fn sharp(&self, x: &Operator) -> Operator;
    /// Upper bound for the projective norm of the underlying tensor.
    fn norm_bound(&self) -> f64;
}

impl<T: SharpAction + ?Sized> SharpAction for &T {
    fn space(&self) -> &Arc<Space> {
        (**self).space()
    }
    fn sharp(&self, x: &Operator) -> Operator {
        (**self).sharp(x)
    }
    fn norm_bound(&self) -> f64 {
        (**self).norm_bound()
    }
}

/// Composition in the `A⊗A^op` sense: `(Σ F₁⊗F₂)∘(Σ G₁⊗G₂) = Σ F₁G₁⊗G₂F₂`,
/// evaluated as "contract with `inner` first, then `outer`". On explicit
/// tensors this agrees with [`TensorValue2::compose`].
pub struct ChainAction<L, R> {
    pub outer: L,
    pub inner: R,
}

impl<L: SharpAction, R: SharpAction> SharpAction for ChainAction<L, R> {
    fn space(&self) -> &Arc<Space> {
        self.outer.space()
    }
    fn sharp(&self, x: &Operator) -> Operator {
        self.outer.sharp(&self.inner.sharp(x))
    }
    fn norm_bound(&self) -> f64 {
        self.outer.norm_bound() * self.inner.norm_bound()
    }
}

/// The leg-swapped adjoint `Σ Bᵢ†⊗Aᵢ†` of an action, contracted without
/// materializing it through `X ↦ (T♯X†)†`. On explicit tensors this agrees
/// with [`TensorValue2::adjoint`].
pub struct FlipAdjoint<T>(pub T);

impl<T: SharpAction> SharpAction for FlipAdjoint<T> {
    fn space(&self) -> &Arc<Space> {
        self.0.space()
    }
    fn sharp(&self, x: &Operator) -> Operator {
        self.0.sharp(&x.adjoint()).adjoint()
    }
    fn norm_bound(&self) -> f64 {
        self.0.norm_bound()
    }
}

#[derive(Debug, Clone)]
struct Term2 {
    a: Operator,
    b: Operator,
    /// Valid upper bound for `op_norm(a)·op_norm(b)`.
    bound: f64,
}

/// Order-2 tensor `Σ Aᵢ⊗Bᵢ` over one Fock space.
#[derive(Debug, Clone)]
pub struct TensorValue2 {
    space: Arc<Space>,
    terms: Vec<Term2>,
}

impl TensorValue2 {
    pub fn zero(space: &Arc<Space>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: Vec::new(),
        }
    }

    /// The unit tensor `1⊗1`.
    pub fn identity(space: &Arc<Space>) -> Self {
        let mut t = Self::zero(space);
        t.push_with_bound(space.identity_op(), space.identity_op(), 1.0);
        t
    }

    /// Single summand `a⊗b`; the norm bound is computed from the components.
    pub fn elementary(a: Operator, b: Operator) -> Result<Self, AlgebraError> {
        if !a.space().same_shape(b.space()) {
            return Err(AlgebraError::SpaceMismatch);
        }
        let bound = a.op_norm() * b.op_norm();
        let space = Arc::clone(a.space());
        let mut t = Self::zero(&space);
        t.push_with_bound(a, b, bound);
        Ok(t)
    }

    pub fn from_summands(
        summands: impl IntoIterator<Item = (Operator, Operator)>,
    ) -> Result<Self, AlgebraError> {
        let mut out: Option<Self> = None;
        for (a, b) in summands {
            let next = Self::elementary(a, b)?;
            out = Some(match out {
                None => next,
                Some(acc) => {
                    if !acc.space.same_shape(&next.space) {
                        return Err(AlgebraError::SpaceMismatch);
                    }
                    &acc + &next
                }
            });
        }
        out.ok_or(AlgebraError::SpaceMismatch)
    }

    /// Appends `a⊗b` with a caller-supplied norm bound. Internal fast path
    /// for constructions whose component norms are known analytically (for
    /// example unitary exponentials); the bound must dominate
    /// `op_norm(a)·op_norm(b)`.
    pub(crate) fn push_with_bound(&mut self, a: Operator, b: Operator, bound: f64) {
        debug_assert!(self.space.same_shape(a.space()) && self.space.same_shape(b.space()));
        debug_assert!(bound.is_finite() && bound >= 0.0);
        self.terms.push(Term2 { a, b, bound });
    }

    pub(crate) fn elementary_with_bound(a: Operator, b: Operator, bound: f64) -> Self {
        let space = Arc::clone(a.space());
        let mut t = Self::zero(&space);
        t.push_with_bound(a, b, bound);
        t
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn summand(&self, i: usize) -> (&Operator, &Operator) {
        (&self.terms[i].a, &self.terms[i].b)
    }

    pub fn summands(&self) -> impl Iterator<Item = (&Operator, &Operator)> {
        self.terms.iter().map(|t| (&t.a, &t.b))
    }

    /// `Σᵢ ‖Aᵢ‖·‖Bᵢ‖`, an upper bound for the projective norm.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.bound).sum()
    }

    /// Scales the tensor by `c` (absorbed into the left components).
    pub fn scaled(&self, c: C) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term2 {
                a: t.a.scaled(c),
                b: t.b.clone(),
                bound: t.bound * c.norm(),
            })
            .collect();
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }

    /// `T♯X = Σ AᵢXBᵢ`.
    pub fn sharp(&self, x: &Operator) -> Operator {
        assert!(
            self.space.same_shape(x.space()),
            "sharp contraction across different spaces"
        );
        if self.terms.is_empty() {
            return self.space.zero_op();
        }
        let mats = par::map_slice(&self.terms, |t| {
            &(t.a.matrix() * x.matrix()) * t.b.matrix()
        });
        let n = self.space.dim();
        let mut acc = CMat::zeros(n, n);
        for m in &mats {
            acc = &acc + m;
        }
        Operator::from_whitened(&self.space, acc)
    }

    /// `A⊗A^op` product: `(Σ F₁⊗F₂)·(Σ G₁⊗G₂) = Σ (F₁G₁)⊗(G₂F₂)`, so that
    /// `(self∘other)♯X = self♯(other♯X)`.
    pub fn compose(&self, other: &Self) -> Self {
        assert!(
            self.space.same_shape(&other.space),
            "composition across different spaces"
        );
        let mut out = Self::zero(&self.space);
        for s in &self.terms {
            for o in &other.terms {
                out.push_with_bound(&s.a * &o.a, &o.b * &s.b, s.bound * o.bound);
            }
        }
        out.compressed()
    }

    /// The involution `Σ Aᵢ⊗Bᵢ ↦ Σ Bᵢ†⊗Aᵢ†`, chosen so that
    /// `adjoint(T)♯X = (T♯X†)†`.
    pub fn adjoint(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term2 {
                a: t.b.adjoint(),
                b: t.a.adjoint(),
                bound: t.bound,
            })
            .collect();
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }

    /// Drops summands whose bound contribution is negligible against the
    /// total.
    pub fn compressed(&self) -> Self {
        let total = self.norm_bound();
        let cutoff = COMPRESS_REL_TOL * total;
        let terms = self
            .terms
            .iter()
            .filter(|t| t.bound > cutoff)
            .cloned()
            .collect();
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }
}

impl SharpAction for TensorValue2 {
    fn space(&self) -> &Arc<Space> {
        &self.space
    }
    fn sharp(&self, x: &Operator) -> Operator {
        TensorValue2::sharp(self, x)
    }
    fn norm_bound(&self) -> f64 {
        TensorValue2::norm_bound(self)
    }
}

impl Add for &TensorValue2 {
    type Output = TensorValue2;
    fn add(self, rhs: Self) -> TensorValue2 {
        assert!(
            self.space.same_shape(&rhs.space),
            "tensor sum across different spaces"
        );
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        TensorValue2 {
            space: Arc::clone(&self.space),
            terms,
        }
    }
}

impl Sub for &TensorValue2 {
    type Output = TensorValue2;
    fn sub(self, rhs: Self) -> TensorValue2 {
        self + &rhs.scaled(C::new(-1.0, 0.0))
    }
}

impl Neg for &TensorValue2 {
    type Output = TensorValue2;
    fn neg(self) -> TensorValue2 {
        self.scaled(C::new(-1.0, 0.0))
    }
}

#[derive(Debug, Clone)]
struct Term3 {
    a: Operator,
    b: Operator,
    c: Operator,
    bound: f64,
}

/// Order-3 tensor `Σ Aᵢ⊗Bᵢ⊗Cᵢ` over one Fock space.
#[derive(Debug, Clone)]
pub struct TensorValue3 {
    space: Arc<Space>,
    terms: Vec<Term3>,
}

impl TensorValue3 {
    pub fn zero(space: &Arc<Space>) -> Self {
        Self {
            space: Arc::clone(space),
            terms: Vec::new(),
        }
    }

    /// The unit tensor `1⊗1⊗1`.
    pub fn identity(space: &Arc<Space>) -> Self {
        let mut t = Self::zero(space);
        t.push_with_bound(
            space.identity_op(),
            space.identity_op(),
            space.identity_op(),
            1.0,
        );
        t
    }

    pub fn elementary(a: Operator, b: Operator, c: Operator) -> Result<Self, AlgebraError> {
        if !a.space().same_shape(b.space()) || !a.space().same_shape(c.space()) {
            return Err(AlgebraError::SpaceMismatch);
        }
        let bound = a.op_norm() * b.op_norm() * c.op_norm();
        let space = Arc::clone(a.space());
        let mut t = Self::zero(&space);
        t.push_with_bound(a, b, c, bound);
        Ok(t)
    }

    /// `head ⊗ T` for an order-2 tensor `T`.
    pub fn insert_left(head: &Operator, tail: &TensorValue2) -> Result<Self, AlgebraError> {
        if !head.space().same_shape(&tail.space) {
            return Err(AlgebraError::SpaceMismatch);
        }
        Ok(Self::insert_left_with_bound(head, head.op_norm(), tail))
    }

    /// `T ⊗ tail` for an order-2 tensor `T`.
    pub fn insert_right(front: &TensorValue2, tail: &Operator) -> Result<Self, AlgebraError> {
        if !tail.space().same_shape(&front.space) {
            return Err(AlgebraError::SpaceMismatch);
        }
        Ok(Self::insert_right_with_bound(front, tail, tail.op_norm()))
    }

    pub(crate) fn insert_left_with_bound(
        head: &Operator,
        head_bound: f64,
        tail: &TensorValue2,
    ) -> Self {
        let mut out = Self::zero(&tail.space);
        for t in &tail.terms {
            out.push_with_bound(
                head.clone(),
                t.a.clone(),
                t.b.clone(),
                head_bound * t.bound,
            );
        }
        out
    }

    pub(crate) fn insert_right_with_bound(
        front: &TensorValue2,
        tail: &Operator,
        tail_bound: f64,
    ) -> Self {
        let mut out = Self::zero(&front.space);
        for t in &front.terms {
            out.push_with_bound(
                t.a.clone(),
                t.b.clone(),
                tail.clone(),
                t.bound * tail_bound,
            );
        }
        out
    }

    pub(crate) fn push_with_bound(&mut self, a: Operator, b: Operator, c: Operator, bound: f64) {
        debug_assert!(
            self.space.same_shape(a.space())
                && self.space.same_shape(b.space())
                && self.space.same_shape(c.space())
        );
        debug_assert!(bound.is_finite() && bound >= 0.0);
        self.terms.push(Term3 { a, b, c, bound });
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn summand(&self, i: usize) -> (&Operator, &Operator, &Operator) {
        let t = &self.terms[i];
        (&t.a, &t.b, &t.c)
    }

    pub fn summands(&self) -> impl Iterator<Item = (&Operator, &Operator, &Operator)> {
        self.terms.iter().map(|t| (&t.a, &t.b, &t.c))
    }

    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.bound).sum()
    }

    pub fn scaled(&self, c: C) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| Term3 {
                a: t.a.scaled(c),
                b: t.b.clone(),
                c: t.c.clone(),
                bound: t.bound * c.norm(),
            })
            .collect();
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }

    /// `x♯(A⊗B⊗C) = (AxB)⊗C`, the contraction with the operator entering
    /// between the first two legs.
    pub fn left_sharp(&self, x: &Operator) -> TensorValue2 {
        assert!(
            self.space.same_shape(x.space()),
            "sharp contraction across different spaces"
        );
        let x_norm = x.op_norm();
        let mut out = TensorValue2::zero(&self.space);
        for t in &self.terms {
            out.push_with_bound(&(&t.a * x) * &t.b, t.c.clone(), t.bound * x_norm);
        }
        out
    }

    /// `(A⊗B⊗C)♯x = A⊗(BxC)`, the contraction with the operator entering
    /// between the last two legs.
    pub fn right_sharp(&self, x: &Operator) -> TensorValue2 {
        assert!(
            self.space.same_shape(x.space()),
            "sharp contraction across different spaces"
        );
        let x_norm = x.op_norm();
        let mut out = TensorValue2::zero(&self.space);
        for t in &self.terms {
            out.push_with_bound(t.a.clone(), &(&t.b * x) * &t.c, t.bound * x_norm);
        }
        out
    }

    pub fn compressed(&self) -> Self {
        let total = self.norm_bound();
        let cutoff = COMPRESS_REL_TOL * total;
        let terms = self
            .terms
            .iter()
            .filter(|t| t.bound > cutoff)
            .cloned()
            .collect();
        Self {
            space: Arc::clone(&self.space),
            terms,
        }
    }
}

impl Add for &TensorValue3 {
    type Output = TensorValue3;
    fn add(self, rhs: Self) -> TensorValue3 {
        assert!(
            self.space.same_shape(&rhs.space),
            "tensor sum across different spaces"
        );
        let mut terms = self.terms.clone();
        terms.extend(rhs.terms.iter().cloned());
        TensorValue3 {
            space: Arc::clone(&self.space),
            terms,
        }
    }
}

impl Sub for &TensorValue3 {
    type Output = TensorValue3;
    fn sub(self, rhs: Self) -> TensorValue3 {
        self + &rhs.scaled(C::new(-1.0, 0.0))
    }
}

impl Neg for &TensorValue3 {
    type Output = TensorValue3;
    fn neg(self) -> TensorValue3 {
        self.scaled(C::new(-1.0, 0.0))
    }
}

/// Finite combination of complex exponentials `f(x) = Σ cⱼ e^{iξⱼx}` with a
/// declared regularity class. All weighted norms
/// `‖f‖_k = Σ_{i=0..k} Σⱼ |cⱼ||ξⱼ|^i` are finite here; the class records
/// which calculus operations the caller intends the function for, and
/// operations demanding more regularity than declared are refused.
#[derive(Debug, Clone)]
pub struct FourierFunction {
    atoms: Vec<(C, f64)>,
    class: usize,
}

impl FourierFunction {
    pub fn new(atoms: impl Into<Vec<(C, f64)>>, class: usize) -> Self {
        Self {
            atoms: atoms.into(),
            class,
        }
    }

    /// The constant function `x ↦ c` (a single atom at frequency zero).
    pub fn constant(c: C) -> Self {
        Self::new(vec![(c, 0.0)], usize::MAX)
    }

    pub fn atoms(&self) -> &[(C, f64)] {
        &self.atoms
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn require_class(&self, need: usize) -> Result<(), AlgebraError> {
        if self.class < need {
            Err(AlgebraError::RegularityTooLow {
                need,
                got: self.class,
            })
        } else {
            Ok(())
        }
    }

    pub fn eval(&self, x: f64) -> C {
        self.atoms
            .iter()
            .map(|&(c, xi)| c * C::from_polar(1.0, xi * x))
            .sum()
    }

    /// `‖f‖_k = Σ_{i=0..k} Σⱼ |cⱼ||ξⱼ|^i`.
    pub fn norm(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for &(c, xi) in &self.atoms {
            let amp = c.norm();
            let mut pow = 1.0;
            for _ in 0..=k {
                total += amp * pow;
                pow *= xi.abs();
            }
        }
        total
    }

    /// Termwise derivative `f'(x) = Σ cⱼ·iξⱼ·e^{iξⱼx}`, one regularity class
    /// below.
    pub fn derivative(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|&(c, xi)| (c * C::new(0.0, xi), xi))
            .collect::<Vec<_>>();
        Self::new(atoms, self.class.saturating_sub(1))
    }

    /// The function `g` with `g(X) = f(X)†` on self-adjoint `X`, given by
    /// conjugated coefficients and negated frequencies.
    pub fn adjoint_pair(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|&(c, xi)| (c.conj(), -xi))
            .collect::<Vec<_>>();
        Self::new(atoms, self.class)
    }

    pub fn scaled(&self, scale: C) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|&(c, xi)| (c * scale, xi))
            .collect::<Vec<_>>();
        Self::new(atoms, self.class)
    }
}

/// `f(X) = Σ cⱼ e^{iξⱼX}` through one eigendecomposition of `X`.
/// The operator norm of the result is at most `‖f‖₀`.
pub fn apply_function(f: &FourierFunction, x: &Operator) -> Result<Operator, AlgebraError> {
    require_self_adjoint(x)?;
    Ok(x.herm_fn(|lambda| f.eval(lambda)))
}

fn gl_rule(order: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("positive quadrature order"))
}

/// First tensor derivative `∂f(X)` as an explicit summand list, one pair of
/// unitary factors per atom and quadrature node. `norm_bound` of the result
/// is `Σⱼ |cⱼξⱼ|`, which stays below `‖f‖₁`.
pub fn tensor_derivative(f: &FourierFunction, x: &Operator) -> Result<TensorValue2, AlgebraError> {
    tensor_derivative_order(f, x, QUAD_ORDER)
}

pub fn tensor_derivative_order(
    f: &FourierFunction,
    x: &Operator,
    order: usize,
) -> Result<TensorValue2, AlgebraError> {
    f.require_class(1)?;
    require_self_adjoint(x)?;
    let space = x.space();
    let eig = linalg::hermitian_eig(x.matrix());
    let rule = gl_rule(order);
    let mut out = TensorValue2::zero(space);
    for &(c, xi) in f.atoms() {
        if c.norm() == 0.0 || xi == 0.0 {
            continue;
        }
        for &(node, weight) in rule.as_node_weight_pairs() {
            let alpha = 0.5 * (node + 1.0);
            let w = 0.5 * weight;
            let scale = c * C::new(0.0, xi) * w;
            let left = linalg::hermitian_fn_eig(&eig, |l| {
                scale * C::from_polar(1.0, alpha * xi * l)
            });
            let right =
                linalg::hermitian_fn_eig(&eig, |l| C::from_polar(1.0, (1.0 - alpha) * xi * l));
            out.push_with_bound(
                Operator::from_whitened(space, left),
                Operator::from_whitened(space, right),
                c.norm() * xi.abs() * w,
            );
        }
    }
    Ok(out.compressed())
}

/// Second tensor derivative `∂²f(X)` over the simplex `{α,β ≥ 0, α+β ≤ 1}`,
/// mapped to the unit square by `α = u`, `β = (1-u)v` with Jacobian `1-u`.
/// `norm_bound` of the result is `½ Σⱼ |cⱼ|ξⱼ²`, which stays below `‖f‖₂/2`.
pub fn second_tensor_derivative(
    f: &FourierFunction,
    x: &Operator,
) -> Result<TensorValue3, AlgebraError> {
    second_tensor_derivative_order(f, x, QUAD_ORDER)
}

pub fn second_tensor_derivative_order(
    f: &FourierFunction,
    x: &Operator,
    order: usize,
) -> Result<TensorValue3, AlgebraError> {
    f.require_class(2)?;
    require_self_adjoint(x)?;
    let space = x.space();
    let eig = linalg::hermitian_eig(x.matrix());
    let rule = gl_rule(order);
    let pairs = rule.as_node_weight_pairs();
    let mut out = TensorValue3::zero(space);
    for &(c, xi) in f.atoms() {
        if c.norm() == 0.0 || xi == 0.0 {
            continue;
        }
        let base = c * C::new(0.0, xi) * C::new(0.0, xi);
        for &(nu, wu) in pairs {
            let u = 0.5 * (nu + 1.0);
            let wu = 0.5 * wu;
            for &(nv, wv) in pairs {
                let v = 0.5 * (nv + 1.0);
                let wv = 0.5 * wv;
                let (alpha, beta, gamma) = (u, (1.0 - u) * v, (1.0 - u) * (1.0 - v));
                let weight = wu * wv * (1.0 - u);
                let first = linalg::hermitian_fn_eig(&eig, |l| {
                    base * weight * C::from_polar(1.0, alpha * xi * l)
                });
                let second =
                    linalg::hermitian_fn_eig(&eig, |l| C::from_polar(1.0, beta * xi * l));
                let third =
                    linalg::hermitian_fn_eig(&eig, |l| C::from_polar(1.0, gamma * xi * l));
                out.push_with_bound(
                    Operator::from_whitened(space, first),
                    Operator::from_whitened(space, second),
                    Operator::from_whitened(space, third),
                    c.norm() * xi * xi * weight,
                );
            }
        }
    }
    Ok(out.compressed())
}

/// Eigenframe form of the first tensor derivative:
/// `∂f(X)♯H = Q (K ∘ (QᴴHQ)) Qᴴ` with `∘` the entrywise product. One
/// eigendecomposition up front, four matrix products per contraction,
/// no summand lists. This is the fast path the fixed-point solver leans on.
#[derive(Debug, Clone)]
pub struct DerivativeKernel {
    space: Arc<Space>,
    vecs: CMat,
    kernel: CMat,
    bound: f64,
}

impl DerivativeKernel {
    /// Exact kernel `K_{kl} = (f(λ_k)-f(λ_l))/(λ_k-λ_l)`, with the quotient
    /// replaced by `f'` at the midpoint once the gap is small enough to lose
    /// digits to cancellation.
    pub fn divided_difference(f: &FourierFunction, x: &Operator) -> Result<Self, AlgebraError> {
        require_self_adjoint(x)?;
        let eig = linalg::hermitian_eig(x.matrix());
        Self::divided_difference_with_eig(f, x.space(), &eig)
    }

    /// Same kernel from a precomputed eigendecomposition, for callers that
    /// already factored the base point (the fixed-point solver builds two
    /// kernels per step from one factorization).
    pub fn divided_difference_with_eig(
        f: &FourierFunction,
        space: &Arc<Space>,
        eig: &linalg::HermEig,
    ) -> Result<Self, AlgebraError> {
        f.require_class(1)?;
        let n = eig.vals.len();
        let spread = if n == 0 {
            0.0
        } else {
            (eig.vals[n - 1] - eig.vals[0]).abs()
        };
        let gap_tol = CLOSE_EIG_REL * (spread + 1.0);
        let fd = f.derivative();
        let kernel = CMat::from_fn(n, n, |k, l| {
            let (a, b) = (eig.vals[k], eig.vals[l]);
            if (a - b).abs() <= gap_tol {
                fd.eval(0.5 * (a + b))
            } else {
                (f.eval(a) - f.eval(b)) / C::new(a - b, 0.0)
            }
        });
        Ok(Self {
            space: Arc::clone(space),
            vecs: eig.vecs.clone(),
            kernel,
            bound: fd.norm(0),
        })
    }

    /// Kernel assembled from the same Gauss-Legendre rule as
    /// [`tensor_derivative_order`]; contractions through it agree with the
    /// summand-list contraction to roundoff by construction.
    pub fn from_quadrature(
        f: &FourierFunction,
        x: &Operator,
        order: usize,
    ) -> Result<Self, AlgebraError> {
        f.require_class(1)?;
        require_self_adjoint(x)?;
        let eig = linalg::hermitian_eig(x.matrix());
        let n = eig.vals.len();
        let rule = gl_rule(order);
        let pairs = rule.as_node_weight_pairs();
        let mut nodes = Vec::with_capacity(pairs.len());
        for &(node, weight) in pairs {
            nodes.push((0.5 * (node + 1.0), 0.5 * weight));
        }
        let kernel = CMat::from_fn(n, n, |k, l| {
            let (lk, ll) = (eig.vals[k], eig.vals[l]);
            let mut acc = C::new(0.0, 0.0);
            for &(c, xi) in f.atoms() {
                if c.norm() == 0.0 || xi == 0.0 {
                    continue;
                }
                let scale = c * C::new(0.0, xi);
                for &(alpha, w) in &nodes {
                    acc += scale
                        * w
                        * C::from_polar(1.0, alpha * xi * lk)
                        * C::from_polar(1.0, (1.0 - alpha) * xi * ll);
                }
            }
            acc
        });
        let bound = f
            .atoms()
            .iter()
            .map(|&(c, xi)| c.norm() * xi.abs())
            .sum();
        Ok(Self {
            space: Arc::clone(x.space()),
            vecs: eig.vecs,
            kernel,
            bound,
        })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn kernel_matrix(&self) -> &CMat {
        &self.kernel
    }

    pub fn sharp(&self, x: &Operator) -> Operator {
        assert!(
            self.space.same_shape(x.space()),
            "sharp contraction across different spaces"
        );
        let qh = linalg::adjoint(&self.vecs);
        let rotated = &(&qh * x.matrix()) * &self.vecs;
        let n = rotated.nrows();
        let had = CMat::from_fn(n, n, |i, j| rotated[(i, j)] * self.kernel[(i, j)]);
        let out = &(&self.vecs * &had) * &qh;
        Operator::from_whitened(&self.space, out)
    }
}

impl SharpAction for DerivativeKernel {
    fn space(&self) -> &Arc<Space> {
        &self.space
    }
    fn sharp(&self, x: &Operator) -> Operator {
        DerivativeKernel::sharp(self, x)
    }
    fn norm_bound(&self) -> f64 {
        self.bound
    }
}
