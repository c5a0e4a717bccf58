//! Ito Riemann sums, second quantization, the bracket pairing and the
//! Ito/Stratonovich correction identities, all in L2 of the vacuum state.
//!
//! Integrands are step processes over a grid driver whose interval values
//! are built from operators available at the interval's left endpoint.
//! The conditional expectation behind [`second_quantization`] is an
//! orthogonal projection in L2 onto the span of words in past increments.
//! That is the definition, not a shortcut; the chaos-scaling law is only
//! used as a cross-check in the tests.  A reserved increment just past the
//! conditioning time reads the expectation off; by the invariance of the
//! construction the choice of window does not matter, which the tests
//! assert.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{
    second_tensor_derivative_order, tensor_derivative_order, AlgebraError, FourierFunction,
    TensorValue2, TensorValue3,
};
use crate::fock::{Operator, Space};
use crate::linalg::{C, CMat};
use crate::rough::{
    rough_integral, ControlledBiprocess, ControlledProcess, DriverPath, LevyAreaApprox, PathGrid,
    RoughError,
};

/// Word length of the projection span used for conditional expectations.
pub const DEFAULT_WORD_LENGTH: usize = 4;

/// Hard cap on the number of projection-basis words.
const SPAN_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum ItoError {
    #[error("subdivision needs at least two strictly increasing grid times")]
    BadSubdivision,
    #[error("step process needs strictly increasing grid breakpoints, one more than values")]
    BadBreakpoints,
    #[error("no interval of the step process covers time {0}")]
    NotCovered(f64),
    #[error("conditioning window {0} must be a positive whole number of grid steps")]
    BadWindow(f64),
    #[error(
        "no fresh increment at {s} with window {h}: the grid ends at {end}; \
         extend the grid one increment past the integrand times"
    )]
    NoFreshIncrement { s: f64, h: f64, end: f64 },
    #[error("projection letter {0} is not a past cell at the conditioning time")]
    LetterNotPast(usize),
    #[error("projection span of {words} words is too large; shorten the word length or letter set")]
    SpanTooLarge { words: usize },
    #[error(transparent)]
    Rough(#[from] RoughError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

fn vac_col(a: &Operator) -> CMat {
    let n = a.space().dim();
    CMat::from_fn(n, 1, |i, _| a.matrix()[(i, 0)])
}

fn col_norm(v: &CMat) -> f64 {
    (0..v.nrows()).map(|i| v[(i, 0)].norm_sqr()).sum::<f64>().sqrt()
}

/// `sum_i conj(x_i) y_i`, antilinear in the first slot.
fn col_inner(x: &CMat, y: &CMat) -> C {
    (0..x.nrows()).map(|i| x[(i, 0)].conj() * y[(i, 0)]).sum()
}

fn col_axpy(acc: &mut CMat, s: C, x: &CMat) {
    for i in 0..acc.nrows() {
        acc[(i, 0)] += s * x[(i, 0)];
    }
}

/// `phi(b* a)`: the state pairing of two operators through their vacuum
/// vectors.
pub fn state_inner(a: &Operator, b: &Operator) -> C {
    col_inner(&vac_col(b), &vac_col(a))
}

fn subdivision_indices(driver: &DriverPath, subdivision: &[f64]) -> Result<Vec<usize>, ItoError> {
    if subdivision.len() < 2 {
        return Err(ItoError::BadSubdivision);
    }
    let idx = subdivision
        .iter()
        .map(|&t| driver.index(t))
        .collect::<Result<Vec<_>, _>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ItoError::BadSubdivision);
    }
    Ok(idx)
}

/// Endpoints of the `2^level + 1` dyadic subdivision of `[s, t]`.
pub fn dyadic_points(s: f64, t: f64, level: usize) -> Vec<f64> {
    let cells = 1usize << level;
    (0..=cells)
        .map(|k| s + (t - s) * k as f64 / cells as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// Step integrands

/// Piecewise constant order-2 integrand: `values[i]` holds on
/// `[breaks[i], breaks[i+1])`.
///
/// Adaptedness, meaning every interval value is built from operators at or
/// before the interval's left endpoint, is the constructor's contract; it
/// cannot be read off the operators and the state identities below rely on
/// it.
#[derive(Clone)]
pub struct StepBiprocess {
    driver: DriverPath,
    breaks: Vec<f64>,
    break_idx: Vec<usize>,
    values: Vec<TensorValue2>,
}

fn break_indices(driver: &DriverPath, breaks: &[f64], n_values: usize) -> Result<Vec<usize>, ItoError> {
    if n_values == 0 || breaks.len() != n_values + 1 {
        return Err(ItoError::BadBreakpoints);
    }
    let idx = breaks
        .iter()
        .map(|&t| driver.index(t))
        .collect::<Result<Vec<_>, _>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ItoError::BadBreakpoints);
    }
    Ok(idx)
}

fn covering_interval(break_idx: &[usize], t_idx: usize) -> Option<usize> {
    (0..break_idx.len() - 1).find(|&i| break_idx[i] <= t_idx && t_idx < break_idx[i + 1])
}

impl StepBiprocess {
    pub fn new(
        driver: DriverPath,
        breaks: Vec<f64>,
        values: Vec<TensorValue2>,
    ) -> Result<Self, ItoError> {
        let break_idx = break_indices(&driver, &breaks, values.len())?;
        for v in &values {
            assert!(
                v.space().same_shape(driver.space()),
                "step values live on a different space than the driver"
            );
        }
        Ok(Self { driver, breaks, break_idx, values })
    }

    pub fn constant(
        driver: DriverPath,
        value: TensorValue2,
        s: f64,
        t: f64,
    ) -> Result<Self, ItoError> {
        Self::new(driver, vec![s, t], vec![value])
    }

    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn span(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn value(&self, i: usize) -> &TensorValue2 {
        &self.values[i]
    }

    /// Value on the interval containing `t`; the last interval is half open.
    pub fn value_at(&self, t: f64) -> Result<&TensorValue2, ItoError> {
        let ti = self.driver.index(t)?;
        covering_interval(&self.break_idx, ti)
            .map(|i| &self.values[i])
            .ok_or(ItoError::NotCovered(t))
    }
}

/// Piecewise constant order-3 integrand with the same conventions as
/// [`StepBiprocess`].
#[derive(Clone)]
pub struct StepTriprocess {
    driver: DriverPath,
    breaks: Vec<f64>,
    break_idx: Vec<usize>,
    values: Vec<TensorValue3>,
}

impl StepTriprocess {
    pub fn new(
        driver: DriverPath,
        breaks: Vec<f64>,
        values: Vec<TensorValue3>,
    ) -> Result<Self, ItoError> {
        let break_idx = break_indices(&driver, &breaks, values.len())?;
        for v in &values {
            assert!(
                v.space().same_shape(driver.space()),
                "step values live on a different space than the driver"
            );
        }
        Ok(Self { driver, breaks, break_idx, values })
    }

    pub fn constant(
        driver: DriverPath,
        value: TensorValue3,
        s: f64,
        t: f64,
    ) -> Result<Self, ItoError> {
        Self::new(driver, vec![s, t], vec![value])
    }

    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn span(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    pub fn value_at(&self, t: f64) -> Result<&TensorValue3, ItoError> {
        let ti = self.driver.index(t)?;
        covering_interval(&self.break_idx, ti)
            .map(|i| &self.values[i])
            .ok_or(ItoError::NotCovered(t))
    }
}

// ---------------------------------------------------------------------------
// Ito and trapezoid Riemann sums

/// `sum_i U_{t_i} # dX_{t_i, t_{i+1}}` over the given subdivision.
pub fn ito_sum(u: &StepBiprocess, subdivision: &[f64]) -> Result<Operator, ItoError> {
    let idx = subdivision_indices(&u.driver, subdivision)?;
    let mut acc = u.driver.space().zero_op();
    for w in idx.windows(2) {
        let value = u.value_at(u.driver.time(w[0]))?;
        let dx = u.driver.increment_idx(w[0], w[1]);
        acc = &acc + &value.sharp(&dx);
    }
    Ok(acc)
}

/// Ito sums over stride-halving subdivisions of `[s, t]`, finest last,
/// together with the L2 distances between consecutive refinements.
pub fn ito_sum_refined(
    u: &StepBiprocess,
    s: f64,
    t: f64,
) -> Result<(Operator, Vec<(usize, f64)>), ItoError> {
    let i = u.driver.index(s)?;
    let j = u.driver.index(t)?;
    if j <= i {
        return Err(ItoError::BadSubdivision);
    }
    let mut strides = vec![j - i];
    while strides.last().unwrap() % 2 == 0 {
        strides.push(strides.last().unwrap() / 2);
    }
    let mut prev: Option<Operator> = None;
    let mut diffs = Vec::new();
    for stride in strides {
        let times: Vec<f64> = (i..=j)
            .step_by(stride)
            .map(|k| u.driver.time(k))
            .collect();
        let sum = ito_sum(u, &times)?;
        if let Some(p) = &prev {
            diffs.push(((j - i) / stride, (&sum - p).l2_norm()));
        }
        prev = Some(sum);
    }
    Ok((prev.unwrap(), diffs))
}

/// Mean-value Riemann sum `sum_i (U_{t_i} + U_{t_{i+1}})/2 # dX_i` of a
/// controlled integrand.
pub fn trapezoid_sum(
    u: &ControlledBiprocess,
    subdivision: &[f64],
) -> Result<Operator, ItoError> {
    let driver = u.driver().clone();
    let idx = subdivision_indices(&driver, subdivision)?;
    let mut acc = driver.space().zero_op();
    for w in idx.windows(2) {
        let a = driver.time(w[0]);
        let b = driver.time(w[1]);
        let va = u.value_at(a)?;
        let vb = u.value_at(b)?;
        let dx = driver.increment_idx(w[0], w[1]);
        let mean = &va.sharp(&dx) + &vb.sharp(&dx);
        acc = &acc + &mean.scaled(C::new(0.5, 0.0));
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Conditional expectation by projection and second quantization

/// Orthogonal projection in L2 of the state onto the span of words in a set
/// of past increments, together with a reserved fresh increment used to
/// read conditional expectations of `(dX) U (dX)` off the grid.
///
/// The basis letters may be any strict subset of the past cells; the
/// projection is unchanged as long as the span still contains the true
/// conditional expectation, which for word operands means keeping the
/// letters of the operand.  Smaller letter sets keep the Gram solve cheap.
pub struct PastProjector {
    s: f64,
    h: f64,
    space: Arc<Space>,
    letters: Arc<Vec<usize>>,
    incs: Arc<Vec<Operator>>,
    words: Arc<Vec<Vec<usize>>>,
    basis: CMat,
    gram: CMat,
    fresh: Operator,
    max_len: usize,
}

impl PastProjector {
    pub fn new(
        grid: &PathGrid,
        s: f64,
        h: f64,
        letters: &[usize],
        max_len: usize,
    ) -> Result<Self, ItoError> {
        let s_idx = grid.index(s)?;
        let step = grid.step();
        let steps = (h / step).round();
        if h <= 0.0 || steps < 1.0 || (h / step - steps).abs() > 1e-6 {
            return Err(ItoError::BadWindow(h));
        }
        let h_steps = steps as usize;
        if s_idx + h_steps > grid.segments() {
            return Err(ItoError::NoFreshIncrement {
                s,
                h,
                end: grid.time(grid.segments()),
            });
        }
        let mut letters: Vec<usize> = letters.to_vec();
        letters.sort_unstable();
        letters.dedup();
        if let Some(&bad) = letters.iter().find(|&&l| l >= s_idx) {
            return Err(ItoError::LetterNotPast(bad));
        }
        let mut count = 1usize;
        let mut total = 1usize;
        for _ in 0..max_len {
            count = count.saturating_mul(letters.len());
            total = total.saturating_add(count);
            if total > SPAN_CAP {
                return Err(ItoError::SpanTooLarge { words: total });
            }
        }
        let driver = grid.driver();
        let incs: Vec<Operator> = letters
            .iter()
            .map(|&l| driver.increment_idx(l, l + 1))
            .collect();
        let fresh = driver.increment_idx(s_idx, s_idx + h_steps);
        let n = grid.space().dim();

        // Words over letter indices, vacuum columns grown by extending each
        // word one letter to the left so the new letter applies last.
        let mut words: Vec<Vec<usize>> = Vec::with_capacity(total);
        let mut cols: Vec<CMat> = Vec::with_capacity(total);
        let mut vacuum = CMat::zeros(n, 1);
        vacuum[(0, 0)] = C::new(1.0, 0.0);
        words.push(Vec::new());
        cols.push(vacuum);
        let mut level_start = 0usize;
        for _ in 0..max_len {
            let level_end = words.len();
            for w in level_start..level_end {
                for li in 0..incs.len() {
                    let mut word = Vec::with_capacity(words[w].len() + 1);
                    word.push(li);
                    word.extend_from_slice(&words[w]);
                    let col = incs[li].matrix() * &cols[w];
                    words.push(word);
                    cols.push(col);
                }
            }
            level_start = level_end;
        }
        let m = words.len();
        let basis = CMat::from_fn(n, m, |i, j| cols[j][(i, 0)]);
        let gram = CMat::from_fn(m, m, |i, j| col_inner(&cols[i], &cols[j]));
        Ok(Self {
            s,
            h,
            space: grid.space().clone(),
            letters: Arc::new(letters),
            incs: Arc::new(incs),
            words: Arc::new(words),
            basis,
            gram,
            fresh,
            max_len,
        })
    }

    /// Letters are every base cell before the conditioning time.
    pub fn all_past(
        grid: &PathGrid,
        s: f64,
        h: f64,
        max_len: usize,
    ) -> Result<Self, ItoError> {
        let s_idx = grid.index(s)?;
        let letters: Vec<usize> = (0..s_idx).collect();
        Self::new(grid, s, h, &letters, max_len)
    }

    pub fn conditioning_time(&self) -> f64 {
        self.s
    }

    pub fn window(&self) -> f64 {
        self.h
    }

    pub fn word_length(&self) -> usize {
        self.max_len
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// `Gamma_q(u) = E((dX) u (dX) | past) / h` with the expectation taken
    /// as the least-squares projection onto the word span.
    pub fn project(&self, u: &Operator) -> Result<SecondQuantized, ItoError> {
        assert!(
            u.space().same_shape(&self.space),
            "operand lives on a different space than the projector"
        );
        let target = &(&self.fresh * u) * &self.fresh;
        let tcol = vac_col(&target);
        let m = self.words.len();
        let rhs: Vec<C> = (0..m)
            .map(|j| {
                (0..tcol.nrows())
                    .map(|i| self.basis[(i, j)].conj() * tcol[(i, 0)])
                    .sum()
            })
            .collect();
        let raw = crate::linalg::pseudo_solve_hermitian(&self.gram, &rhs, crate::tol::GRAM_CUTOFF);
        let inv_h = C::new(1.0 / self.h, 0.0);
        let coeffs: Vec<C> = raw.iter().map(|c| c * inv_h).collect();
        let coeff_col = CMat::from_fn(m, 1, |i, _| coeffs[i]);
        let column = &self.basis * &coeff_col;
        Ok(SecondQuantized {
            space: self.space.clone(),
            incs: self.incs.clone(),
            words: self.words.clone(),
            coeffs,
            column,
        })
    }
}

/// `Gamma_q(U)` held in span form: coefficients over past-increment words
/// plus the vacuum column of the result.  State functionals, applications
/// to vectors and the adjoint all work without materializing the dense
/// matrix; `operator` materializes it when the dimension allows.
pub struct SecondQuantized {
    space: Arc<Space>,
    incs: Arc<Vec<Operator>>,
    words: Arc<Vec<Vec<usize>>>,
    coeffs: Vec<C>,
    column: CMat,
}

impl SecondQuantized {
    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    /// Whitened coordinates of `Gamma_q(U) vacuum`.
    pub fn column(&self) -> &CMat {
        &self.column
    }

    pub fn l2_norm(&self) -> f64 {
        col_norm(&self.column)
    }

    pub fn phi(&self) -> C {
        self.column[(0, 0)]
    }

    /// `Gamma_q(U) v` for a whitened column `v`.
    pub fn apply_col(&self, v: &CMat) -> CMat {
        let mut acc = CMat::zeros(v.nrows(), 1);
        for (word, &c) in self.words.iter().zip(&self.coeffs) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut cur = v.to_owned();
            for &li in word.iter().rev() {
                cur = self.incs[li].matrix() * &cur;
            }
            col_axpy(&mut acc, c, &cur);
        }
        acc
    }

    /// Vacuum column of the adjoint `Gamma_q(U)*`: conjugated coefficients
    /// on reversed words.
    pub fn adjoint_column(&self) -> CMat {
        let n = self.space.dim();
        let mut acc = CMat::zeros(n, 1);
        let mut vacuum = CMat::zeros(n, 1);
        vacuum[(0, 0)] = C::new(1.0, 0.0);
        for (word, &c) in self.words.iter().zip(&self.coeffs) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut cur = vacuum.to_owned();
            for &li in word.iter() {
                cur = self.incs[li].matrix() * &cur;
            }
            col_axpy(&mut acc, c.conj(), &cur);
        }
        acc
    }

    /// Dense materialization `sum_w c_w X_{w_1} ... X_{w_k}`.
    pub fn operator(&self) -> Operator {
        let n = self.space.dim();
        let mut acc = CMat::zeros(n, n);
        for (word, &c) in self.words.iter().zip(&self.coeffs) {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let mut prod = crate::linalg::cidentity(n);
            for &li in word.iter() {
                prod = &prod * self.incs[li].matrix();
            }
            for i in 0..n {
                for j in 0..n {
                    acc[(i, j)] += c * prod[(i, j)];
                }
            }
        }
        Operator::from_whitened(&self.space, acc)
    }
}

/// Second quantization at conditioning time `s` with fresh window `h`,
/// projecting onto words over every past cell.
pub fn second_quantization(
    grid: &PathGrid,
    u: &Operator,
    s: f64,
    h: f64,
) -> Result<SecondQuantized, ItoError> {
    PastProjector::all_past(grid, s, h, DEFAULT_WORD_LENGTH)?.project(u)
}

/// Vacuum column of `(Id x Gamma_q)[T] = sum_i A_i Gamma_q(B_i)`.
pub fn id_gamma_column(proj: &PastProjector, t: &TensorValue2) -> Result<CMat, ItoError> {
    let n = proj.space.dim();
    let mut acc = CMat::zeros(n, 1);
    for (a, b) in t.summands() {
        let g = proj.project(b)?;
        let col = a.matrix() * g.column();
        col_axpy(&mut acc, C::new(1.0, 0.0), &col);
    }
    Ok(acc)
}

/// Dense `(Id x Gamma_q)[T]`.
pub fn id_gamma_operator(proj: &PastProjector, t: &TensorValue2) -> Result<Operator, ItoError> {
    let mut acc = proj.space.zero_op();
    for (a, b) in t.summands() {
        let g = proj.project(b)?;
        acc = &acc + &(a * &g.operator());
    }
    Ok(acc)
}

/// Vacuum column of `(Id x Gamma_q x Id)[T] = sum_i A_i Gamma_q(B_i) C_i`.
pub fn id_gamma_id_column(proj: &PastProjector, t: &TensorValue3) -> Result<CMat, ItoError> {
    let n = proj.space.dim();
    let mut acc = CMat::zeros(n, 1);
    for (a, b, c) in t.summands() {
        let g = proj.project(b)?;
        let mid = g.apply_col(&vac_col(c));
        let col = a.matrix() * &mid;
        col_axpy(&mut acc, C::new(1.0, 0.0), &col);
    }
    Ok(acc)
}

/// Dense `(Id x Gamma_q x Id)[T]`.
pub fn id_gamma_id_operator(
    proj: &PastProjector,
    t: &TensorValue3,
) -> Result<Operator, ItoError> {
    let mut acc = proj.space.zero_op();
    for (a, b, c) in t.summands() {
        let g = proj.project(b)?;
        acc = &acc + &(&(a * &g.operator()) * c);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// The bracket pairing and the discretized isometry

/// Sesquilinear-in-the-values extension of
/// `phi(U_1 Gamma_q(U_2 V_2*) V_1*)` over the summands of `u` and `v`.
pub fn q_bracket_with(
    proj: &PastProjector,
    u: &TensorValue2,
    v: &TensorValue2,
) -> Result<C, ItoError> {
    let mut acc = C::new(0.0, 0.0);
    for (ua, ub) in u.summands() {
        for (va, vb) in v.summands() {
            let mid = proj.project(&(ub * &vb.adjoint()))?;
            let right = mid.apply_col(&vac_col(&va.adjoint()));
            let left = vac_col(&ua.adjoint());
            acc += col_inner(&left, &right);
        }
    }
    Ok(acc)
}

/// Bracket with the all-past projection span at `(s, h)`.
pub fn q_bracket(
    grid: &PathGrid,
    u: &TensorValue2,
    v: &TensorValue2,
    s: f64,
    h: f64,
) -> Result<C, ItoError> {
    let proj = PastProjector::all_past(grid, s, h, DEFAULT_WORD_LENGTH)?;
    q_bracket_with(&proj, u, v)
}

/// Right side of the discretized Ito isometry: the bracket of the sampled
/// values weighted by the window overlaps,
/// `sum_{i,j} |w_i cap w_j| q_bracket(U_{t_i}, V_{r_j})`, each pair
/// conditioned at the later of its two sample times.
pub fn discretized_isometry(
    grid: &PathGrid,
    u: &StepBiprocess,
    sub_u: &[f64],
    v: &StepBiprocess,
    sub_v: &[f64],
    max_len: usize,
) -> Result<C, ItoError> {
    assert!(
        u.driver.space().same_shape(grid.space()),
        "step process lives on a different space than the grid"
    );
    let iu = subdivision_indices(&u.driver, sub_u)?;
    let iv = subdivision_indices(&v.driver, sub_v)?;
    let step = grid.step();
    let mut cache: BTreeMap<usize, PastProjector> = BTreeMap::new();
    let mut acc = C::new(0.0, 0.0);
    for wu in iu.windows(2) {
        for wv in iv.windows(2) {
            let lo = wu[0].max(wv[0]);
            let hi = wu[1].min(wv[1]);
            if hi <= lo {
                continue;
            }
            let overlap = (hi - lo) as f64 * step;
            if !cache.contains_key(&lo) {
                cache.insert(
                    lo,
                    PastProjector::all_past(grid, grid.time(lo), step, max_len)?,
                );
            }
            let proj = &cache[&lo];
            let bu = u.value_at(u.driver.time(wu[0]))?;
            let bv = v.value_at(v.driver.time(wv[0]))?;
            acc += C::new(overlap, 0.0) * q_bracket_with(proj, bu, bv)?;
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Quadratic sums and their limit

/// `sum_i (dX_i # U_{t_i}) # dX_i` over the subdivision.
pub fn quadratic_sum(u: &StepTriprocess, subdivision: &[f64]) -> Result<Operator, ItoError> {
    let idx = subdivision_indices(&u.driver, subdivision)?;
    let mut acc = u.driver.space().zero_op();
    for w in idx.windows(2) {
        let value = u.value_at(u.driver.time(w[0]))?;
        let dx = u.driver.increment_idx(w[0], w[1]);
        acc = &acc + &value.left_sharp(&dx).sharp(&dx);
    }
    Ok(acc)
}

fn quadratic_limit_terms(
    grid: &PathGrid,
    u: &StepTriprocess,
    s: f64,
    t: f64,
) -> Result<Vec<(usize, f64)>, ItoError> {
    let si = u.driver.index(s)?;
    let ti = u.driver.index(t)?;
    if ti <= si {
        return Err(ItoError::BadSubdivision);
    }
    let step = grid.step();
    let mut terms = Vec::new();
    for k in 0..u.values.len() {
        let lo = u.break_idx[k].max(si);
        let hi = u.break_idx[k + 1].min(ti);
        if hi > lo {
            terms.push((k, (hi - lo) as f64 * step));
        }
    }
    if terms.is_empty() {
        return Err(ItoError::NotCovered(s));
    }
    Ok(terms)
}

/// Vacuum column of the limit candidate
/// `int_s^t (Id x Gamma_q x Id)(U_r) dr`, each piece conditioned at its own
/// interval's left breakpoint.
pub fn quadratic_limit_column(
    grid: &PathGrid,
    u: &StepTriprocess,
    s: f64,
    t: f64,
    max_len: usize,
) -> Result<CMat, ItoError> {
    let n = grid.space().dim();
    let mut acc = CMat::zeros(n, 1);
    for (k, width) in quadratic_limit_terms(grid, u, s, t)? {
        let proj = PastProjector::all_past(grid, u.breaks[k], grid.step(), max_len)?;
        let col = id_gamma_id_column(&proj, &u.values[k])?;
        col_axpy(&mut acc, C::new(width, 0.0), &col);
    }
    Ok(acc)
}

/// Dense limit candidate; prefer the column form on large spaces.
pub fn quadratic_limit(
    grid: &PathGrid,
    u: &StepTriprocess,
    s: f64,
    t: f64,
    max_len: usize,
) -> Result<Operator, ItoError> {
    let mut acc = grid.space().zero_op();
    for (k, width) in quadratic_limit_terms(grid, u, s, t)? {
        let proj = PastProjector::all_past(grid, u.breaks[k], grid.step(), max_len)?;
        let term = id_gamma_id_operator(&proj, &u.values[k])?;
        acc = &acc + &term.scaled(C::new(width, 0.0));
    }
    Ok(acc)
}

/// L2 distance between the quadratic sum on the subdivision and the limit
/// candidate over the same span.
pub fn quadratic_defect(
    grid: &PathGrid,
    u: &StepTriprocess,
    subdivision: &[f64],
    max_len: usize,
) -> Result<f64, ItoError> {
    let sum = quadratic_sum(u, subdivision)?;
    let s = subdivision[0];
    let t = *subdivision.last().unwrap();
    let lim = quadratic_limit_column(grid, u, s, t, max_len)?;
    let mut diff = vac_col(&sum);
    col_axpy(&mut diff, C::new(-1.0, 0.0), &lim);
    Ok(col_norm(&diff))
}

// ---------------------------------------------------------------------------
// Ito/Stratonovich correction

/// Level-by-level comparison of the Stratonovich Levy area against the Ito
/// sum plus half the second-quantization correction.  Failures are
/// reported, never thrown.
#[derive(Debug, Clone)]
pub struct CorrectionReport {
    pub s: f64,
    pub t: f64,
    pub levels: Vec<usize>,
    /// `eps_n`: L2 distance of area minus Ito sum minus correction.
    pub residuals: Vec<f64>,
    /// State of the Stratonovich area per level.
    pub strat_state: Vec<C>,
    /// State of the Ito part per level.
    pub ito_state: Vec<C>,
    /// L2 norm of the finest-level Stratonovich area.
    pub scale: f64,
    pub monotone: bool,
    pub within_tolerance: bool,
    pub rel_tol: f64,
    pub word_length: usize,
    /// L2 change in the correction column when the projection span drops
    /// one word length; reports the span sensitivity of the conditional
    /// expectation.
    pub shorter_word_change: f64,
}

pub fn correction_check(
    grid: &PathGrid,
    tensor: &TensorValue2,
    s: f64,
    t: f64,
    levels: &[usize],
    max_len: usize,
    rel_tol: f64,
) -> Result<CorrectionReport, ItoError> {
    if t <= s {
        return Err(ItoError::Rough(RoughError::BadInterval { s, t }));
    }
    grid.index(s)?;
    grid.index(t)?;
    let driver = grid.driver();
    let proj = PastProjector::all_past(grid, s, grid.step(), max_len)?;
    let corr = id_gamma_column(&proj, tensor)?;
    let shorter_word_change = if max_len == 0 {
        0.0
    } else {
        let shorter = PastProjector::all_past(grid, s, grid.step(), max_len - 1)?;
        let corr_short = id_gamma_column(&shorter, tensor)?;
        let mut diff = corr.to_owned();
        col_axpy(&mut diff, C::new(-1.0, 0.0), &corr_short);
        col_norm(&diff)
    };

    let mut residuals = Vec::with_capacity(levels.len());
    let mut strat_state = Vec::with_capacity(levels.len());
    let mut ito_state = Vec::with_capacity(levels.len());
    let mut scale = 0.0;
    for &n in levels {
        let area = LevyAreaApprox::new(&driver, n)?;
        let strat = area.evaluate(s, t, tensor)?;
        let pts = dyadic_points(s, t, n);
        let mut ito = grid.space().zero_op();
        for w in pts.windows(2) {
            let prefix = driver.increment(s, w[0])?;
            let dx = driver.increment(w[0], w[1])?;
            ito = &ito + &(&tensor.sharp(&prefix) * &dx);
        }
        let mut resid = vac_col(&strat);
        col_axpy(&mut resid, C::new(-1.0, 0.0), &vac_col(&ito));
        col_axpy(&mut resid, C::new(-0.5 * (t - s), 0.0), &corr);
        residuals.push(col_norm(&resid));
        strat_state.push(strat.phi());
        ito_state.push(ito.phi());
        scale = strat.l2_norm();
    }
    let monotone = residuals
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
    let within_tolerance = match residuals.last() {
        Some(&last) if scale > 0.0 => last <= rel_tol * scale,
        Some(&last) => last <= 1e-14,
        None => false,
    };
    Ok(CorrectionReport {
        s,
        t,
        levels: levels.to_vec(),
        residuals,
        strat_state,
        ito_state,
        scale,
        monotone,
        within_tolerance,
        rel_tol,
        word_length: max_len,
        shorter_word_change,
    })
}

// ---------------------------------------------------------------------------
// Transition to the rough integral and the functional Ito formula

/// L2 defect of the rough Stratonovich integral of `f(X) (x) g(X)` against
/// the Ito sum plus half the integrated second-quantization correction of
/// the two composite-derivative legs, per refinement level.
pub fn transition_defects(
    grid: &PathGrid,
    f: &FourierFunction,
    g: &FourierFunction,
    s: f64,
    t: f64,
    levels: &[usize],
    max_len: usize,
    quad_order: usize,
) -> Result<Vec<(usize, f64)>, ItoError> {
    let driver = grid.driver();
    let y = ControlledProcess::qbm(&driver);
    let u = crate::rough::make_controlled_from_functions(f, g, &y)?;
    let n = grid.space().dim();
    let mut cache: BTreeMap<usize, PastProjector> = BTreeMap::new();
    let mut out = Vec::with_capacity(levels.len());
    for &lvl in levels {
        let area = LevyAreaApprox::new(&driver, lvl)?;
        let pts = dyadic_points(s, t, lvl);
        let rough = rough_integral(&u, &area, s, t, &pts)?;
        let mut ito = grid.space().zero_op();
        let mut corr = CMat::zeros(n, 1);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let dx = driver.increment(a, b)?;
            ito = &ito + &u.value_at(a)?.sharp(&dx);

            let ai = grid.index(a)?;
            if !cache.contains_key(&ai) {
                cache.insert(ai, PastProjector::all_past(grid, a, grid.step(), max_len)?);
            }
            let proj = &cache[&ai];
            let x_a = y.value_at(a)?.clone();
            let f_op = x_a.herm_fn(|l| f.eval(l));
            let g_op = x_a.herm_fn(|l| g.eval(l));
            let g_col = vac_col(&g_op);
            let df = tensor_derivative_order(f, &x_a, quad_order)?;
            let dg = tensor_derivative_order(g, &x_a, quad_order)?;
            let width = C::new(b - a, 0.0);
            // First-slot leg: triples (A_j, B_j, g) from df.
            for (aj, bj) in df.summands() {
                let gam = proj.project(bj)?;
                let col = aj.matrix() * &gam.apply_col(&g_col);
                col_axpy(&mut corr, width, &col);
            }
            // Second-slot leg: triples (f, A_j, B_j) from dg.
            for (aj, bj) in dg.summands() {
                let gam = proj.project(aj)?;
                let col = f_op.matrix() * &gam.apply_col(&vac_col(bj));
                col_axpy(&mut corr, width, &col);
            }
        }
        let mut resid = vac_col(&rough);
        col_axpy(&mut resid, C::new(-1.0, 0.0), &vac_col(&ito));
        col_axpy(&mut resid, C::new(-0.5, 0.0), &corr);
        out.push((lvl, col_norm(&resid)));
    }
    Ok(out)
}

/// L2 residual of `f(X_t) - f(X_s)` against the Ito sum of the derivative
/// plus the integrated `(Id x Gamma_q x Id)` of the second derivative, per
/// refinement level.  The simplex weight of the second derivative already
/// carries the half.
pub fn functional_ito_residual(
    grid: &PathGrid,
    f: &FourierFunction,
    s: f64,
    t: f64,
    levels: &[usize],
    max_len: usize,
    quad_order: usize,
) -> Result<Vec<(usize, f64)>, ItoError> {
    let driver = grid.driver();
    let x_s = grid.position(s)?;
    let x_t = grid.position(t)?;
    let delta_f = &x_t.herm_fn(|l| f.eval(l)) - &x_s.herm_fn(|l| f.eval(l));
    let n = grid.space().dim();
    let mut cache: BTreeMap<usize, PastProjector> = BTreeMap::new();
    let mut out = Vec::with_capacity(levels.len());
    for &lvl in levels {
        let pts = dyadic_points(s, t, lvl);
        let mut ito = grid.space().zero_op();
        let mut quad = CMat::zeros(n, 1);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let dx = driver.increment(a, b)?;
            let x_a = grid.position(a)?;
            let df = tensor_derivative_order(f, &x_a, quad_order)?;
            ito = &ito + &df.sharp(&dx);

            let ai = grid.index(a)?;
            if !cache.contains_key(&ai) {
                cache.insert(ai, PastProjector::all_past(grid, a, grid.step(), max_len)?);
            }
            let proj = &cache[&ai];
            let d2f = second_tensor_derivative_order(f, &x_a, quad_order)?;
            let col = id_gamma_id_column(proj, &d2f)?;
            col_axpy(&mut quad, C::new(b - a, 0.0), &col);
        }
        let mut resid = vac_col(&delta_f);
        col_axpy(&mut resid, C::new(-1.0, 0.0), &vac_col(&ito));
        col_axpy(&mut resid, C::new(-1.0, 0.0), &quad);
        out.push((lvl, col_norm(&resid)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Space;
    use crate::rough::ControlledBiprocess;

    fn grid(d: usize, levels: usize, q: f64) -> PathGrid {
        let space = Space::new(q, d, levels).unwrap();
        PathGrid::new(&space).unwrap()
    }

    fn cell(grid: &PathGrid, k: usize) -> Operator {
        grid.driver().increment_idx(k, k + 1)
    }

    fn unit_pair(grid: &PathGrid) -> TensorValue2 {
        let id = grid.space().identity_op();
        TensorValue2::elementary(id.clone(), id).unwrap()
    }

    #[test]
    fn step_biprocess_validation() {
        let g = grid(4, 2, 0.5);
        let v = unit_pair(&g);
        let d = g.driver();
        assert!(matches!(
            StepBiprocess::new(d.clone(), vec![0.0, 0.5, 0.25], vec![v.clone(), v.clone()]),
            Err(ItoError::BadBreakpoints)
        ));
        assert!(matches!(
            StepBiprocess::new(d.clone(), vec![0.0, 1.0], vec![v.clone(), v.clone()]),
            Err(ItoError::BadBreakpoints)
        ));
        assert!(StepBiprocess::new(d.clone(), vec![0.0, 0.33], vec![v.clone()]).is_err());
        let u = StepBiprocess::constant(d, v, 0.25, 0.75).unwrap();
        assert!(matches!(u.value_at(0.75), Err(ItoError::NotCovered(_))));
        assert!(u.value_at(0.5).is_ok());
        assert!(matches!(
            ito_sum(&u, &[0.25]),
            Err(ItoError::BadSubdivision)
        ));
    }

    #[test]
    fn unit_integrand_recovers_the_endpoint_value() {
        let g = grid(4, 2, 0.5);
        let u = StepBiprocess::constant(g.driver(), unit_pair(&g), 0.0, 1.0).unwrap();
        let coarse = ito_sum(&u, &[0.0, 1.0]).unwrap();
        let fine = ito_sum(&u, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let x1 = g.position(1.0).unwrap();
        assert!((&coarse - &x1).l2_norm() < 1e-12);
        assert!((&fine - &x1).l2_norm() < 1e-12);
        // The squared L2 norm of the sum is the elapsed time.
        assert!((fine.l2_norm().powi(2) - 1.0).abs() < 1e-10);
        assert!(fine.phi().norm() < 1e-12);
    }

    #[test]
    fn adapted_sums_have_zero_state_and_stabilize() {
        let g = grid(4, 3, 0.3);
        let id = g.space().identity_op();
        let v0 = TensorValue2::elementary(id.clone(), id).unwrap();
        let v1 = TensorValue2::elementary(cell(&g, 0), cell(&g, 1)).unwrap();
        let u = StepBiprocess::new(g.driver(), vec![0.0, 0.5, 1.0], vec![v0, v1]).unwrap();
        let (sum, diffs) = ito_sum_refined(&u, 0.0, 1.0).unwrap();
        // Once the subdivision resolves the breakpoints the sums freeze.
        assert!(diffs.first().unwrap().1 > 1e-3);
        assert!(diffs.last().unwrap().1 < 1e-12);
        assert!(sum.phi().norm() < 1e-10);
    }

    #[test]
    fn second_quantization_of_the_unit() {
        let g = grid(4, 3, 0.3);
        let gam = second_quantization(&g, &g.space().identity_op(), 0.5, 0.25).unwrap();
        let n = g.space().dim();
        let mut diff = gam.column().to_owned();
        diff[(0, 0)] -= C::new(1.0, 0.0);
        assert!(col_norm(&diff) < 1e-10, "Gamma(1) off the unit: {}", col_norm(&diff));
        assert!((gam.phi() - C::new(1.0, 0.0)).norm() < 1e-10);
        let dense = gam.operator();
        let id = g.space().identity_op();
        assert!((&dense - &id).l2_norm() < 1e-9);
        assert_eq!(gam.column().nrows(), n);
    }

    #[test]
    fn free_case_collapses_to_the_state() {
        let g = grid(4, 4, 0.0);
        let d0 = cell(&g, 0);
        let with_mass = &d0 * &d0;
        let gam = second_quantization(&g, &with_mass, 0.5, 0.25).unwrap();
        let mut diff = gam.column().to_owned();
        diff[(0, 0)] -= C::new(0.25, 0.0);
        assert!(col_norm(&diff) < 1e-8, "Gamma_0 kept past dependence: {}", col_norm(&diff));

        let centered = &d0 * &cell(&g, 1);
        let gam = second_quantization(&g, &centered, 0.5, 0.25).unwrap();
        assert!(gam.l2_norm() < 1e-8);
    }

    #[test]
    fn chaos_components_scale_by_powers_of_q() {
        let q = 0.6;
        let g = grid(4, 4, q);
        let d0 = cell(&g, 0);
        let d1 = cell(&g, 1);
        // Degree one: a single past increment.
        let gam = second_quantization(&g, &d1, 0.5, 0.25).unwrap();
        let mut diff = gam.column().to_owned();
        col_axpy(&mut diff, C::new(-q, 0.0), &vac_col(&d1));
        assert!(col_norm(&diff) < 1e-8, "degree-1 scaling: {}", col_norm(&diff));
        // Degree two: disjoint cells have zero covariance, so the product
        // is a pure second-order chaos element.
        let prod = &d0 * &d1;
        let gam = second_quantization(&g, &prod, 0.5, 0.25).unwrap();
        let mut diff = gam.column().to_owned();
        col_axpy(&mut diff, C::new(-q * q, 0.0), &vac_col(&prod));
        assert!(col_norm(&diff) < 1e-8, "degree-2 scaling: {}", col_norm(&diff));
    }

    #[test]
    fn conditioning_window_invariance() {
        let g = grid(4, 4, 0.45);
        let u = &cell(&g, 0) * &cell(&g, 1);
        let a = second_quantization(&g, &u, 0.5, 0.25).unwrap();
        let b = second_quantization(&g, &u, 0.5, 0.5).unwrap();
        let c = second_quantization(&g, &u, 0.75, 0.25).unwrap();
        for other in [&b, &c] {
            let mut diff = a.column().to_owned();
            col_axpy(&mut diff, C::new(-1.0, 0.0), other.column());
            assert!(col_norm(&diff) < 1e-8, "window dependence: {}", col_norm(&diff));
        }
    }

    #[test]
    fn adjoint_compatibility_and_state_preservation() {
        let g = grid(4, 4, 0.5);
        let u = &cell(&g, 0) * &cell(&g, 1);
        let gam = second_quantization(&g, &u, 0.5, 0.25).unwrap();
        let gam_adj = second_quantization(&g, &u.adjoint(), 0.5, 0.25).unwrap();
        let mut diff = gam_adj.column().to_owned();
        col_axpy(&mut diff, C::new(-1.0, 0.0), &gam.adjoint_column());
        assert!(col_norm(&diff) < 1e-8, "adjoint mismatch: {}", col_norm(&diff));
        assert!((gam.phi() - u.phi()).norm() < 1e-10);
    }

    #[test]
    fn contraction_bound_on_past_operands() {
        let g = grid(4, 4, 0.5);
        let x1_sq = g.position(1.0).unwrap().op_norm().powi(2);
        let d0 = cell(&g, 0);
        let d1 = cell(&g, 1);
        let operands = [
            d0.clone(),
            &d0 * &d1,
            &(&d1 * &d0).scaled(C::new(0.7, 0.4)) + &d1.scaled(C::new(-0.3, 0.1)),
        ];
        for u in &operands {
            let gam = second_quantization(&g, u, 0.5, 0.25).unwrap();
            let bound = x1_sq * u.op_norm();
            assert!(
                gam.l2_norm() <= bound * (1.0 + 1e-9),
                "contraction violated: {} > {}",
                gam.l2_norm(),
                bound
            );
        }
    }

    #[test]
    fn conditioning_domain_errors() {
        let g = grid(4, 3, 0.4);
        let id = g.space().identity_op();
        assert!(matches!(
            second_quantization(&g, &id, 1.0, 0.25),
            Err(ItoError::NoFreshIncrement { .. })
        ));
        assert!(matches!(
            second_quantization(&g, &id, 0.5, 0.3),
            Err(ItoError::BadWindow(_))
        ));
        assert!(matches!(
            PastProjector::new(&g, 0.5, 0.25, &[2], 2),
            Err(ItoError::LetterNotPast(2))
        ));
    }

    #[test]
    fn bracket_unit_free_factorization_and_bound() {
        let g = grid(4, 3, 0.3);
        let unit = unit_pair(&g);
        let b = q_bracket(&g, &unit, &unit, 0.5, 0.25).unwrap();
        assert!((b - C::new(1.0, 0.0)).norm() < 1e-10);

        // Free case: the bracket splits into a product of states.
        let gf = grid(4, 4, 0.0);
        let d0 = cell(&gf, 0);
        let d1 = cell(&gf, 1);
        let u = TensorValue2::elementary(d0.clone(), d1.clone()).unwrap();
        let v = TensorValue2::elementary(d0.clone(), d1.clone()).unwrap();
        let b = q_bracket(&gf, &u, &v, 0.5, 0.25).unwrap();
        let expect = state_inner(&d1, &d1) * state_inner(&d0, &d0);
        assert!((b - expect).norm() < 1e-8, "free factorization: {} vs {}", b, expect);

        // Positivity and the contraction bound on the diagonal.
        let gq = grid(4, 4, 0.5);
        let d0 = cell(&gq, 0);
        let d1 = cell(&gq, 1);
        let v = TensorValue2::elementary(d0.clone(), d1.clone()).unwrap();
        let diag = q_bracket(&gq, &v, &v, 0.5, 0.25).unwrap();
        assert!(diag.re >= -1e-10);
        assert!(diag.im.abs() < 1e-10);
        let x1_sq = gq.position(1.0).unwrap().op_norm().powi(2);
        let vnorm = d0.op_norm() * d1.op_norm();
        assert!(diag.re <= x1_sq * vnorm * vnorm + 1e-8);
    }

    #[test]
    fn discretized_isometry_matches_the_inner_product() {
        let g = grid(4, 4, 0.35);
        let id = g.space().identity_op();
        let u = StepBiprocess::new(
            g.driver(),
            vec![0.0, 0.5, 1.0],
            vec![
                TensorValue2::elementary(id.clone(), id.clone()).unwrap(),
                TensorValue2::elementary(cell(&g, 0), cell(&g, 1)).unwrap(),
            ],
        )
        .unwrap();
        let v = StepBiprocess::new(
            g.driver(),
            vec![0.0, 0.75, 1.0],
            vec![
                TensorValue2::elementary(cell(&g, 0).scaled(C::new(0.0, 1.0)), id.clone())
                    .unwrap(),
                TensorValue2::elementary(id.clone(), id.clone()).unwrap(),
            ],
        )
        .unwrap();
        let sub_u = [0.0, 0.25, 0.5, 0.75, 1.0];
        let sub_v = [0.0, 0.5, 0.75, 1.0];

        // Diagonal instance: the squared norm against the bracket sum.
        let su = ito_sum(&u, &sub_u).unwrap();
        let rhs = discretized_isometry(&g, &u, &sub_u, &u, &sub_u, 2).unwrap();
        assert!(
            (su.l2_norm().powi(2) - rhs.re).abs() < 1e-8 && rhs.im.abs() < 1e-9,
            "diagonal isometry: {} vs {}",
            su.l2_norm().powi(2),
            rhs
        );

        // Cross instance on different subdivisions.
        let sv = ito_sum(&v, &sub_v).unwrap();
        let lhs = state_inner(&su, &sv);
        let rhs = discretized_isometry(&g, &u, &sub_u, &v, &sub_v, 2).unwrap();
        assert!((lhs - rhs).norm() < 1e-8, "cross isometry: {} vs {}", lhs, rhs);
    }

    #[test]
    fn quadratic_limit_unit_and_free_values() {
        let g = grid(4, 3, 0.3);
        let id = g.space().identity_op();
        let unit3 = TensorValue3::elementary(id.clone(), id.clone(), id.clone()).unwrap();
        let u = StepTriprocess::constant(g.driver(), unit3, 0.25, 1.0).unwrap();
        let lim = quadratic_limit(&g, &u, 0.25, 1.0, 2).unwrap();
        let expect = g.space().scalar_op(C::new(0.75, 0.0));
        assert!((&lim - &expect).l2_norm() < 1e-8);

        let gf = grid(4, 4, 0.0);
        let d0 = cell(&gf, 0);
        let d1 = cell(&gf, 1);
        let mass = &d1 * &d1;
        let v = TensorValue3::elementary(d0.clone(), mass.clone(), d0.clone()).unwrap();
        let u = StepTriprocess::constant(gf.driver(), v, 0.5, 1.0).unwrap();
        let lim = quadratic_limit_column(&gf, &u, 0.5, 1.0, 2).unwrap();
        // Free case: the middle leg collapses to its state.
        let expect = (&d0 * &d0).scaled(mass.phi() * C::new(0.5, 0.0));
        let mut diff = lim;
        col_axpy(&mut diff, C::new(-1.0, 0.0), &vac_col(&expect));
        assert!(col_norm(&diff) < 1e-8, "free quadratic limit: {}", col_norm(&diff));
    }

    #[test]
    fn quadratic_defect_halves_with_the_mesh() {
        // The defect vector of A (x) B (x) C needs chaos depth
        // len(A) + len(B) + len(C) + 2, so the legs must stay short enough
        // for the space to hold the fluctuation instead of truncating it.
        let g = grid(8, 3, 0.3);
        let id = g.space().identity_op();
        let v = TensorValue3::elementary(id.clone(), cell(&g, 1), id.clone()).unwrap();
        let u = StepTriprocess::constant(g.driver(), v, 0.5, 1.0).unwrap();
        let mut sq = Vec::new();
        for lvl in 0..3 {
            let pts = dyadic_points(0.5, 1.0, lvl);
            let d = quadratic_defect(&g, &u, &pts, 2).unwrap();
            sq.push(d * d);
        }
        assert!(sq[0] > 1e-10);
        assert!(sq[0] / sq[1] >= 1.5, "squared defect ratio {} too small", sq[0] / sq[1]);
        assert!(sq[1] / sq[2] >= 1.5, "squared defect ratio {} too small", sq[1] / sq[2]);

        // One conjugation leg, held by a depth-4 space.
        let g = grid(4, 4, 0.45);
        let id = g.space().identity_op();
        let v = TensorValue3::elementary(cell(&g, 0), cell(&g, 1), id).unwrap();
        let u = StepTriprocess::constant(g.driver(), v, 0.5, 1.0).unwrap();
        let coarse = quadratic_defect(&g, &u, &dyadic_points(0.5, 1.0, 0), 2).unwrap();
        let fine = quadratic_defect(&g, &u, &dyadic_points(0.5, 1.0, 1), 2).unwrap();
        assert!(coarse > 1e-10);
        assert!(
            coarse.powi(2) / fine.powi(2) >= 1.5,
            "squared defect ratio {} too small",
            coarse.powi(2) / fine.powi(2)
        );
    }

    #[test]
    fn correction_report_for_the_unit_tensor() {
        let q: f64 = 0.4;
        let g = grid(8, 2, q);
        let report = correction_check(&g, &unit_pair(&g), 0.0, 1.0, &[0, 1, 2, 3], 2, 0.5).unwrap();
        for phi in &report.strat_state {
            assert!((phi - C::new(0.5, 0.0)).norm() < 1e-10, "strat state {phi}");
        }
        for phi in &report.ito_state {
            assert!(phi.norm() < 1e-10, "ito state {phi}");
        }
        assert!(report.monotone);
        assert!(report.within_tolerance);
        assert!(report.shorter_word_change < 1e-10);
        // The residual follows the closed form eps_n = sqrt(1+q)(t-s) 2^(-n/2) / 2
        // in the exact-moment regime.
        for (k, &n) in report.levels.iter().enumerate() {
            let law = 0.5 * (1.0 + q).sqrt() * (2.0f64).powf(-(n as f64) / 2.0);
            assert!(
                (report.residuals[k] - law).abs() < 1e-2 * law.max(1e-12),
                "level {n}: residual {} vs law {law}",
                report.residuals[k]
            );
        }
    }

    #[test]
    fn free_correction_term_is_a_weighted_state() {
        let g = grid(4, 4, 0.0);
        let d0 = cell(&g, 0);
        let mass = &cell(&g, 1) * &cell(&g, 1);
        let tensor = TensorValue2::elementary(d0.clone(), mass.clone()).unwrap();
        let proj = PastProjector::all_past(&g, 0.5, 0.25, 2).unwrap();
        let corr = id_gamma_column(&proj, &tensor).unwrap();
        let expect = d0.scaled(mass.phi());
        let mut diff = corr;
        col_axpy(&mut diff, C::new(-1.0, 0.0), &vac_col(&expect));
        assert!(col_norm(&diff) < 1e-8, "free correction: {}", col_norm(&diff));
    }

    #[test]
    fn trapezoid_rule_is_exact_on_the_scalar_line() {
        let driver = DriverPath::scalar_polyline(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = ControlledProcess::qbm(&driver);
        let u = ControlledBiprocess::path_tensor_unit(&y);
        for sub in [vec![0.0, 1.0], vec![0.0, 0.25, 0.5, 0.75, 1.0]] {
            let t = trapezoid_sum(&u, &sub).unwrap();
            assert!((t.matrix()[(0, 0)] - C::new(0.5, 0.0)).norm() < 1e-12);
        }
        let t = trapezoid_sum(&u, &[0.25, 0.5, 1.0]).unwrap();
        let expect = 0.5 * (1.0 - 0.25f64.powi(2));
        assert!((t.matrix()[(0, 0)] - C::new(expect, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn trapezoid_approaches_the_rough_integral() {
        let g = grid(8, 2, 0.5);
        let driver = g.driver();
        let y = ControlledProcess::qbm(&driver);
        let f = FourierFunction::new([(C::new(0.6, 0.0), 0.9), (C::new(0.25, 0.1), -0.4)], 2);
        let one = FourierFunction::constant(C::new(1.0, 0.0));
        let u = crate::rough::make_controlled_from_functions(&f, &one, &y).unwrap();
        let mut dist = Vec::new();
        for lvl in 0..3 {
            let pts = dyadic_points(0.0, 1.0, lvl);
            let trap = trapezoid_sum(&u, &pts).unwrap();
            let area = LevyAreaApprox::new(&driver, lvl).unwrap();
            let rough = rough_integral(&u, &area, 0.0, 1.0, &pts).unwrap();
            dist.push((&trap - &rough).l2_norm());
        }
        assert!(dist[2] < dist[0], "trapezoid distances not shrinking: {dist:?}");
    }

    #[test]
    fn transition_defect_decreases_under_refinement() {
        let g = grid(4, 3, 0.4);
        let f = FourierFunction::new([(C::new(0.5, 0.0), 0.7)], 2);
        let h = FourierFunction::new([(C::new(0.3, 0.1), -0.5)], 2);
        let defects = transition_defects(&g, &f, &h, 0.0, 1.0, &[0, 1, 2], 3, 8).unwrap();
        assert!(defects.last().unwrap().1 < defects[0].1, "defects {defects:?}");
    }

    #[test]
    fn functional_formula_residual_decays() {
        let g = grid(4, 3, 0.4);
        let f = FourierFunction::new([(C::new(0.6, 0.0), 0.8)], 2);
        let res = functional_ito_residual(&g, &f, 0.0, 1.0, &[1, 2], 3, 8).unwrap();
        assert!(res[1].1 < res[0].1, "residuals {res:?}");
    }
}
