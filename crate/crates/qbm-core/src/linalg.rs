//! Thin wrapper over the dense linear-algebra backend (faer).
//!
//! Two policies live here rather than at call sites:
//!
//! * The backend always runs its internal kernels sequentially. Our own
//!   data-parallelism (see [`crate::par`]) happens at a coarser grain, and a
//!   fixed backend schedule keeps results bit-identical between the
//!   `parallel` and sequential builds of this crate.
//! * Every factorization goes through a checked entry point that panics with
//!   a named context on backend failure; the inputs we pass (Hermitian
//!   matrices, positive definite Grams) make failure a bug, not a data error.

use faer::linalg::triangular_inverse::invert_lower_triangular;
use faer::{Mat, Par, Side};
use num_complex::Complex64;
use std::sync::Once;

pub type C = Complex64;
pub type CMat = Mat<C>;
pub type RMat = Mat<f64>;

static BACKEND_INIT: Once = Once::new();

/// Forces the backend into sequential mode (idempotent, cheap).
pub fn backend_seq() {
    BACKEND_INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// `n x n` identity over the complex field.
pub fn cidentity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            C::new(1.0, 0.0)
        } else {
            C::new(0.0, 0.0)
        }
    })
}

/// Conjugate transpose as an owned matrix.
pub fn adjoint(m: &CMat) -> CMat {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// Largest singular value.
pub fn op_norm_dense(m: &CMat) -> f64 {
    backend_seq();
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let sv = m.singular_values().expect("svd of a finite matrix");
    sv.first().copied().unwrap_or(0.0)
}

/// Frobenius norm.
pub fn fro_norm(m: &CMat) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    let mut acc = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc = acc.max(m[(i, j)].norm());
        }
    }
    acc
}

/// Eigendecomposition of a Hermitian matrix; only the lower triangle of the
/// input is read. Eigenvalues come back in nondecreasing order.
pub struct HermEig {
    pub vals: Vec<f64>,
    pub vecs: CMat,
}

pub fn hermitian_eig(m: &CMat) -> HermEig {
    backend_seq();
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .expect("eigendecomposition of a finite Hermitian matrix");
    let n = m.nrows();
    let vals = (0..n).map(|i| e.S()[i].re).collect();
    HermEig {
        vals,
        vecs: e.U().to_owned(),
    }
}

/// `f(M)` for Hermitian `M` via the spectral theorem: `U f(S) U^H`.
pub fn hermitian_fn(m: &CMat, f: impl Fn(f64) -> C) -> CMat {
    hermitian_fn_eig(&hermitian_eig(m), f)
}

/// Same as [`hermitian_fn`], reusing a precomputed eigendecomposition.
/// Callers that evaluate many functions of one matrix (quadrature sweeps,
/// derivative kernels) pay for the factorization once.
pub fn hermitian_fn_eig(eig: &HermEig, f: impl Fn(f64) -> C) -> CMat {
    let n = eig.vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| eig.vecs[(i, j)] * f(eig.vals[j]));
    &scaled * adjoint(&eig.vecs)
}

/// Eigenvalues of a Hermitian matrix (lower triangle read).
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    backend_seq();
    m.self_adjoint_eigen(Side::Lower)
        .map(|e| (0..m.nrows()).map(|i| e.S()[i].re).collect())
        .expect("eigenvalues of a finite Hermitian matrix")
}

/// Lower Cholesky factor of a real symmetric positive definite matrix.
pub fn cholesky_lower(g: &RMat) -> RMat {
    backend_seq();
    g.llt(Side::Lower)
        .expect("Cholesky of a positive definite Gram matrix")
        .L()
        .to_owned()
}

/// Inverse of a lower-triangular complex matrix.
pub fn invert_lower(l: &CMat) -> CMat {
    backend_seq();
    let n = l.nrows();
    let mut out = CMat::zeros(n, n);
    invert_lower_triangular(out.as_mut(), l.as_ref(), Par::Seq);
    out
}

/// Real matrix promoted to the complex field.
pub fn complexify(m: &RMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| C::new(m[(i, j)], 0.0))
}

/// Solves `G x = b` for Hermitian positive semidefinite `G` through its
/// spectral decomposition, zeroing components on eigenvalues below
/// `cutoff * max_eig`. This is the minimum-norm least-squares solution, which
/// is what projection onto a possibly degenerate span needs.
pub fn pseudo_solve_hermitian(g: &CMat, b: &[C], cutoff: f64) -> Vec<C> {
    let n = g.nrows();
    assert_eq!(b.len(), n, "rhs length must match the matrix");
    let eig = hermitian_eig(g);
    let max_eig = eig.vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let thresh = cutoff * max_eig.max(1e-300);
    // coords = U^H b, damped by 1/lambda on the retained spectrum.
    let mut coords = vec![C::new(0.0, 0.0); n];
    for (k, coord) in coords.iter_mut().enumerate() {
        if eig.vals[k].abs() <= thresh {
            continue;
        }
        let mut acc = C::new(0.0, 0.0);
        for i in 0..n {
            acc += eig.vecs[(i, k)].conj() * b[i];
        }
        *coord = acc / eig.vals[k];
    }
    (0..n)
        .map(|i| {
            let mut acc = C::new(0.0, 0.0);
            for (k, &coord) in coords.iter().enumerate() {
                acc += eig.vecs[(i, k)] * coord;
            }
            acc
        })
        .collect()
}
