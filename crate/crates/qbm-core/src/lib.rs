//! q-Brownian motion and its rough-path calculus on truncated q-Fock spaces.
//!
//! The crate is organised in layers:
//!
//! * [`pairings`] — exact moment combinatorics for jointly q-Gaussian
//!   families, plus a symbolic polynomial engine over such families. This is
//!   the reference oracle; it has no truncation error.
//! * [`law`] — the marginal distribution of a single q-Gaussian variable:
//!   density, support, spectral moments by quadrature.
//! * [`fock`] — the concrete representation: truncated Fock space with
//!   q-deformed inner product, creation/annihilation/position operators,
//!   states, norms and conditional expectations.
//! * [`algebra`] — tensor calculus over the operator algebra: `A ⊗ A` and
//!   `A ⊗ A ⊗ A` values, the `♯` contractions, Fourier functional calculus
//!   and tensor-valued derivatives.
//! * [`rough`] — the rough-path layer: discrete paths, iterated integrals
//!   (Ito and Stratonovich), controlled biprocesses, rough integrals and
//!   differential equations.
//! * [`ito`] — Ito-type approximation sums, the q-deformed quadratic
//!   variation and the Ito-Stratonovich correction.
//!
//! Numerical kernels run data-parallel via rayon when the `parallel` feature
//! (default) is on; with `--no-default-features` the identical code path runs
//! sequentially and produces bit-identical results, because every parallel
//! reduction is an indexed collect followed by a sequential fold.

pub mod algebra;
pub mod fock;
pub mod ito;
pub mod law;
pub mod linalg;
pub mod pairings;
pub mod par;
pub mod rough;

pub use num_complex::Complex64;

/// Machine-profile constants shared by the numerical layers.
pub mod tol {
    /// Spectral cutoff used when pseudo-inverting Gram matrices.
    pub const GRAM_CUTOFF: f64 = 1e-10;
    /// Default absolute tolerance for exactness assertions in debug builds.
    pub const EXACT: f64 = 1e-10;
}
