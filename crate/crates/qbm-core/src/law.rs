//! Marginal law of a standardized q-Gaussian variable (variance 1).
//!
//! For `0 <= q < 1` the law is compactly supported on
//! `[-2/sqrt(1-q), 2/sqrt(1-q)]` and absolutely continuous. Under the
//! substitution `x = 2 cos(theta) / sqrt(1-q)`, `theta in [0, pi]`, the
//! density is
//!
//! ```text
//! rho(x(theta)) = sqrt(1-q)/pi * sin(theta)
//!                 * prod_{n>=1} (1 - q^n) |1 - q^n e^{2 i theta}|^2
//! ```
//!
//! At `q = 0` the product collapses to 1 and the semicircle law appears; as
//! `q -> 1` the support grows and the law approaches a standard Gaussian.
//!
//! The infinite product is truncated at a level chosen from a rigorous tail
//! bound, and moments are computed by Gauss-Legendre quadrature in `theta`
//! with node doubling until the requested tolerance is met. Spectral moments
//! computed here must agree with the pair-partition combinatorics of
//! [`crate::pairings`]; that cross-check is the backbone of the test suite.

use crate::par;
use gauss_quad::GaussLegendre;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use thiserror::Error;

/// Default truncation target for the density product's relative tail.
const PRODUCT_TAIL_TARGET: f64 = 1e-15;
/// Hard cap on product terms (reached only as q approaches 1).
const PRODUCT_TERMS_CAP: usize = 50_000;
/// Default relative tolerance for moment quadrature.
pub const MOMENT_TOL: f64 = 1e-10;
/// Node-doubling cap; the integrand is analytic, so this is generous.
const MAX_NODES: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum LawError {
    #[error("deformation parameter q = {0} is outside [0, 1)")]
    QOutOfRange(f64),
    #[error("moment quadrature did not reach tolerance {tol:.2e} within {nodes} nodes")]
    QuadratureStalled { tol: f64, nodes: usize },
}

/// The distribution of one standardized q-Gaussian variable.
#[derive(Debug, Clone)]
pub struct MarginalLaw {
    q: f64,
    product_terms: usize,
}

impl MarginalLaw {
    /// Law for the given `q`, with the product truncation chosen so that its
    /// relative tail is below `1e-15`.
    pub fn new(q: f64) -> Result<Self, LawError> {
        if !(0.0..1.0).contains(&q) {
            return Err(LawError::QOutOfRange(q));
        }
        let mut k = 1;
        while product_tail_bound(q, k) > PRODUCT_TAIL_TARGET && k < PRODUCT_TERMS_CAP {
            k += 1;
        }
        Ok(Self { q, product_terms: k })
    }

    /// Same law with an explicit number of product terms; used to test the
    /// truncation bound itself.
    pub fn with_product_terms(q: f64, product_terms: usize) -> Result<Self, LawError> {
        if !(0.0..1.0).contains(&q) {
            return Err(LawError::QOutOfRange(q));
        }
        Ok(Self {
            q,
            product_terms: product_terms.max(1),
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn product_terms(&self) -> usize {
        self.product_terms
    }

    /// Endpoints of the support, `[-2/sqrt(1-q), 2/sqrt(1-q)]`.
    pub fn support(&self) -> (f64, f64) {
        let edge = 2.0 / (1.0 - self.q).sqrt();
        (-edge, edge)
    }

    /// Relative error committed by truncating the density product.
    pub fn product_tail(&self) -> f64 {
        product_tail_bound(self.q, self.product_terms)
    }

    /// The truncated product `prod_{n=1..K} (1 - q^n) |1 - q^n e^{2 i theta}|^2`.
    fn product(&self, theta: f64) -> f64 {
        let q = self.q;
        if q == 0.0 {
            return 1.0;
        }
        let cos2t = (2.0 * theta).cos();
        let mut acc = 1.0;
        let mut qn = q;
        for _ in 0..self.product_terms {
            // |1 - q^n e^{2 i theta}|^2 = 1 - 2 q^n cos(2 theta) + q^{2n}
            acc *= (1.0 - qn) * (1.0 - 2.0 * qn * cos2t + qn * qn);
            qn *= q;
        }
        acc
    }

    /// Density at `x`; zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let s = (1.0 - self.q).sqrt();
        // Clamp guards against rounding when x sits exactly on the edge.
        let theta = (x * s / 2.0).clamp(-1.0, 1.0).acos();
        s / PI * theta.sin() * self.product(theta)
    }

    /// `E[X^r]` by quadrature, to relative tolerance [`MOMENT_TOL`].
    pub fn moment(&self, r: usize) -> Result<f64, LawError> {
        Ok(self.moments_upto(r, MOMENT_TOL)?[r])
    }

    /// All moments `E[X^0], .., E[X^rmax]` in one sweep.
    ///
    /// In `theta` coordinates the `r`-th moment is
    /// `int_0^pi x(theta)^r * 2/pi * sin^2(theta) * product(theta) dtheta`,
    /// which absorbs both the density and the Jacobian. Node counts double
    /// until successive values agree to `tol` (relative, across all orders).
    pub fn moments_upto(&self, rmax: usize, tol: f64) -> Result<Vec<f64>, LawError> {
        let mut nodes = 32;
        let mut prev = self.moment_pass(rmax, nodes);
        loop {
            nodes *= 2;
            if nodes > MAX_NODES {
                return Err(LawError::QuadratureStalled { tol, nodes });
            }
            let cur = self.moment_pass(rmax, nodes);
            let err = prev
                .iter()
                .zip(&cur)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                .fold(0.0f64, f64::max);
            if err < tol {
                return Ok(cur);
            }
            prev = cur;
        }
    }

    fn moment_pass(&self, rmax: usize, nodes: usize) -> Vec<f64> {
        let rule = GaussLegendre::new(NonZeroUsize::new(nodes).expect("nonzero node count"));
        let pairs = rule.as_node_weight_pairs();
        let scale = 2.0 / (1.0 - self.q).sqrt();
        // Per-node contributions in parallel, reduced in index order.
        let terms = par::map_slice(pairs, |&(node, weight)| {
            let theta = (node + 1.0) * PI / 2.0;
            let sin = theta.sin();
            let base = 2.0 / PI * sin * sin * self.product(theta) * weight * PI / 2.0;
            let x = scale * theta.cos();
            let mut row = Vec::with_capacity(rmax + 1);
            let mut xp = 1.0;
            for _ in 0..=rmax {
                row.push(base * xp);
                xp *= x;
            }
            row
        });
        let mut out = vec![0.0; rmax + 1];
        for row in terms {
            for (o, t) in out.iter_mut().zip(row) {
                *o += t;
            }
        }
        out
    }
}

/// Upper bound on the relative error of truncating the density product after
/// `k` terms, uniform in `theta`.
///
/// Each omitted factor `(1 - q^n) |1 - q^n e^{2 i theta}|^2` has log-magnitude
/// at most `3 q^n / (1 - q^n)`, and summing the geometric tail gives
/// `exp(3 q^{k+1} / ((1-q)(1-q^{k+1}))) - 1`.
pub fn product_tail_bound(q: f64, k: usize) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    let qk = q.powi(k as i32 + 1);
    (3.0 * qk / ((1.0 - q) * (1.0 - qk))).exp_m1()
}
