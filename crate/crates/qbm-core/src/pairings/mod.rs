//! Pair partitions and the combinatorial moment formula.
//!
//! Mixed moments of a jointly q-Gaussian family `(Y_1, .., Y_n)` with
//! covariance `c(i, j)` are weighted sums over pair partitions:
//!
//! ```text
//! phi(Y_{w_1} .. Y_{w_r}) = sum over pairings p of {0..r-1} of
//!                           q^crossings(p) * prod over {a,b} in p of c(w_a, w_b)
//! ```
//!
//! Everything here is exact scalar combinatorics with no truncation, which is
//! why the rest of the crate treats this module as ground truth: the Fock
//! representation, the L2 limit theorems and the conditional-expectation
//! machinery are all tested against [`q_moment`].

pub mod poly;

use thiserror::Error;

/// Maximum word length accepted by [`q_moment`] and [`enumerate_pairings`].
/// `(r - 1)!!` pairings exist at length `r`; 12 keeps that at 10_395.
pub const R_MAX: usize = 12;

/// Relative tolerance for the symmetry check on covariance input.
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative slack allowed on the smallest covariance eigenvalue.
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("word length {0} exceeds the supported maximum {R_MAX}")]
    WordTooLong(usize),
    #[error("word refers to label {label} but only {n} labels are declared")]
    LabelOutOfRange { label: usize, n: usize },
    #[error("covariance needs {expected} entries for {n} labels, got {got}")]
    CovarianceShape { expected: usize, n: usize, got: usize },
    #[error("covariance is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("covariance has eigenvalue {0:.6e} below the PSD tolerance")]
    NotPositive(f64),
}

/// A pairing of `{0, .., r-1}`: disjoint pairs `(a, b)` with `a < b` covering
/// every index, stored sorted by first element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// The blocks in canonical order (ascending first elements).
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of indices covered.
    pub fn size(&self) -> usize {
        2 * self.pairs.len()
    }
}

/// All pairings of `{0, .., r-1}` in canonical lexicographic order (pair lists
/// compared elementwise). Odd `r` yields an empty list; `r = 0` yields the
/// single empty pairing.
pub fn enumerate_pairings(r: usize) -> Result<Vec<Pairing>, PairingError> {
    if r > R_MAX {
        return Err(PairingError::WordTooLong(r));
    }
    if r % 2 == 1 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut used = vec![false; r];
    let mut cur = Vec::with_capacity(r / 2);
    enumerate_rec(&mut used, &mut cur, &mut out);
    Ok(out)
}

fn enumerate_rec(used: &mut [bool], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    let Some(a) = used.iter().position(|u| !u) else {
        out.push(Pairing { pairs: cur.clone() });
        return;
    };
    used[a] = true;
    for b in a + 1..used.len() {
        if !used[b] {
            used[b] = true;
            cur.push((a, b));
            enumerate_rec(used, cur, out);
            cur.pop();
            used[b] = false;
        }
    }
    used[a] = false;
}

/// Number of crossing pairs of blocks: `{a1,b1}` and `{a2,b2}` cross when
/// `a1 < a2 < b1 < b2`.
pub fn crossing_number(p: &Pairing) -> usize {
    let ps = &p.pairs;
    let mut crossings = 0;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            // Canonical order gives ps[i].0 < ps[j].0.
            let (_, b1) = ps[i];
            let (a2, b2) = ps[j];
            if a2 < b1 && b1 < b2 {
                crossings += 1;
            }
        }
    }
    crossings
}

/// Covariance data for a finite q-Gaussian family: named labels plus a
/// symmetric positive semidefinite matrix.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    labels: Vec<String>,
    n: usize,
    cov: Vec<f64>,
}

impl CovarianceSpec {
    /// Validates shape, symmetry and positive semidefiniteness.
    pub fn new(labels: Vec<String>, cov: Vec<f64>) -> Result<Self, PairingError> {
        let n = labels.len();
        if cov.len() != n * n {
            return Err(PairingError::CovarianceShape {
                expected: n * n,
                n,
                got: cov.len(),
            });
        }
        let scale = cov.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for i in 0..n {
            for j in i + 1..n {
                if (cov[i * n + j] - cov[j * n + i]).abs() > SYMMETRY_TOL * scale {
                    return Err(PairingError::NotSymmetric(i, j));
                }
            }
        }
        if n > 0 {
            let m = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (cov[i * n + j] + cov[j * n + i]));
            let eigs = m
                .self_adjoint_eigenvalues(faer::Side::Lower)
                .expect("eigenvalues of a finite symmetric matrix");
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -PSD_TOL * scale {
                return Err(PairingError::NotPositive(min));
            }
        }
        Ok(Self { labels, n, cov })
    }

    /// Anonymous labels `y0..y{n-1}` around a raw matrix.
    pub fn from_matrix(n: usize, cov: Vec<f64>) -> Result<Self, PairingError> {
        Self::new((0..n).map(|i| format!("y{i}")).collect(), cov)
    }

    /// Family `(X_{t_1}, .., X_{t_n})` of q-Brownian marginals:
    /// `c(i, j) = min(t_i, t_j)`.
    pub fn brownian(times: &[f64]) -> Self {
        let n = times.len();
        let cov = (0..n * n)
            .map(|k| times[k / n].min(times[k % n]))
            .collect();
        Self::new(times.iter().map(|t| format!("X({t})")).collect(), cov)
            .expect("min(s,t) covariance is PSD")
    }

    /// Orthogonal family with the given variances (e.g. disjoint increments).
    pub fn diagonal(vars: &[f64]) -> Result<Self, PairingError> {
        let n = vars.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            cov[i * n + i] = vars[i];
        }
        Self::new((0..n).map(|i| format!("d{i}")).collect(), cov)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.n + j]
    }

    fn check_word(&self, word: &[usize]) -> Result<(), PairingError> {
        for &w in word {
            if w >= self.n {
                return Err(PairingError::LabelOutOfRange { label: w, n: self.n });
            }
        }
        Ok(())
    }
}

/// The combinatorial moment `phi(Y_{w_0} .. Y_{w_{r-1}})`.
///
/// Backtracks over pairings, pruning any branch whose next block carries a
/// zero covariance factor, with crossings counted incrementally. Odd-length
/// words are 0, the empty word is 1. `q` is treated as a formal parameter
/// (the result is a polynomial in it); range policy for `q` belongs to the
/// model layer, not here.
pub fn q_moment(word: &[usize], spec: &CovarianceSpec, q: f64) -> Result<f64, PairingError> {
    spec.check_word(word)?;
    let r = word.len();
    if r > R_MAX {
        return Err(PairingError::WordTooLong(r));
    }
    if r % 2 == 1 {
        return Ok(0.0);
    }
    if r == 0 {
        return Ok(1.0);
    }
    let mut used = vec![false; r];
    let mut open: Vec<(usize, usize)> = Vec::with_capacity(r / 2);
    Ok(moment_rec(word, spec, q, &mut used, &mut open, 1.0))
}

fn moment_rec(
    word: &[usize],
    spec: &CovarianceSpec,
    q: f64,
    used: &mut [bool],
    blocks: &mut Vec<(usize, usize)>,
    weight: f64,
) -> f64 {
    let Some(a) = used.iter().position(|u| !u) else {
        return weight;
    };
    let mut acc = 0.0;
    used[a] = true;
    for b in a + 1..used.len() {
        if used[b] {
            continue;
        }
        let c = spec.cov(word[a], word[b]);
        if c == 0.0 {
            continue;
        }
        // New block (a, b) crosses an existing (x, y) iff x < a < y < b.
        let crossings = blocks.iter().filter(|&&(_, y)| a < y && y < b).count();
        used[b] = true;
        blocks.push((a, b));
        acc += moment_rec(word, spec, q, used, blocks, weight * c * q.powi(crossings as i32));
        blocks.pop();
        used[b] = false;
    }
    used[a] = false;
    acc
}

/// Per-pairing contributions `(pairing, q^crossings * prod cov)`, in canonical
/// order. Slower than [`q_moment`]; meant for reports and cross-checks.
pub fn q_moment_table(
    word: &[usize],
    spec: &CovarianceSpec,
    q: f64,
) -> Result<Vec<(Pairing, f64)>, PairingError> {
    spec.check_word(word)?;
    let pairings = enumerate_pairings(word.len())?;
    Ok(pairings
        .into_iter()
        .map(|p| {
            let mut contrib = q.powi(crossing_number(&p) as i32);
            for &(a, b) in p.pairs() {
                contrib *= spec.cov(word[a], word[b]);
            }
            (p, contrib)
        })
        .collect())
}
