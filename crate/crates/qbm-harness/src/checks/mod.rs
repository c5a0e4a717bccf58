//! The named checks, one per acceptance-style property of the crate.
//!
//! Each check is a pure function of the config and seed: it picks its own
//! published sizes (so results are comparable across machines), measures,
//! and returns a [`ReportRecord`] with every number it judged. Checks are
//! independent; any one can run in isolation via `qbm report --check NAME`.

mod correction;
mod density;
mod determinism;
mod integrals;
mod levy;
mod paths;
mod quantize;
mod rde;
mod sparse;
mod words;

use crate::config::RunConfig;
use crate::report::{Judge, ReportRecord};
use anyhow::{bail, Result};
use num_complex::Complex64 as C;
use qbm_core::fock::{Operator, Space};
use qbm_core::linalg::CMat;
use qbm_core::rough::PathGrid;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

pub struct CheckCtx {
    pub cfg: RunConfig,
    pub seed: u64,
}

impl CheckCtx {
    pub fn new(cfg: RunConfig) -> Self {
        let seed = cfg.seed;
        Self { cfg, seed }
    }
}

type CheckFn = fn(&CheckCtx) -> Result<(Judge, BTreeMap<String, String>)>;

/// `(name, criterion number, body)`, in report order.
const REGISTRY: [(&str, usize, CheckFn); 13] = [
    ("moment-oracle", 1, words::moment_oracle),
    ("increment-moment", 2, words::increment_moment),
    ("density", 3, density::density),
    ("holder", 4, paths::holder),
    ("chen", 5, paths::chen),
    ("levy-decay", 6, levy::levy_decay),
    ("second-quantization", 7, quantize::second_quantization),
    ("ito-isometry", 8, quantize::ito_isometry),
    ("ito-correction", 9, correction::ito_correction),
    ("quadratic-variation", 10, correction::quadratic_variation),
    ("integral-consistency", 11, integrals::integral_consistency),
    ("rde", 12, rde::rde),
    ("determinism", 13, determinism::determinism),
];

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(name, _, _)| *name).collect()
}

pub fn run(name: &str, ctx: &CheckCtx) -> Result<ReportRecord> {
    let Some((_, criterion, body)) = REGISTRY.iter().find(|(n, _, _)| *n == name) else {
        bail!(
            "unknown check `{name}`; available: {}",
            names().join(", ")
        );
    };
    let start = Instant::now();
    let (judge, inputs) = body(ctx)?;
    Ok(judge.into_record(name, *criterion, inputs, start.elapsed().as_millis() as u64))
}

pub fn run_all(ctx: &CheckCtx) -> Result<Vec<ReportRecord>> {
    names().iter().map(|name| run(name, ctx)).collect()
}

// Shared helpers.

pub(crate) fn inputs(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

pub fn qbm_grid(q: f64, d: usize, n: usize) -> Result<(Arc<Space>, PathGrid)> {
    let space = Space::new(q, d, n)?;
    let grid = PathGrid::new(&space)?;
    Ok((space, grid))
}

/// `phi(M_{w_1} .. M_{w_r})` by chaining matrix-vector products against the
/// vacuum; the whitened basis is orthonormal, so the moment is the leading
/// coefficient.
pub fn word_phi(ops: &[Operator], word: &[usize]) -> C {
    let dim = ops[0].space().dim();
    let mut col = CMat::zeros(dim, 1);
    col[(0, 0)] = C::new(1.0, 0.0);
    for &i in word.iter().rev() {
        col = ops[i].matrix() * &col;
    }
    col[(0, 0)]
}

/// All words over `letters` symbols of length `1..=max_len`, shortest
/// first, in lexicographic order within a length.
pub fn all_words(letters: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut words = Vec::new();
    for r in 1..=max_len {
        let count = letters.pow(r as u32);
        for mut code in 0..count {
            let mut word = vec![0usize; r];
            for slot in word.iter_mut().rev() {
                *slot = code % letters;
                code /= letters;
            }
            words.push(word);
        }
    }
    words
}
