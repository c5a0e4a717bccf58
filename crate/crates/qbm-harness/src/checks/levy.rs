//! Cauchy decay of the dyadic Levy-area approximations in operator norm.
//!
//! Level 6 needs a 64-cell grid, whose depth-2 space is past the dense cap,
//! so everything here stays matrix free: the areas are operator expressions
//! and norms come from block power iteration in the q-geometry.

use super::{inputs, CheckCtx};
use crate::report::Judge;
use anyhow::Result;
use qbm_core::fock::expr::NormOptions;
use qbm_core::fock::Space;
use qbm_core::rough::area_expr;
use std::collections::BTreeMap;

/// `sqrt(1/d)` on base cells `[a, b)`: the coefficient vector of
/// `X_{b/d} - X_{a/d}`.
pub(crate) fn pos_coeffs(d: usize, a: usize, b: usize) -> Vec<f64> {
    let w = (1.0 / d as f64).sqrt();
    let mut c = vec![0.0; d];
    for slot in c.iter_mut().take(b).skip(a) {
        *slot = w;
    }
    c
}

pub fn levy_decay(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let d = 64usize;
    let (s, t) = (0.5, 1.0);
    let xs = pos_coeffs(d, 0, d / 2);
    let families: [(&str, Option<&[f64]>, Option<&[f64]>); 3] = [
        ("unit", None, None),
        ("xs_unit", Some(&xs), None),
        ("xs_xs", Some(&xs), Some(&xs)),
    ];
    let opts = NormOptions {
        block: 2,
        max_iters: 48,
        rel_tol: 1e-4,
        seed: 11,
    };
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_defect = f64::INFINITY;
    for &q in &[0.0, 0.5] {
        let space = Space::new(q, d, 2)?;
        for (fam, left, right) in families {
            let exprs: Vec<_> = (1..=6)
                .map(|n| area_expr(&space, n, s, t, left, right))
                .collect::<Result<_, _>>()?;
            let mut defects = Vec::new();
            for n in 2..=6usize {
                let diff = exprs[n - 1].sub(&exprs[n - 2]);
                let est = diff.op_norm_estimate(&opts);
                judge.require(
                    est.converged,
                    &format!("norm estimate for D_{n} ({fam}, q={q}) did not settle"),
                );
                defects.push(est.value);
            }
            for (i, pair) in defects.windows(2).enumerate() {
                let ratio = pair[1] / pair[0];
                judge.note(&format!("ratio_d{}_{}_q{q}", i + 3, fam), ratio);
                max_ratio = max_ratio.max(ratio);
            }
            min_defect = min_defect.min(defects.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
    judge.note("min_defect", min_defect);
    judge.require(min_defect > 0.0, "a defect norm vanished");
    judge.le(
        "max_ratio",
        max_ratio,
        "levy_ratio",
        ctx.cfg.tolerances.levy_ratio,
    );
    let inp = inputs(&[
        ("grid_d_n", "64/2 (matrix-free)".into()),
        ("interval", "[0.5, 1]".into()),
        ("levels", "defects D_n for n = 2..=6".into()),
        ("q_values", "0, 0.5".into()),
        ("tensors", "1(x)1, X_s(x)1, X_s(x)X_s".into()),
    ]);
    Ok((judge, inp))
}
