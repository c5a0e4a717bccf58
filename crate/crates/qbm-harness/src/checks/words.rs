//! Joint moments of grid increments: pairing combinatorics against the
//! concrete Fock representation.

use super::{all_words, inputs, qbm_grid, word_phi, CheckCtx};
use crate::report::Judge;
use anyhow::Result;
use qbm_core::fock::Operator;
use qbm_core::pairings::{q_moment, CovarianceSpec};
use std::collections::BTreeMap;

fn increments(grid: &qbm_core::rough::PathGrid) -> Vec<Operator> {
    let driver = grid.driver();
    (0..driver.segments())
        .map(|k| driver.increment_idx(k, k + 1))
        .collect()
}

/// Exhaustive word sweep, two shapes: a two-cell grid deep enough for
/// length-8 words, and a four-cell grid up to length 4. Both keep the
/// truncation depth at least the word length, so the represented moments
/// carry no truncation error and must match the pairing sums exactly.
pub fn moment_oracle(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let qs = [0.0, 0.3, 0.6];
    let shapes = [(2usize, 8usize, 8usize), (4, 4, 4)];
    let mut max_err = 0.0f64;
    let mut words_checked = 0usize;
    for &(d, n, r_max) in &shapes {
        let h = 1.0 / d as f64;
        let spec = CovarianceSpec::diagonal(&vec![h; d])?;
        let words = all_words(d, r_max);
        for &q in &qs {
            let (_, grid) = qbm_grid(q, d, n)?;
            let incs = increments(&grid);
            for word in &words {
                let oracle = q_moment(word, &spec, q)?;
                let measured = word_phi(&incs, word);
                let err = (measured.re - oracle).abs().max(measured.im.abs());
                max_err = max_err.max(err);
                words_checked += 1;
            }
        }
    }
    judge.note("words_checked", words_checked as f64);
    judge.le(
        "max_abs_err",
        max_err,
        "oracle",
        ctx.cfg.tolerances.oracle,
    );
    let inp = inputs(&[
        ("shapes_d_n_rmax", "2/8/8 and 4/4/4".into()),
        ("q_values", "0, 0.3, 0.6".into()),
    ]);
    Ok((judge, inp))
}

/// The crossing moment of two nested increments:
/// `phi(dX_su dX_ut dX_su dX_ut) = q |u-s| |t-u|`, the smallest moment that
/// sees the deformation parameter at all. Checked against the closed form
/// both by pairing enumeration and by representation matrices.
pub fn increment_moment(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let cases = [
        (0.0, 0.25, 0.75, 0.3),
        (0.125, 0.5, 1.0, 0.6),
        (0.25, 0.5, 0.625, 0.0),
    ];
    let mut max_matrix = 0.0f64;
    let mut max_oracle = 0.0f64;
    for &(s, u, t, q) in &cases {
        let expected = q * (u - s) * (t - u);
        let (_, grid) = qbm_grid(q, 8, 2)?;
        let driver = grid.driver();
        let d1 = driver.increment(s, u)?;
        let d2 = driver.increment(u, t)?;
        let measured = word_phi(&[d1, d2], &[0, 1, 0, 1]);
        max_matrix = max_matrix
            .max((measured.re - expected).abs())
            .max(measured.im.abs());
        let spec = CovarianceSpec::diagonal(&[u - s, t - u])?;
        let oracle = q_moment(&[0, 1, 0, 1], &spec, q)?;
        max_oracle = max_oracle.max((oracle - expected).abs());
    }
    let tol = ctx.cfg.tolerances.increment_moment;
    judge.le("max_matrix_err", max_matrix, "increment_moment", tol);
    judge.le("max_oracle_err", max_oracle, "increment_moment", tol);
    let inp = inputs(&[
        (
            "cases_s_u_t_q",
            "(0,0.25,0.75,0.3) (0.125,0.5,1,0.6) (0.25,0.5,0.625,0)".into(),
        ),
        ("grid_d_n", "8/2".into()),
    ]);
    Ok((judge, inp))
}
