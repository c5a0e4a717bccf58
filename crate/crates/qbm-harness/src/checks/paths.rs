//! Pathwise regularity: the square-root Holder bound and the Chen identity.

use super::{inputs, qbm_grid, CheckCtx};
use crate::report::Judge;
use anyhow::Result;
use qbm_core::algebra::TensorValue2;
use qbm_core::rough::LevyAreaApprox;
use std::collections::BTreeMap;

/// `||X_t - X_s|| <= ||X_1|| |t-s|^{1/2}` over every grid pair; with the
/// stationary covariance the increments are copies of `sqrt(t-s) X_1`, so
/// the bound is saturated and only representation error is at stake.
pub fn holder(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let d = 16usize;
    let mut worst_excess = f64::NEG_INFINITY;
    for &q in &[0.0, 0.5] {
        let (_, grid) = qbm_grid(q, d, 2)?;
        let x1_norm = grid.position(1.0)?.op_norm();
        for i in 0..d {
            for j in (i + 1)..=d {
                let (s, t) = (grid.time(i), grid.time(j));
                let inc_norm = (&grid.position(t)? - &grid.position(s)?).op_norm();
                let ratio = inc_norm / (t - s).sqrt();
                worst_excess = worst_excess.max(ratio / x1_norm - 1.0);
            }
        }
    }
    judge.le(
        "worst_excess",
        worst_excess.max(0.0),
        "holder",
        ctx.cfg.tolerances.holder,
    );
    let inp = inputs(&[
        ("grid_d_n", "16/2".into()),
        ("q_values", "0, 0.5".into()),
        ("pairs_per_q", "136".into()),
    ]);
    Ok((judge, inp))
}

/// Product Chen identity at matched levels, every dyadic triple. The deep
/// sweep runs on a 32-cell grid with the unit tensor and cached area
/// evaluations; a second, smaller sweep exercises a frozen two-leg tensor
/// through the library's own defect routine.
pub fn chen(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let mut max_defect = 0.0f64;
    let mut triples = 0usize;

    let (space, grid) = qbm_grid(0.5, 32, 1)?;
    let driver = grid.driver();
    let unit = TensorValue2::identity(&space);
    for level in 0..=5usize {
        let area = LevyAreaApprox::new(&driver, level)?;
        let cells = 1usize << level;
        let pts: Vec<f64> = (0..=cells).map(|k| k as f64 / cells as f64).collect();
        let m = pts.len();
        let mut areas = vec![vec![None; m]; m];
        let mut incs = vec![vec![None; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                areas[i][j] = Some(area.evaluate(pts[i], pts[j], &unit)?);
                incs[i][j] = Some(driver.increment(pts[i], pts[j])?);
            }
        }
        for i in 0..m {
            for u in (i + 1)..m {
                for j in (u + 1)..m {
                    let cross = incs[i][u].as_ref().unwrap() * incs[u][j].as_ref().unwrap();
                    let defect = &(areas[i][j].as_ref().unwrap()
                        - areas[i][u].as_ref().unwrap())
                        - &(areas[u][j].as_ref().unwrap() + &cross);
                    max_defect = max_defect.max(defect.op_norm());
                    triples += 1;
                }
            }
        }
    }

    let (space2, grid2) = qbm_grid(0.5, 8, 2)?;
    let driver2 = grid2.driver();
    let x1 = grid2.position(1.0)?;
    let frozen = TensorValue2::elementary(x1.clone(), x1)?;
    for level in 0..=3usize {
        let area = LevyAreaApprox::new(&driver2, level)?;
        let cells = 1usize << level;
        let pts: Vec<f64> = (0..=cells).map(|k| k as f64 / cells as f64).collect();
        for i in 0..pts.len() {
            for u in (i + 1)..pts.len() {
                for j in (u + 1)..pts.len() {
                    for tensor in [&TensorValue2::identity(&space2), &frozen] {
                        max_defect =
                            max_defect.max(area.chen_defect(pts[i], pts[u], pts[j], tensor)?);
                        triples += 1;
                    }
                }
            }
        }
    }

    judge.note("triples", triples as f64);
    judge.le("max_defect", max_defect, "chen", ctx.cfg.tolerances.chen);
    let inp = inputs(&[
        ("deep_sweep", "d=32 n=1 q=0.5 levels 0..=5 unit tensor".into()),
        ("tensor_sweep", "d=8 n=2 q=0.5 levels 0..=3 unit and X1(x)X1".into()),
    ]);
    Ok((judge, inp))
}
