//! Second quantization and the discretized Ito isometry.
//!
//! Sizes follow the exactness discipline: on a grid with `d` cells and
//! depth `n`, every asserted identity only touches moments of degree at
//! most `2n`, so the truncated representation carries no truncation error
//! and absolute tolerances in the 1e-8 range are meaningful.

use super::{inputs, qbm_grid, CheckCtx};
use crate::report::Judge;
use crate::rng::stream;
use anyhow::Result;
use num_complex::Complex64 as C;
use qbm_core::algebra::TensorValue2;
use qbm_core::fock::Operator;
use qbm_core::ito::{
    discretized_isometry, ito_sum, state_inner, PastProjector, SecondQuantized, StepBiprocess,
};
use qbm_core::linalg::CMat;
use qbm_core::rough::{DriverPath, PathGrid};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;

fn cell_increments(driver: &DriverPath) -> Vec<Operator> {
    (0..driver.segments())
        .map(|k| driver.increment_idx(k, k + 1))
        .collect()
}

fn rand_coeff(rng: &mut ChaCha12Rng) -> C {
    let amp = 0.4 + 0.6 * rng.gen::<f64>();
    let phase = std::f64::consts::TAU * rng.gen::<f64>();
    C::new(amp * phase.cos(), amp * phase.sin())
}

/// Random combination of words in the given increment letters, up to the
/// stated word length (length 0 gives a scalar term).
fn random_past_operand(
    rng: &mut ChaCha12Rng,
    incs: &[Operator],
    letters: usize,
    max_len: usize,
) -> Operator {
    let space = incs[0].space();
    let terms = 1 + rng.gen_range(0..3usize);
    let mut acc = space.zero_op();
    for _ in 0..terms {
        let len = rng.gen_range(0..=max_len);
        let mut word = space.identity_op();
        for _ in 0..len {
            let inc = &incs[rng.gen_range(0..letters)];
            word = &word * inc;
        }
        acc = &acc + &word.scaled(rand_coeff(rng));
    }
    acc
}

fn column_distance(a: &CMat, b: &CMat) -> f64 {
    (0..a.nrows())
        .map(|i| (a[(i, 0)] - b[(i, 0)]).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn distance_to_scalar(sq: &SecondQuantized, c: C) -> f64 {
    let col = sq.column();
    (0..col.nrows())
        .map(|i| {
            let want = if i == 0 { c } else { C::new(0.0, 0.0) };
            (col[(i, 0)] - want).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

fn unit_fixed_point_error(grid: &PathGrid) -> Result<f64> {
    let unit = grid.space().identity_op();
    let sq = qbm_core::ito::second_quantization(grid, &unit, 0.75, 0.25)?;
    Ok(distance_to_scalar(&sq, C::new(1.0, 0.0)))
}

pub fn second_quantization(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let tols = &ctx.cfg.tolerances;
    let mut rng = stream(ctx.seed, "second-quantization");

    // The unit is fixed by the conditional expectation at any q.
    let mut unit_err = 0.0f64;
    for &q in &[0.0, 0.35, 0.6] {
        let (_, grid) = qbm_grid(q, 4, 4)?;
        unit_err = unit_err.max(unit_fixed_point_error(&grid)?);
    }
    judge.le("unit_err", unit_err, "gamma_unit", tols.gamma_unit);

    // Free case: the increments around the operand are free from the past,
    // so the sandwich collapses to the state.
    let (_, grid0) = qbm_grid(0.0, 4, 4)?;
    let incs0 = cell_increments(&grid0.driver());
    let mut free_err = 0.0f64;
    for _ in 0..20 {
        let u = random_past_operand(&mut rng, &incs0, 3, 2);
        let sq = qbm_core::ito::second_quantization(&grid0, &u, 0.75, 0.25)?;
        free_err = free_err.max(distance_to_scalar(&sq, u.phi()));
    }
    judge.le("free_err", free_err, "gamma_free", tols.gamma_free);

    // Stationarity in the window: any fresh increment length, and any later
    // conditioning time, give the same operator on operands from the past.
    let (_, grid) = qbm_grid(0.35, 4, 4)?;
    let incs = cell_increments(&grid.driver());
    let letters = [0usize, 1];
    let proj_base = PastProjector::new(&grid, 0.5, 0.25, &letters, 4)?;
    let proj_wide = PastProjector::new(&grid, 0.5, 0.5, &letters, 4)?;
    let proj_late = PastProjector::new(&grid, 0.75, 0.25, &letters, 4)?;
    let mut window_err = 0.0f64;
    for _ in 0..5 {
        let u = random_past_operand(&mut rng, &incs, 2, 2);
        let base = proj_base.project(&u)?;
        for other in [&proj_wide, &proj_late] {
            let alt = other.project(&u)?;
            window_err = window_err.max(column_distance(base.column(), alt.column()));
        }
    }
    judge.le("window_err", window_err, "gamma_window", tols.gamma_window);

    // L2 contraction against the operator norm of the operand.
    let x1_sq = grid.position(1.0)?.op_norm().powi(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let u = random_past_operand(&mut rng, &incs, 3, 2);
        let sq = qbm_core::ito::second_quantization(&grid, &u, 0.75, 0.25)?;
        let bound = x1_sq * u.op_norm();
        worst = worst.max(sq.l2_norm() / bound);
    }
    judge.note("contraction_worst", worst);
    judge.require(
        worst <= 1.0 + 1e-9,
        "L2 norm of the conditioned sandwich exceeded |X_1|^2 |U|",
    );

    let inp = inputs(&[
        ("grid_d_n", "4/4".into()),
        ("q_values", "0, 0.35, 0.6".into()),
        ("free_trials", "20".into()),
        ("contraction_trials", "50".into()),
    ]);
    Ok((judge, inp))
}

/// Random adapted step biprocess on the 4-cell grid: value legs are words
/// of at most one past increment, so all compared moments have degree at
/// most 8 and the depth-4 space represents them exactly.
fn random_step_biprocess(
    rng: &mut ChaCha12Rng,
    driver: &DriverPath,
    incs: &[Operator],
) -> Result<StepBiprocess> {
    let space = driver.space();
    let d = driver.segments();
    let mut cuts: Vec<usize> = (1..d).filter(|_| rng.gen::<bool>()).collect();
    cuts.insert(0, 0);
    cuts.push(d);
    cuts.dedup();
    let breaks: Vec<f64> = cuts.iter().map(|&k| driver.time(k)).collect();
    let mut values = Vec::new();
    for w in cuts.windows(2) {
        let start = w[0];
        let leg = |rng: &mut ChaCha12Rng| {
            if start == 0 || rng.gen::<bool>() {
                space.identity_op()
            } else {
                incs[rng.gen_range(0..start)].scaled(C::new(2.0, 0.0))
            }
        };
        let mut value = TensorValue2::elementary(leg(rng).scaled(rand_coeff(rng)), leg(rng))?;
        if rng.gen::<bool>() {
            value = &value + &TensorValue2::elementary(leg(rng).scaled(rand_coeff(rng)), leg(rng))?;
        }
        values.push(value);
    }
    Ok(StepBiprocess::new(driver.clone(), breaks, values)?)
}

fn random_subdivision(rng: &mut ChaCha12Rng, driver: &DriverPath) -> Vec<f64> {
    let d = driver.segments();
    let mut idx: Vec<usize> = (1..d).filter(|_| rng.gen::<bool>()).collect();
    idx.insert(0, 0);
    idx.push(d);
    idx.dedup();
    idx.iter().map(|&k| driver.time(k)).collect()
}

pub fn ito_isometry(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let mut rng = stream(ctx.seed, "ito-isometry");
    let (_, grid) = qbm_grid(0.35, 4, 4)?;
    let driver = grid.driver();
    let incs = cell_increments(&driver);
    let mut max_defect = 0.0f64;
    for _ in 0..50 {
        let u = random_step_biprocess(&mut rng, &driver, &incs)?;
        let sub1 = random_subdivision(&mut rng, &driver);
        let sub2 = random_subdivision(&mut rng, &driver);
        let lhs = state_inner(&ito_sum(&u, &sub1)?, &ito_sum(&u, &sub2)?);
        let rhs = discretized_isometry(&grid, &u, &sub1, &u, &sub2, 2)?;
        max_defect = max_defect.max((lhs - rhs).norm());
    }
    judge.le(
        "max_defect",
        max_defect,
        "isometry",
        ctx.cfg.tolerances.isometry,
    );
    let inp = inputs(&[
        ("grid_d_n_q", "4/4/0.35".into()),
        ("trials", "50, two random subdivisions each".into()),
        ("value_legs", "words of length <= 1".into()),
    ]);
    Ok((judge, inp))
}
