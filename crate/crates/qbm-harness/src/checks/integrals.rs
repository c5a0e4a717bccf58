//! Rough-integral consistency: scalar reductions against closed forms, and
//! trapezoid sums against the corrected rough value.

use super::{inputs, qbm_grid, CheckCtx};
use crate::report::Judge;
use anyhow::Result;
use num_complex::Complex64 as C;
use qbm_core::algebra::{FourierFunction, TensorValue2};
use qbm_core::fock::Operator;
use qbm_core::ito::trapezoid_sum;
use qbm_core::rough::{
    make_controlled_from_functions, rough_integral, ControlledBiprocess, ControlledProcess,
    DriverPath, FirstDerivative, LevyAreaApprox, SecondDerivative, SharpRep,
};
use std::collections::BTreeMap;

fn scalar_value(op: &Operator) -> C {
    op.matrix()[(0, 0)]
}

fn dyadic_points(level: usize) -> Vec<f64> {
    let m = 1usize << level;
    (0..=m).map(|k| k as f64 / m as f64).collect()
}

pub fn integral_consistency(ctx: &CheckCtx) -> Result<(Judge, BTreeMap<String, String>)> {
    let mut judge = Judge::new();
    let tols = &ctx.cfg.tolerances;

    // Commutative reduction on the line x_t = t. The integrands below are
    // at most linear in the path, so the corrected sums telescope to the
    // Lebesgue values exactly and only roundoff remains.
    let segments = 16usize;
    let samples: Vec<f64> = (0..=segments).map(|k| k as f64 / segments as f64).collect();
    let driver = DriverPath::scalar_polyline(&samples)?;
    let space = driver.space().clone();
    let id = space.identity_op();
    let y = ControlledProcess::qbm(&driver);
    let area = LevyAreaApprox::new(&driver, 4)?;
    let times: Vec<f64> = (0..=segments).map(|k| driver.time(k)).collect();
    let mut closed_err = 0.0f64;

    let const_val = TensorValue2::elementary(space.scalar_op(C::new(0.7, 0.0)), id.clone())?;
    let u_const = ControlledBiprocess::constant(&driver, times.clone(), const_val);
    let got = scalar_value(&rough_integral(&u_const, &area, 0.0, 1.0, &times)?);
    closed_err = closed_err.max((got - C::new(0.7, 0.0)).norm());

    let u_left = ControlledBiprocess::path_tensor_unit(&y);
    let got = scalar_value(&rough_integral(&u_left, &area, 0.0, 1.0, &times)?);
    closed_err = closed_err.max((got - C::new(0.5, 0.0)).norm());
    let got = scalar_value(&rough_integral(&u_left, &area, 0.25, 0.75, &times[4..=12])?);
    closed_err = closed_err.max((got - C::new(0.25, 0.0)).norm());

    // Path in the right leg: the expansion sits entirely in the second
    // derivative, exercising the adjoint-side correction.
    let mut values = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    for k in 0..=segments {
        values.push(TensorValue2::elementary(id.clone(), driver.value(k).clone())?);
        first.push(FirstDerivative::Zero);
        second.push(SecondDerivative::Back(vec![(
            id.clone(),
            SharpRep::Tensor(TensorValue2::identity(&space)),
        )]));
    }
    let u_right =
        ControlledBiprocess::from_samples(&driver, times.clone(), values, first, second)?;
    let got = scalar_value(&rough_integral(&u_right, &area, 0.0, 1.0, &times)?);
    closed_err = closed_err.max((got - C::new(0.5, 0.0)).norm());

    judge.le("closed_form_err", closed_err, "scalar_integral", tols.scalar_integral);

    // Trapezoid sums against a fixed fine rough value on the q-side.
    let (_, grid) = qbm_grid(0.5, 8, 2)?;
    let qdriver = grid.driver();
    let qy = ControlledProcess::qbm(&qdriver);
    let f = FourierFunction::new(
        vec![(C::new(0.6, 0.0), 0.9), (C::new(0.25, 0.1), -0.4)],
        2,
    );
    let one = FourierFunction::constant(C::new(1.0, 0.0));
    let u = make_controlled_from_functions(&f, &one, &qy)?;
    let fine = dyadic_points(3);
    let fine_area = LevyAreaApprox::new(&qdriver, 3)?;
    let reference = rough_integral(&u, &fine_area, 0.0, 1.0, &fine)?;
    let mut dist = Vec::new();
    for level in 0..=3usize {
        let trap = trapezoid_sum(&u, &dyadic_points(level))?;
        let d = (&trap - &reference).l2_norm();
        judge.note(&format!("trapezoid_dist_{level}"), d);
        dist.push(d);
    }
    let monotone = dist.windows(2).all(|w| w[1] < w[0]);
    judge.require(monotone, "trapezoid distances not strictly decreasing");

    let inp = inputs(&[
        ("line", "16 segments, constant / left-leg / right-leg paths".into()),
        ("trapezoid_grid", "8 cells, depth 2, q = 0.5, levels 0..3".into()),
    ]);
    Ok((judge, inp))
}
