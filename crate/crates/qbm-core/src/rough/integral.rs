//! Corrected Riemann sums: the integral of a controlled biprocess against
//! the driver, with each interval contributing
//! `U # dX + [area x Id](U^{X,1}) + [Id x area*](U^{X,2})`.
//!
//! Increments and areas both come from the same interpolation level, so the
//! sum telescopes exactly under subdivision for biprocesses whose controlled
//! expansion is exact (see the tests).

use crate::algebra::{FlipAdjoint, SharpAction, TensorValue2};
use crate::fock::Operator;

use super::{
    ControlledBiprocess, FirstDerivative, LevyAreaApprox, RoughError, SecondDerivative,
};

/// `[area x Id]` on a front-form term: one area contraction, one product.
fn area_side_correction<T: SharpAction + ?Sized>(
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
    front: &T,
    tail: &Operator,
) -> Result<Operator, RoughError> {
    Ok(&area.evaluate(s, t, front)? * tail)
}

/// `[Id x area*]` on a back-form term `head (x) (Σ Bᵢ (x) Cᵢ)`: contributes
/// `head · (area_{st}[Σ Cᵢ† (x) Bᵢ†])†`, the adjoint-reversed contraction
/// against the back legs. Every use of the reversed area funnels through
/// this function; the smooth-driver closed forms and the subdivision
/// telescoping tests pin the convention down.
fn adjoint_side_correction<T: SharpAction + ?Sized>(
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
    head: &Operator,
    back: &T,
) -> Result<Operator, RoughError> {
    let flipped = area.evaluate(s, t, &FlipAdjoint(back))?;
    Ok(head * &flipped.adjoint())
}

fn first_correction(
    deriv: &FirstDerivative,
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
) -> Result<Operator, RoughError> {
    let space = area.driver().space();
    match deriv {
        FirstDerivative::Zero => Ok(space.zero_op()),
        FirstDerivative::Front(parts) => {
            let mut acc = space.zero_op();
            for (front, tail) in parts {
                acc = &acc + &area_side_correction(area, s, t, front, tail)?;
            }
            Ok(acc)
        }
        FirstDerivative::Explicit(t3) => {
            let mut acc = space.zero_op();
            for (a, b, c) in t3.summands() {
                let front = TensorValue2::elementary_with_bound(a.clone(), b.clone(), 0.0);
                acc = &acc + &area_side_correction(area, s, t, &front, c)?;
            }
            Ok(acc)
        }
    }
}

fn second_correction(
    deriv: &SecondDerivative,
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
) -> Result<Operator, RoughError> {
    let space = area.driver().space();
    match deriv {
        SecondDerivative::Zero => Ok(space.zero_op()),
        SecondDerivative::Back(parts) => {
            let mut acc = space.zero_op();
            for (head, back) in parts {
                acc = &acc + &adjoint_side_correction(area, s, t, head, back)?;
            }
            Ok(acc)
        }
        SecondDerivative::Explicit(t3) => {
            let mut acc = space.zero_op();
            for (a, b, c) in t3.summands() {
                let back = TensorValue2::elementary_with_bound(b.clone(), c.clone(), 0.0);
                acc = &acc + &adjoint_side_correction(area, s, t, a, &back)?;
            }
            Ok(acc)
        }
    }
}

/// Corrected sum over consecutive pairs of `times`, all of which must be
/// value times of the biprocess. A single time (or none) integrates over an
/// empty range and returns zero.
pub fn corrected_sum(
    u: &ControlledBiprocess,
    area: &LevyAreaApprox,
    times: &[f64],
) -> Result<Operator, RoughError> {
    let space = area.driver().space();
    assert!(
        space.same_shape(u.driver().space()),
        "biprocess and area live on different spaces"
    );
    let mut acc = space.zero_op();
    if times.len() < 2 {
        if let Some(&t) = times.first() {
            u.time_index(t)?;
        }
        return Ok(acc);
    }
    for pair in times.windows(2) {
        let (s, t) = (pair[0], pair[1]);
        if t < s {
            return Err(RoughError::BadInterval { s, t });
        }
        let k = u.time_index(s)?;
        u.time_index(t)?;
        let dx = area.path().increment(s, t)?;
        acc = &acc + &u.value(k).sharp(&dx);
        acc = &acc + &first_correction(u.first_derivative(k), area, s, t)?;
        acc = &acc + &second_correction(u.second_derivative(k), area, s, t)?;
    }
    Ok(acc)
}

/// The rough integral of `u` over `[s, t]` along the given subdivision
/// (endpoints included; an empty slice means the single interval `[s, t]`).
pub fn rough_integral(
    u: &ControlledBiprocess,
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
    subdivision: &[f64],
) -> Result<Operator, RoughError> {
    if t < s {
        return Err(RoughError::BadInterval { s, t });
    }
    if subdivision.is_empty() {
        return corrected_sum(u, area, &[s, t]);
    }
    if (subdivision[0] - s).abs() > 1e-9 || (subdivision[subdivision.len() - 1] - t).abs() > 1e-9
    {
        return Err(RoughError::BadInterval { s, t });
    }
    corrected_sum(u, area, subdivision)
}

/// Corrected sums over dyadically coarsened subdivisions of `[s, t]` drawn
/// from the biprocess times, finest last. Returns the finest value and the
/// successive operator-norm differences `(intervals, ‖finer - coarser‖)`;
/// shrinking differences witness the Cauchy property under refinement.
pub fn rough_integral_refined(
    u: &ControlledBiprocess,
    area: &LevyAreaApprox,
    s: f64,
    t: f64,
) -> Result<(Operator, Vec<(usize, f64)>), RoughError> {
    let i0 = u.time_index(s)?;
    let i1 = u.time_index(t)?;
    if i1 < i0 {
        return Err(RoughError::BadInterval { s, t });
    }
    let times = u.times();
    let m = i1 - i0;
    let mut strides = vec![m.max(1)];
    while strides.last().unwrap() % 2 == 0 {
        strides.push(strides.last().unwrap() / 2);
    }
    let mut prev: Option<Operator> = None;
    let mut diffs = Vec::new();
    let mut finest = area.driver().space().zero_op();
    for stride in strides {
        let sub: Vec<f64> = (i0..=i1).step_by(stride).map(|i| times[i]).collect();
        let value = corrected_sum(u, area, &sub)?;
        if let Some(p) = &prev {
            diffs.push((m / stride, (&value - p).op_norm()));
        }
        finest = value.clone();
        prev = Some(value);
    }
    Ok((finest, diffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::FourierFunction;
    use crate::fock::Space;
    use crate::linalg::C;
    use crate::rough::{
        make_controlled_from_functions, ControlledProcess, DriverPath, PathGrid,
    };
    use approx::assert_abs_diff_eq;

    fn line_driver(segments: usize) -> DriverPath {
        let samples: Vec<f64> = (0..=segments)
            .map(|k| k as f64 / segments as f64)
            .collect();
        DriverPath::scalar_polyline(&samples).unwrap()
    }

    #[test]
    fn constant_unit_biprocess_integrates_to_the_increment() {
        let space = Space::new(0.4, 8, 2).unwrap();
        let driver = PathGrid::new(&space).unwrap().driver();
        let u = ControlledBiprocess::constant(
            &driver,
            (0..=8).map(|k| k as f64 / 8.0).collect(),
            TensorValue2::identity(&space),
        );
        let area = LevyAreaApprox::new(&driver, 3).unwrap();
        let sub: Vec<f64> = (2..=7).map(|k| k as f64 / 8.0).collect();
        let value = rough_integral(&u, &area, 0.25, 0.875, &sub).unwrap();
        let expected = driver.increment(0.25, 0.875).unwrap();
        assert!((&value - &expected).op_norm() < 1e-13);
    }

    #[test]
    fn scalar_position_integral_matches_the_lebesgue_closed_form() {
        // U = x (x) 1 along x_t = t: the integral over [s, t] is
        // (t^2 - s^2)/2 for every subdivision and every area level.
        let driver = line_driver(8);
        let y = ControlledProcess::qbm(&driver);
        let u = ControlledBiprocess::path_tensor_unit(&y);
        for level in [0usize, 1, 3] {
            let area = LevyAreaApprox::new(&driver, level).unwrap();
            for (s, t, sub) in [
                (0.0, 1.0, vec![]),
                (0.0, 1.0, (0..=8).map(|k| k as f64 / 8.0).collect::<Vec<_>>()),
                (0.25, 0.875, vec![0.25, 0.5, 0.625, 0.875]),
            ] {
                let value = rough_integral(&u, &area, s, t, &sub).unwrap();
                let expected = 0.5 * (t * t - s * s);
                assert_abs_diff_eq!(value.phi().re, expected, epsilon = 1e-10);
                assert_abs_diff_eq!(value.phi().im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scalar_right_leg_exercises_the_adjoint_side_correction() {
        // U = 1 (x) x along x_t = t: commutatively this is again
        // integral of x dx, but it flows through the back-leg correction.
        let driver = line_driver(8);
        let space = driver.space();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let values: Vec<TensorValue2> = (0..=8)
            .map(|k| {
                TensorValue2::elementary_with_bound(
                    space.identity_op(),
                    driver.value(k).clone(),
                    1.0,
                )
            })
            .collect();
        let first = (0..=8).map(|_| FirstDerivative::Zero).collect();
        let second = (0..=8)
            .map(|_| {
                SecondDerivative::Back(vec![(
                    space.identity_op(),
                    crate::rough::SharpRep::Tensor(TensorValue2::identity(space)),
                )])
            })
            .collect();
        let u = ControlledBiprocess::from_parts(driver.clone(), times.clone(), values, first, second);
        let area = LevyAreaApprox::new(&driver, 3).unwrap();
        let value = corrected_sum(&u, &area, &times).unwrap();
        assert_abs_diff_eq!(value.phi().re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn exactly_controlled_integrals_are_subdivision_invariant() {
        // U = X (x) 1 on the q-Brownian driver at the finest level: every
        // corrected term is exact, so the sum telescopes and any subdivision
        // gives X_s dX_{st} + area_{st}[1 (x) 1].
        let space = Space::new(0.55, 8, 2).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        let driver = grid.driver();
        let y = ControlledProcess::qbm(&driver);
        let u = ControlledBiprocess::path_tensor_unit(&y);
        let area = LevyAreaApprox::new(&driver, 3).unwrap();
        let (s, t) = (0.125, 0.875);
        let expected = {
            let head = &grid.position(s).unwrap() * &driver.increment(s, t).unwrap();
            let pure = area
                .evaluate(s, t, &TensorValue2::identity(&space))
                .unwrap();
            &head + &pure
        };
        for sub in [
            vec![s, t],
            vec![s, 0.5, t],
            vec![s, 0.25, 0.375, 0.5, 0.625, 0.75, t],
        ] {
            let value = corrected_sum(&u, &area, &sub).unwrap();
            assert!(
                (&value - &expected).op_norm() < 1e-12,
                "subdivision {sub:?}"
            );
        }
    }

    #[test]
    fn right_leg_qbm_integral_is_subdivision_invariant_too() {
        // U = 1 (x) X with the adjoint-side correction: the reversed area
        // makes the corrected sum telescope exactly as well.
        let space = Space::new(0.5, 8, 2).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        let driver = grid.driver();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let values: Vec<TensorValue2> = (0..=8)
            .map(|k| {
                TensorValue2::elementary_with_bound(
                    space.identity_op(),
                    driver.value(k).clone(),
                    driver.value(k).op_norm(),
                )
            })
            .collect();
        let first = (0..=8).map(|_| FirstDerivative::Zero).collect();
        let second = (0..=8)
            .map(|_| {
                SecondDerivative::Back(vec![(
                    space.identity_op(),
                    crate::rough::SharpRep::Tensor(TensorValue2::identity(&space)),
                )])
            })
            .collect();
        let u = ControlledBiprocess::from_parts(driver.clone(), times, values, first, second);
        let area = LevyAreaApprox::new(&driver, 3).unwrap();
        let (s, t) = (0.0, 0.75);
        let single = corrected_sum(&u, &area, &[s, t]).unwrap();
        for sub in [vec![s, 0.375, t], vec![s, 0.125, 0.25, 0.5, t]] {
            let value = corrected_sum(&u, &area, &sub).unwrap();
            assert!((&value - &single).op_norm() < 1e-12, "subdivision {sub:?}");
        }
    }

    #[test]
    fn smooth_pair_integral_converges_to_the_classical_value() {
        let driver = line_driver(64);
        let y = ControlledProcess::qbm(&driver);
        let f = FourierFunction::new(
            vec![(C::new(0.8, 0.1), 1.3), (C::new(0.3, -0.4), -0.7)],
            3,
        );
        let g = f.adjoint_pair();
        let u = make_controlled_from_functions(&f, &g, &y).unwrap();
        let area = LevyAreaApprox::new(&driver, 6).unwrap();
        let (value, diffs) = rough_integral_refined(&u, &area, 0.0, 1.0).unwrap();
        // Exact value of the integral of f * g over [0, 1], atom by atom.
        let mut exact = C::new(0.0, 0.0);
        for &(cf, xf) in f.atoms() {
            for &(cg, xg) in g.atoms() {
                let w = xf + xg;
                let phase = if w.abs() < 1e-14 {
                    C::new(1.0, 0.0)
                } else {
                    (C::from_polar(1.0, w) - C::new(1.0, 0.0)) / C::new(0.0, w)
                };
                exact += cf * cg * phase;
            }
        }
        assert_abs_diff_eq!(value.phi().re, exact.re, epsilon = 1e-4);
        assert_abs_diff_eq!(value.phi().im, exact.im, epsilon = 1e-4);
        // Successive refinements shrink at second order.
        assert!(diffs.len() >= 4);
        let first = diffs.first().unwrap().1;
        let last = diffs.last().unwrap().1;
        assert!(last < 0.1 * first, "diffs {diffs:?}");
    }

    #[test]
    fn unknown_subdivision_times_and_bad_intervals_error() {
        let driver = line_driver(4);
        let y = ControlledProcess::qbm(&driver);
        let u = ControlledBiprocess::path_tensor_unit(&y);
        let area = LevyAreaApprox::new(&driver, 2).unwrap();
        assert!(matches!(
            corrected_sum(&u, &area, &[0.0, 0.3]),
            Err(RoughError::TimeNotCovered(_))
        ));
        assert!(matches!(
            rough_integral(&u, &area, 0.75, 0.25, &[]),
            Err(RoughError::BadInterval { .. })
        ));
    }
}
