//! Rough-path layer: dyadic product Levy areas with decay certificates,
//! controlled biprocesses, corrected Riemann-sum integrals, an RDE solver,
//! and piecewise-linear approximation studies.
//!
//! Everything runs over a piecewise-linear [`DriverPath`] on the unit
//! interval. The q-Brownian driver comes from a [`PathGrid`] whose base
//! times are `k/d` for `d` one-particle modes; deterministic drivers (for
//! commutative consistency oracles) come from explicit value lists on the
//! same kind of grid. Dyadic interpolation levels coarser than the base grid
//! give the approximating paths `X^n`, and all Lebesgue integrals against
//! them reduce to closed-form segment sums.

mod area;
mod controlled;
mod integral;
mod rde;

pub use area::{area_expr, strat_levy_area, DecayCertificate, LevyAreaApprox};
pub use controlled::{
    make_controlled_from_functions, make_controlled_system, probe_norm, ControlledBiprocess,
    ControlledProcess, FirstDerivative, SecondDerivative, SharpRep,
};
pub use integral::{corrected_sum, rough_integral, rough_integral_refined};
pub use rde::{
    classical_ode_along, scalar_ode_oracle, solve_rde, wong_zakai_compare, wong_zakai_solve,
    PicardOptions, PicardReport,
};

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::fock::{FockError, Operator, Space};
use crate::linalg::C;

/// Matching tolerance for recognizing grid times, relative to the step.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RoughError {
    #[error("time {0} is not on the base grid")]
    OffGrid(f64),
    #[error("dyadic level {level} needs a multiple of {cells} base segments, grid has {have}")]
    LevelUnsupported {
        level: usize,
        cells: usize,
        have: usize,
    },
    #[error("interval [{s}, {t}] is not increasing")]
    BadInterval { s: f64, t: f64 },
    #[error("time {0} is not a value time of the process")]
    TimeNotCovered(f64),
    #[error("a driver path needs at least one segment")]
    EmptyDriver,
    #[error("coefficient lists have mismatched lengths {0} and {1}")]
    MismatchedSystem(usize, usize),
    #[error("coefficient pair {0} is not adjoint-matched")]
    NotAdjointPaired(usize),
    #[error("no fixed point after {iterations} iterations; last residual {last:.3e}")]
    PicardStalled { iterations: usize, last: f64 },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub(crate) fn grid_index(segments: usize, t: f64) -> Result<usize, RoughError> {
    let scaled = t * segments as f64;
    let k = scaled.round();
    if (scaled - k).abs() > GRID_SNAP * segments as f64 || k < 0.0 || k > segments as f64 {
        return Err(RoughError::OffGrid(t));
    }
    Ok(k as usize)
}

/// The base q-Brownian grid of one Fock space: mode `k` carries the
/// normalized increment over `[k/d, (k+1)/d]`, so the position operator at
/// `j/d` loads the first `j` modes with `sqrt(1/d)` each. Dense position
/// operators are built lazily; grids too large for the dense cap can still
/// do all coefficient arithmetic.
#[derive(Clone)]
pub struct PathGrid {
    space: Arc<Space>,
    positions: Arc<OnceLock<Arc<Vec<Operator>>>>,
}

impl PathGrid {
    pub fn new(space: &Arc<Space>) -> Result<Self, RoughError> {
        if space.modes() == 0 {
            return Err(RoughError::EmptyDriver);
        }
        Ok(Self {
            space: Arc::clone(space),
            positions: Arc::new(OnceLock::new()),
        })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn segments(&self) -> usize {
        self.space.modes()
    }

    pub fn step(&self) -> f64 {
        1.0 / self.segments() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn index(&self, t: f64) -> Result<usize, RoughError> {
        grid_index(self.segments(), t)
    }

    /// Coefficient vector of the increment between base indices `i <= j`:
    /// `sqrt(1/d)` on the covered modes.
    pub fn increment_coeffs(&self, i: usize, j: usize) -> Vec<f64> {
        let d = self.segments();
        assert!(i <= j && j <= d);
        let w = self.step().sqrt();
        let mut coeffs = vec![0.0; d];
        for c in coeffs.iter_mut().take(j).skip(i) {
            *c = w;
        }
        coeffs
    }

    fn positions(&self) -> &Arc<Vec<Operator>> {
        self.positions.get_or_init(|| {
            let d = self.segments();
            let ops = (0..=d)
                .map(|k| {
                    self.space
                        .position_op(&self.increment_coeffs(0, k))
                        .expect("base grid position operator")
                })
                .collect();
            Arc::new(ops)
        })
    }

    /// The driver made of the dense positions at all base grid points.
    pub fn driver(&self) -> DriverPath {
        DriverPath {
            space: Arc::clone(&self.space),
            values: Arc::clone(self.positions()),
        }
    }

    pub fn position(&self, t: f64) -> Result<Operator, RoughError> {
        Ok(self.positions()[self.index(t)?].clone())
    }
}

/// A piecewise-linear operator path on `[0, 1]`, described by its values at
/// the uniform base grid points.
#[derive(Clone)]
pub struct DriverPath {
    space: Arc<Space>,
    values: Arc<Vec<Operator>>,
}

impl DriverPath {
    pub fn from_values(values: Vec<Operator>) -> Result<Self, RoughError> {
        if values.len() < 2 {
            return Err(RoughError::EmptyDriver);
        }
        let space = Arc::clone(values[0].space());
        Ok(Self {
            space,
            values: Arc::new(values),
        })
    }

    /// Deterministic scalar polyline on the one-dimensional space; handy as
    /// a commutative consistency oracle.
    pub fn scalar_polyline(samples: &[f64]) -> Result<Self, RoughError> {
        let space = Space::scalar();
        let values = samples
            .iter()
            .map(|&x| space.scalar_op(C::new(x, 0.0)))
            .collect();
        Self::from_values(values)
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.segments() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    pub fn index(&self, t: f64) -> Result<usize, RoughError> {
        grid_index(self.segments(), t)
    }

    pub fn value(&self, k: usize) -> &Operator {
        &self.values[k]
    }

    /// Increment between base indices (either order; antisymmetric).
    pub fn increment_idx(&self, i: usize, j: usize) -> Operator {
        &self.values[j] - &self.values[i]
    }

    pub fn increment(&self, s: f64, t: f64) -> Result<Operator, RoughError> {
        Ok(self.increment_idx(self.index(s)?, self.index(t)?))
    }
}

/// Linear interpolation of a driver along the dyadic partition at one level:
/// `2^level` cells, each spanning `per = d/2^level` base segments. Values at
/// base times are exact rational mixtures of the stored driver values.
#[derive(Clone)]
pub struct InterpolatedPath {
    driver: DriverPath,
    level: usize,
    per: usize,
}

impl InterpolatedPath {
    pub fn new(driver: &DriverPath, level: usize) -> Result<Self, RoughError> {
        let cells = 1usize << level;
        let have = driver.segments();
        if have % cells != 0 {
            return Err(RoughError::LevelUnsupported { level, cells, have });
        }
        Ok(Self {
            driver: driver.clone(),
            level,
            per: have / cells,
        })
    }

    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    /// Base segments per interpolation cell.
    pub(crate) fn per(&self) -> usize {
        self.per
    }

    pub fn cell_width(&self) -> f64 {
        self.per as f64 * self.driver.step()
    }

    /// Full increment of one interpolation cell.
    pub fn cell_increment(&self, cell: usize) -> Operator {
        self.driver
            .increment_idx(cell * self.per, (cell + 1) * self.per)
    }

    /// Interpolated value at a base grid index (exact cell fractions).
    pub fn value_units(&self, units: usize) -> Operator {
        let cell = units / self.per;
        let rem = units % self.per;
        if rem == 0 {
            return self.driver.value(units).clone();
        }
        let frac = rem as f64 / self.per as f64;
        let base = self.driver.value(cell * self.per);
        base + &self.cell_increment(cell).scaled(C::new(frac, 0.0))
    }

    /// Interpolated value at an arbitrary parameter time in `[0, 1]`.
    pub fn value_real(&self, u: f64) -> Operator {
        let cells = self.cells() as f64;
        let pos = (u.clamp(0.0, 1.0)) * cells;
        let cell = (pos.floor() as usize).min(self.cells() - 1);
        let frac = pos - cell as f64;
        let base = self.driver.value(cell * self.per);
        base + &self.cell_increment(cell).scaled(C::new(frac, 0.0))
    }

    pub fn value(&self, t: f64) -> Result<Operator, RoughError> {
        Ok(self.value_units(self.driver.index(t)?))
    }

    pub(crate) fn increment_units(&self, i: usize, j: usize) -> Operator {
        &self.value_units(j) - &self.value_units(i)
    }

    pub fn increment(&self, s: f64, t: f64) -> Result<Operator, RoughError> {
        Ok(self.increment_units(self.driver.index(s)?, self.driver.index(t)?))
    }
}

/// Grid supremum of `‖values[j] - values[i]‖ / (times[j] - times[i])^gamma`
/// over all increasing pairs.
pub fn holder_seminorm_path(times: &[f64], values: &[Operator], gamma: f64) -> f64 {
    assert_eq!(times.len(), values.len());
    holder_seminorm_two_index(
        times,
        |i, j| (&values[j] - &values[i]).op_norm(),
        gamma,
    )
}

/// Same supremum for two-parameter data delivered through a norm callback.
pub fn holder_seminorm_two_index(
    times: &[f64],
    norm: impl Fn(usize, usize) -> f64,
    gamma: f64,
) -> f64 {
    let mut sup = 0.0f64;
    for i in 0..times.len() {
        for j in (i + 1)..times.len() {
            let dt = times[j] - times[i];
            if dt <= 0.0 {
                continue;
            }
            sup = sup.max(norm(i, j) / dt.powf(gamma));
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_grid_positions_have_brownian_covariance() {
        let space = Space::new(0.4, 4, 2).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                let s = grid.time(i);
                let t = grid.time(j);
                let prod = &grid.position(s).unwrap() * &grid.position(t).unwrap();
                assert_abs_diff_eq!(prod.phi().re, s.min(t), epsilon = 1e-12);
                assert_abs_diff_eq!(prod.phi().im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn off_grid_times_are_rejected() {
        let space = Space::new(0.0, 4, 1).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        assert!(matches!(grid.index(0.3), Err(RoughError::OffGrid(_))));
        assert!(grid.index(0.75).is_ok());
        assert!(matches!(grid.index(1.25), Err(RoughError::OffGrid(_))));
    }

    #[test]
    fn interpolation_is_exact_at_dyadic_points_and_linear_between() {
        let space = Space::new(0.2, 8, 1).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        let driver = grid.driver();
        let path = InterpolatedPath::new(&driver, 2).unwrap();
        // Dyadic points of level 2 sit at every other base index.
        for cell in 0..=4 {
            let exact = driver.value(cell * 2);
            let interp = path.value_units(cell * 2);
            assert!((exact - &interp).op_norm() < 1e-12);
        }
        // Midpoint of a cell is the average of its endpoints.
        let mid = path.value_units(3);
        let avg = (driver.value(2) + driver.value(4)).scaled(C::new(0.5, 0.0));
        assert!((&mid - &avg).op_norm() < 1e-12);
    }

    #[test]
    fn unsupported_levels_are_refused() {
        let space = Space::new(0.0, 6, 1).unwrap();
        let driver = PathGrid::new(&space).unwrap().driver();
        assert!(InterpolatedPath::new(&driver, 1).is_ok());
        assert!(matches!(
            InterpolatedPath::new(&driver, 2),
            Err(RoughError::LevelUnsupported { .. })
        ));
    }

    #[test]
    fn holder_seminorm_of_a_linear_scalar_path_is_its_slope() {
        let driver = DriverPath::scalar_polyline(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let times: Vec<f64> = (0..=4).map(|k| driver.time(k)).collect();
        let values: Vec<Operator> = (0..=4).map(|k| driver.value(k).clone()).collect();
        assert_abs_diff_eq!(
            holder_seminorm_path(&times, &values, 1.0),
            1.0,
            epsilon = 1e-12
        );
        // Constant path has seminorm zero.
        let constant: Vec<Operator> = (0..=4).map(|_| driver.value(0).clone()).collect();
        assert_abs_diff_eq!(
            holder_seminorm_path(&times, &constant, 0.5),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn square_root_holder_seminorm_of_the_driver_matches_the_unit_norm() {
        // Increment norms scale exactly like sqrt(t - s) on the grid, so the
        // gamma = 1/2 seminorm equals the norm of a unit-time position.
        let space = Space::new(0.5, 8, 2).unwrap();
        let grid = PathGrid::new(&space).unwrap();
        let driver = grid.driver();
        let times: Vec<f64> = (0..=8).map(|k| driver.time(k)).collect();
        let values: Vec<Operator> = (0..=8).map(|k| driver.value(k).clone()).collect();
        let semi = holder_seminorm_path(&times, &values, 0.5);
        let unit = space
            .position_op(&{
                let mut v = vec![0.0; 8];
                v.iter_mut().for_each(|x| *x = (1.0f64 / 8.0).sqrt());
                v
            })
            .unwrap()
            .op_norm();
        assert_abs_diff_eq!(semi, unit, epsilon = 1e-9);
    }
}
