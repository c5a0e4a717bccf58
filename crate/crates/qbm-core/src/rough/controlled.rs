//! Controlled processes and biprocesses.
//!
//! A controlled process is a path `Y` on grid times together with a
//! two-leg derivative `Y^X_t`, so that `dY_{st} - Y^X_s # dX_{st}` is a
//! second-order remainder. A controlled biprocess additionally carries the
//! two three-leg derivatives `U^{X,1}` and `U^{X,2}` that the corrected
//! Riemann sum contracts against the Levy area. Both derivative slots keep a
//! structured form: the two legs being contracted stay a [`SharpRep`]
//! (explicit summands, a spectral kernel, or a composition), so the solver
//! never materializes quadrature summand lists at large dimension.

use std::sync::Arc;

use crate::algebra::{
    require_self_adjoint, DerivativeKernel, FourierFunction, SharpAction, TensorValue2,
    TensorValue3,
};
use crate::fock::{Operator, Space};
use crate::linalg;

use super::{holder_seminorm_two_index, DriverPath, RoughError};

/// Interval-tensor action in whichever form is cheapest to contract.
#[derive(Clone)]
pub enum SharpRep {
    Tensor(TensorValue2),
    Kernel(DerivativeKernel),
    /// `Chain(outer, inner)` acts as `outer # (inner # x)`.
    Chain(Box<SharpRep>, Box<SharpRep>),
}

impl SharpAction for SharpRep {
    fn space(&self) -> &Arc<Space> {
        match self {
            SharpRep::Tensor(t) => t.space(),
            SharpRep::Kernel(k) => k.space(),
            SharpRep::Chain(outer, _) => outer.space(),
        }
    }

    fn sharp(&self, x: &Operator) -> Operator {
        match self {
            SharpRep::Tensor(t) => t.sharp(x),
            SharpRep::Kernel(k) => k.sharp(x),
            SharpRep::Chain(outer, inner) => outer.sharp(&inner.sharp(x)),
        }
    }

    fn norm_bound(&self) -> f64 {
        match self {
            SharpRep::Tensor(t) => t.norm_bound(),
            SharpRep::Kernel(k) => k.norm_bound(),
            SharpRep::Chain(outer, inner) => outer.norm_bound() * inner.norm_bound(),
        }
    }
}

/// `U^{X,1}_t`: a sum of terms whose front two legs stay an action and
/// whose third leg is explicit, so each area-side correction is one area
/// evaluation and one product.
#[derive(Clone)]
pub enum FirstDerivative {
    Zero,
    Front(Vec<(SharpRep, Operator)>),
    Explicit(TensorValue3),
}

/// `U^{X,2}_t`: terms with the first leg explicit and the back two legs as
/// an action.
#[derive(Clone)]
pub enum SecondDerivative {
    Zero,
    Back(Vec<(Operator, SharpRep)>),
    Explicit(TensorValue3),
}

fn find_time(times: &[f64], t: f64) -> Result<usize, RoughError> {
    times
        .iter()
        .position(|&x| (x - t).abs() <= 1e-9)
        .ok_or(RoughError::TimeNotCovered(t))
}

/// Operator path with its first-order expansion along the driver.
#[derive(Clone)]
pub struct ControlledProcess {
    driver: DriverPath,
    times: Vec<f64>,
    values: Vec<Operator>,
    derivatives: Vec<TensorValue2>,
}

impl ControlledProcess {
    pub(crate) fn from_parts(
        driver: DriverPath,
        times: Vec<f64>,
        values: Vec<Operator>,
        derivatives: Vec<TensorValue2>,
    ) -> Self {
        assert_eq!(times.len(), values.len());
        assert_eq!(times.len(), derivatives.len());
        Self {
            driver,
            times,
            values,
            derivatives,
        }
    }

    /// The driver itself as a controlled process: `Y = X`, `Y^X = 1 (x) 1`.
    pub fn qbm(driver: &DriverPath) -> Self {
        let times: Vec<f64> = (0..=driver.segments()).map(|k| driver.time(k)).collect();
        let values: Vec<Operator> = (0..=driver.segments())
            .map(|k| driver.value(k).clone())
            .collect();
        let derivatives = times
            .iter()
            .map(|_| TensorValue2::identity(driver.space()))
            .collect();
        Self::from_parts(driver.clone(), times, values, derivatives)
    }

    /// Constant path at a fixed operator, zero derivative.
    pub fn constant(driver: &DriverPath, times: Vec<f64>, value: Operator) -> Self {
        let values = vec![value; times.len()];
        let derivatives = times
            .iter()
            .map(|_| TensorValue2::zero(driver.space()))
            .collect();
        Self::from_parts(driver.clone(), times, values, derivatives)
    }

    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize) -> &Operator {
        &self.values[i]
    }

    pub fn derivative(&self, i: usize) -> &TensorValue2 {
        &self.derivatives[i]
    }

    pub fn time_index(&self, t: f64) -> Result<usize, RoughError> {
        find_time(&self.times, t)
    }

    pub fn value_at(&self, t: f64) -> Result<&Operator, RoughError> {
        Ok(&self.values[self.time_index(t)?])
    }

    /// Supremum over grid pairs of the path increment norm divided by
    /// `|t-s|^gamma`.
    pub fn holder_seminorm(&self, gamma: f64) -> f64 {
        super::holder_seminorm_path(&self.times, &self.values, gamma)
    }

    /// Supremum of `‖dY_{st} - Y^X_s # dX_{st}‖ / |t-s|^{2 gamma}`: the
    /// controlled-remainder seminorm witnessing the expansion order.
    pub fn remainder_holder(&self, gamma: f64) -> f64 {
        holder_seminorm_two_index(
            &self.times,
            |i, j| {
                let dx = self
                    .driver
                    .increment(self.times[i], self.times[j])
                    .expect("grid time");
                let lead = self.derivatives[i].sharp(&dx);
                (&(&self.values[j] - &self.values[i]) - &lead).op_norm()
            },
            2.0 * gamma,
        )
    }

    pub fn self_adjoint_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v - &v.adjoint()).op_norm())
            .fold(0.0, f64::max)
    }
}

/// Operator-pair path with the two derivative triprocesses.
#[derive(Clone)]
pub struct ControlledBiprocess {
    driver: DriverPath,
    times: Vec<f64>,
    values: Vec<TensorValue2>,
    first: Vec<FirstDerivative>,
    second: Vec<SecondDerivative>,
}

impl ControlledBiprocess {
    pub(crate) fn from_parts(
        driver: DriverPath,
        times: Vec<f64>,
        values: Vec<TensorValue2>,
        first: Vec<FirstDerivative>,
        second: Vec<SecondDerivative>,
    ) -> Self {
        assert_eq!(times.len(), values.len());
        assert_eq!(times.len(), first.len());
        assert_eq!(times.len(), second.len());
        Self {
            driver,
            times,
            values,
            first,
            second,
        }
    }

    /// Assemble a biprocess from explicit samples. All four lists must have
    /// one entry per time.
    pub fn from_samples(
        driver: &DriverPath,
        times: Vec<f64>,
        values: Vec<TensorValue2>,
        first: Vec<FirstDerivative>,
        second: Vec<SecondDerivative>,
    ) -> Result<Self, RoughError> {
        if values.len() != times.len() || first.len() != times.len() || second.len() != times.len()
        {
            return Err(RoughError::MismatchedSystem(times.len(), values.len()));
        }
        Ok(Self::from_parts(
            driver.clone(),
            times,
            values,
            first,
            second,
        ))
    }

    /// Time-independent biprocess, zero derivatives. Adapted as long as the
    /// value only references the driver up to the first listed time.
    pub fn constant(driver: &DriverPath, times: Vec<f64>, value: TensorValue2) -> Self {
        let n = times.len();
        let values = vec![value; n];
        let first = (0..n).map(|_| FirstDerivative::Zero).collect();
        let second = (0..n).map(|_| SecondDerivative::Zero).collect();
        Self::from_parts(driver.clone(), times, values, first, second)
    }

    /// `U_t = Y_t (x) 1` for a controlled path: the first derivative is
    /// `Y^X (x) 1` and the second vanishes.
    pub fn path_tensor_unit(y: &ControlledProcess) -> Self {
        let driver = y.driver().clone();
        let unit = driver.space().identity_op();
        let mut values = Vec::with_capacity(y.len());
        let mut first = Vec::with_capacity(y.len());
        let mut second = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            values.push(TensorValue2::elementary_with_bound(
                y.value(i).clone(),
                unit.clone(),
                y.value(i).op_norm(),
            ));
            first.push(FirstDerivative::Front(vec![(
                SharpRep::Tensor(y.derivative(i).clone()),
                unit.clone(),
            )]));
            second.push(SecondDerivative::Zero);
        }
        Self::from_parts(driver, y.times().to_vec(), values, first, second)
    }

    pub fn driver(&self) -> &DriverPath {
        &self.driver
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, i: usize) -> &TensorValue2 {
        &self.values[i]
    }

    pub fn first_derivative(&self, i: usize) -> &FirstDerivative {
        &self.first[i]
    }

    pub fn second_derivative(&self, i: usize) -> &SecondDerivative {
        &self.second[i]
    }

    pub fn time_index(&self, t: f64) -> Result<usize, RoughError> {
        find_time(&self.times, t)
    }

    pub fn value_at(&self, t: f64) -> Result<&TensorValue2, RoughError> {
        Ok(&self.values[self.time_index(t)?])
    }

    /// Remainder `U♭_{ij} = dU - dX # U^{X,1} - U^{X,2} # dX` between two
    /// listed times, measured with [`probe_norm`].
    pub fn remainder_norm(&self, i: usize, j: usize, probes: &[Operator]) -> f64 {
        let dx = self
            .driver
            .increment(self.times[i], self.times[j])
            .expect("grid time");
        let mut rem = &self.values[j] - &self.values[i];
        match &self.first[i] {
            FirstDerivative::Zero => {}
            FirstDerivative::Front(parts) => {
                for (front, tail) in parts {
                    let led = TensorValue2::elementary(front.sharp(&dx), tail.clone())
                        .expect("same space");
                    rem = &rem - &led;
                }
            }
            FirstDerivative::Explicit(t3) => {
                rem = &rem - &t3.left_sharp(&dx);
            }
        }
        match &self.second[i] {
            SecondDerivative::Zero => {}
            SecondDerivative::Back(parts) => {
                for (head, back) in parts {
                    let led = TensorValue2::elementary(head.clone(), back.sharp(&dx))
                        .expect("same space");
                    rem = &rem - &led;
                }
            }
            SecondDerivative::Explicit(t3) => {
                rem = &rem - &t3.right_sharp(&dx);
            }
        }
        probe_norm(&rem, probes)
    }

    /// Supremum of the probe-normed remainder over grid pairs divided by
    /// `|t-s|^{2 gamma}`.
    pub fn remainder_holder(&self, gamma: f64, probes: &[Operator]) -> f64 {
        holder_seminorm_two_index(
            &self.times,
            |i, j| self.remainder_norm(i, j, probes),
            2.0 * gamma,
        )
    }
}

/// Largest ratio `‖T # P‖ / ‖P‖` over a probe family: a lower envelope for
/// any cross norm dominating the action, used to watch remainder decay
/// without computing projective norms.
pub fn probe_norm(t: &TensorValue2, probes: &[Operator]) -> f64 {
    probes
        .iter()
        .filter(|p| p.op_norm() > 1e-14)
        .map(|p| t.sharp(p).op_norm() / p.op_norm())
        .fold(0.0, f64::max)
}

/// The biprocess `U_t = Σᵢ fᵢ(Y_t) (x) gᵢ(Y_t)` of a controlled path, with
/// derivative triprocesses
/// `U^{X,1} = Σᵢ [dfᵢ(Y) ∘ Y^X] (x) gᵢ(Y)` and
/// `U^{X,2} = Σᵢ fᵢ(Y) (x) [dgᵢ(Y) ∘ Y^X]`.
/// All coefficient kernels at each time share one eigendecomposition of
/// `Y_t`; requires twice-differentiable regularity.
pub fn make_controlled_system(
    fs: &[FourierFunction],
    gs: &[FourierFunction],
    y: &ControlledProcess,
) -> Result<ControlledBiprocess, RoughError> {
    if fs.len() != gs.len() {
        return Err(RoughError::MismatchedSystem(fs.len(), gs.len()));
    }
    for h in fs.iter().chain(gs.iter()) {
        h.require_class(2).map_err(RoughError::Algebra)?;
    }
    let space = y.driver().space();
    let n = y.len();
    let mut values = Vec::with_capacity(n);
    let mut first = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for i in 0..n {
        let yi = y.value(i);
        require_self_adjoint(yi).map_err(RoughError::Algebra)?;
        let eig = linalg::hermitian_eig(yi.matrix());
        let yx = y.derivative(i);
        let mut value = TensorValue2::zero(space);
        let mut front_parts = Vec::with_capacity(fs.len());
        let mut back_parts = Vec::with_capacity(fs.len());
        for (f, g) in fs.iter().zip(gs.iter()) {
            let fy =
                Operator::from_whitened(space, linalg::hermitian_fn_eig(&eig, |x| f.eval(x)));
            let gy =
                Operator::from_whitened(space, linalg::hermitian_fn_eig(&eig, |x| g.eval(x)));
            let bf = eig
                .vals
                .iter()
                .map(|&l| f.eval(l).norm())
                .fold(0.0, f64::max);
            let bg = eig
                .vals
                .iter()
                .map(|&l| g.eval(l).norm())
                .fold(0.0, f64::max);
            value.push_with_bound(fy.clone(), gy.clone(), bf * bg);
            let kf = DerivativeKernel::divided_difference_with_eig(f, space, &eig)
                .map_err(RoughError::Algebra)?;
            let kg = DerivativeKernel::divided_difference_with_eig(g, space, &eig)
                .map_err(RoughError::Algebra)?;
            front_parts.push((
                SharpRep::Chain(
                    Box::new(SharpRep::Kernel(kf)),
                    Box::new(SharpRep::Tensor(yx.clone())),
                ),
                gy,
            ));
            back_parts.push((
                fy,
                SharpRep::Chain(
                    Box::new(SharpRep::Kernel(kg)),
                    Box::new(SharpRep::Tensor(yx.clone())),
                ),
            ));
        }
        values.push(value);
        first.push(FirstDerivative::Front(front_parts));
        second.push(SecondDerivative::Back(back_parts));
    }
    Ok(ControlledBiprocess::from_parts(
        y.driver().clone(),
        y.times().to_vec(),
        values,
        first,
        second,
    ))
}

/// Single-pair convenience wrapper around [`make_controlled_system`].
pub fn make_controlled_from_functions(
    f: &FourierFunction,
    g: &FourierFunction,
    y: &ControlledProcess,
) -> Result<ControlledBiprocess, RoughError> {
    make_controlled_system(
        std::slice::from_ref(f),
        std::slice::from_ref(g),
        y,
    )
}
