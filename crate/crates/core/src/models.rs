//! Pendulum dynamics in Cartesian coordinates, numerical integration,
//! measurement models and the length constraint.
//!
//! State ordering is `(x, y, vx, vy)` with `y` pointing downwards, so the
//! stable equilibrium is `(0, L, 0, 0)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{cholesky_factor, psd_factor, standard_normal_vector, Ensemble, StateVector};
use crate::error::{Error, Result};

pub const PENDULUM_STATE_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumParams {
    /// Rod length in meters.
    #[serde(rename = "L")]
    pub length: f64,
    /// Gravitational acceleration in m/s^2.
    #[serde(rename = "g")]
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { length: 1.0, gravity: 9.8 }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter(format!("pendulum length {} must be > 0", self.length)));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return Err(Error::InvalidParameter(format!("gravity {} must be > 0", self.gravity)));
        }
        Ok(())
    }

    /// State at rest on the rod circle, `angle_deg` measured from the
    /// horizontal towards the downward `y` axis.
    pub fn rest_state(&self, angle_deg: f64) -> StateVector {
        let theta = angle_deg.to_radians();
        DVector::from_vec(vec![self.length * theta.cos(), self.length * theta.sin(), 0.0, 0.0])
    }
}

/// Time derivative `(vx, vy, ax, ay)` of the Cartesian pendulum:
///
/// ```text
/// ax = (-g x y - x (vx^2 + vy^2)) / L^2
/// ay = ( g x^2 - y (vx^2 + vy^2)) / L^2
/// ```
pub fn pendulum_derivative(state: &StateVector, params: &PendulumParams) -> StateVector {
    let (x, y, vx, vy) = (state[0], state[1], state[2], state[3]);
    let speed_sq = vx * vx + vy * vy;
    let inv_l2 = 1.0 / (params.length * params.length);
    let g = params.gravity;
    DVector::from_vec(vec![vx, vy, inv_l2 * (-g * x * y - x * speed_sq), inv_l2 * (g * x * x - y * speed_sq)])
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(derivative: F, state: &StateVector, dt: f64) -> StateVector
where
    F: Fn(&StateVector) -> StateVector,
{
    let k1 = derivative(state);
    let k2 = derivative(&(state + &k1 * (dt / 2.0)));
    let k3 = derivative(&(state + &k2 * (dt / 2.0)));
    let k4 = derivative(&(state + &k3 * dt));
    state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Advances one pendulum state over `dt` using `substeps` equal RK4 steps.
pub fn propagate_state(
    state: &StateVector,
    params: &PendulumParams,
    dt: f64,
    substeps: usize,
) -> StateVector {
    let h = dt / substeps as f64;
    let f = |s: &StateVector| pendulum_derivative(s, params);
    let mut current = state.clone();
    for _ in 0..substeps {
        current = rk4_step(f, &current, h);
    }
    current
}

/// Propagates every member through the pendulum dynamics, then optionally
/// adds one Gaussian process-noise draw per member.
pub fn propagate_ensemble<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    params: &PendulumParams,
    dt: f64,
    substeps: usize,
    process_noise_cov: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<Ensemble> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be > 0")));
    }
    if substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be >= 1".into()));
    }
    if ensemble.dim() != PENDULUM_STATE_DIM {
        return Err(Error::DimensionMismatch {
            context: "pendulum state",
            expected: PENDULUM_STATE_DIM,
            got: ensemble.dim(),
        });
    }
    let noise_factor = match process_noise_cov {
        Some(cov) => {
            if cov.nrows() != PENDULUM_STATE_DIM || cov.ncols() != PENDULUM_STATE_DIM {
                return Err(Error::DimensionMismatch {
                    context: "process noise covariance",
                    expected: PENDULUM_STATE_DIM,
                    got: cov.nrows(),
                });
            }
            Some(psd_factor(cov)?)
        }
        None => None,
    };
    let mut out = ensemble.as_matrix().clone();
    for mut col in out.column_iter_mut() {
        let mut next = propagate_state(&col.clone_owned(), params, dt, substeps);
        if let Some(factor) = &noise_factor {
            next += factor * standard_normal_vector(PENDULUM_STATE_DIM, rng);
        }
        col.copy_from(&next);
    }
    Ensemble::from_matrix(out)
}

/// Something that predicts a measurement from a state and scores residuals.
pub trait ObservationModel {
    fn measurement_dim(&self) -> usize;

    fn state_dim(&self) -> usize;

    fn predict(&self, state: &StateVector) -> DVector<f64>;

    /// Squared Mahalanobis distance between an observation and a prediction.
    fn mahalanobis_sq(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> f64;

    /// Unnormalized Gaussian likelihood of `y` given `state`; 1 at the peak.
    fn likelihood(&self, y: &DVector<f64>, state: &StateVector) -> f64 {
        (-0.5 * self.mahalanobis_sq(y, &self.predict(state))).exp()
    }
}

/// Linear observation `y = H x + v`, `v ~ N(0, R)`.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    h: DMatrix<f64>,
    r: DMatrix<f64>,
    r_chol: Cholesky<f64, Dyn>,
}

impl MeasurementModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != h.nrows() || r.ncols() != h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "measurement noise covariance",
                expected: h.nrows(),
                got: r.nrows(),
            });
        }
        // Symmetry check plus positive definiteness.
        cholesky_factor(&r)?;
        let r_chol = r.clone().cholesky().expect("checked positive definite");
        Ok(Self { h, r, r_chol })
    }

    /// Position-only observation of the pendulum with diagonal noise.
    pub fn pendulum_position(r_diag: [f64; 2]) -> Result<Self> {
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let r = DMatrix::from_diagonal(&DVector::from_column_slice(&r_diag));
        Self::new(h, r)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Noisy measurement `H x + v`.
    pub fn measure<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R) -> DVector<f64> {
        let noise = self.r_chol.l() * standard_normal_vector(self.h.nrows(), rng);
        &self.h * state + noise
    }
}

impl ObservationModel for MeasurementModel {
    fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn predict(&self, state: &StateVector) -> DVector<f64> {
        &self.h * state
    }

    fn mahalanobis_sq(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> f64 {
        let residual = y - predicted;
        let z = self
            .r_chol
            .l_dirty()
            .solve_lower_triangular(&residual)
            .expect("cholesky factor has a nonzero diagonal");
        z.norm_squared()
    }
}

/// Unnormalized Gaussian likelihood `exp(-1/2 (y - p)^T R^-1 (y - p))`.
pub fn gaussian_likelihood(y: &DVector<f64>, predicted: &DVector<f64>, r: &DMatrix<f64>) -> Result<f64> {
    if y.len() != predicted.len() || r.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "likelihood residual",
            expected: r.nrows(),
            got: y.len(),
        });
    }
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Decomposition("measurement covariance is singular".into()))?;
    let residual = y - predicted;
    let q = residual.dot(&chol.solve(&residual));
    Ok((-0.5 * q).exp())
}

type ConstraintFn = dyn Fn(&StateVector) -> DVector<f64> + Send + Sync;
type ErrorFn = dyn Fn(&StateVector) -> f64 + Send + Sync;

/// Equality constraint `g(x) = d` with `g: R^n -> R^s`.
#[derive(Clone)]
pub struct ConstraintSpec {
    g: Arc<ConstraintFn>,
    target: DVector<f64>,
    error: Option<Arc<ErrorFn>>,
    label: &'static str,
}

impl fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstraintSpec")
            .field("label", &self.label)
            .field("target", &self.target.as_slice())
            .finish()
    }
}

impl ConstraintSpec {
    pub fn new<F>(g: F, target: DVector<f64>) -> Result<Self>
    where
        F: Fn(&StateVector) -> DVector<f64> + Send + Sync + 'static,
    {
        if target.is_empty() || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("constraint target must be finite and nonempty".into()));
        }
        Ok(Self { g: Arc::new(g), target, error: None, label: "custom" })
    }

    /// Linear constraint `A x = d`.
    pub fn linear(a: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if a.nrows() != target.len() {
            return Err(Error::DimensionMismatch {
                context: "linear constraint",
                expected: a.nrows(),
                got: target.len(),
            });
        }
        let mut spec = Self::new(move |x: &StateVector| &a * x, target)?;
        spec.label = "linear";
        Ok(spec)
    }

    /// Fixed rod length, `x^2 + y^2 = L^2`. The reported error is the length
    /// error `|sqrt(x^2 + y^2) - L|` in meters.
    pub fn pendulum(params: &PendulumParams) -> Self {
        let length = params.length;
        Self {
            g: Arc::new(|x: &StateVector| DVector::from_element(1, pendulum_constraint(x))),
            target: DVector::from_element(1, length * length),
            error: Some(Arc::new(move |x: &StateVector| (pendulum_constraint(x).sqrt() - length).abs())),
            label: "pendulum_length",
        }
    }

    pub fn evaluate(&self, state: &StateVector) -> DVector<f64> {
        (self.g)(state)
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// Constraint dimension `s`.
    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// Scalar constraint error of a point estimate. Defaults to
    /// `||g(x) - d||`.
    pub fn estimate_error(&self, state: &StateVector) -> f64 {
        match &self.error {
            Some(f) => f(state),
            None => (self.evaluate(state) - &self.target).norm(),
        }
    }
}

/// Squared distance of the bob from the pivot, `x^2 + y^2`.
pub fn pendulum_constraint(state: &StateVector) -> f64 {
    state[0] * state[0] + state[1] * state[1]
}

/// Base measurement model extended with the constraint as a near-perfect
/// pseudo-measurement: `h_aug(x) = [h(x); g(x)]`, observed value `[y; d]`,
/// noise `blockdiag(R, sigma_g^2 I)`.
#[derive(Clone, Debug)]
pub struct AugmentedMeasurementModel {
    base: MeasurementModel,
    constraint: ConstraintSpec,
    sigma_g: f64,
}

pub fn augment_measurement(
    base: &MeasurementModel,
    constraint: &ConstraintSpec,
    sigma_g: f64,
) -> Result<AugmentedMeasurementModel> {
    if !(sigma_g > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_g {sigma_g} must be > 0")));
    }
    Ok(AugmentedMeasurementModel { base: base.clone(), constraint: constraint.clone(), sigma_g })
}

impl AugmentedMeasurementModel {
    pub fn base(&self) -> &MeasurementModel {
        &self.base
    }

    pub fn constraint(&self) -> &ConstraintSpec {
        &self.constraint
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    /// Augmented observation `[y; d]`.
    pub fn augment_observation(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = y.len();
        let s = self.constraint.dim();
        let mut out = DVector::zeros(m + s);
        out.rows_mut(0, m).copy_from(y);
        out.rows_mut(m, s).copy_from(self.constraint.target());
        out
    }

    /// Block-diagonal augmented noise covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.base.measurement_dim();
        let s = self.constraint.dim();
        let mut r = DMatrix::zeros(m + s, m + s);
        r.view_mut((0, 0), (m, m)).copy_from(self.base.r());
        for k in 0..s {
            r[(m + k, m + k)] = self.sigma_g * self.sigma_g;
        }
        r
    }
}

impl ObservationModel for AugmentedMeasurementModel {
    fn measurement_dim(&self) -> usize {
        self.base.measurement_dim() + self.constraint.dim()
    }

    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    fn predict(&self, state: &StateVector) -> DVector<f64> {
        let h = self.base.predict(state);
        let g = self.constraint.evaluate(state);
        let mut out = DVector::zeros(h.len() + g.len());
        out.rows_mut(0, h.len()).copy_from(&h);
        out.rows_mut(h.len(), g.len()).copy_from(&g);
        out
    }

    fn mahalanobis_sq(&self, y: &DVector<f64>, predicted: &DVector<f64>) -> f64 {
        let m = self.base.measurement_dim();
        let s = self.constraint.dim();
        let base = self.base.mahalanobis_sq(&y.rows(0, m).clone_owned(), &predicted.rows(0, m).clone_owned());
        let pseudo: f64 = (0..s)
            .map(|k| {
                let r = (y[m + k] - predicted[m + k]) / self.sigma_g;
                r * r
            })
            .sum();
        base + pseudo
    }
}
