//! Optimal-transport filter variants for states subject to an equality
//! constraint `g(x) = d`.
//!
//! Every variant runs the same predict/update core: propagate the posterior
//! ensemble, weight the prior members by the measurement likelihood, and
//! resample through the optimal transport plan. The variants differ in two
//! switches:
//!
//! | variant    | augmented weights | projection | projected ensemble fed back |
//! |------------|-------------------|------------|-----------------------------|
//! | `OTF`      | no                | no         | -                           |
//! | `OTProj`   | no                | yes        | no                          |
//! | `OTNLeq`   | no                | yes        | yes                         |
//! | `OTMA`     | yes               | no         | -                           |
//! | `OTNLeqMA` | yes               | yes        | yes                         |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{cross_covariance, Ensemble, StateVector};
use crate::error::{Error, Result};
use crate::models::{
    augment_measurement, propagate_ensemble, ConstraintSpec, MeasurementModel, ObservationModel,
    PendulumParams,
};
use crate::transport::{
    apply_transport, build_cost_matrix, solve_transport_with, CostMetric, SolverOptions, WeightVector,
};

/// Raw likelihoods below this value count as underflowed.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Condition number of `Sigma_dd` above which the inverse is regularized.
pub const MAX_PROJECTION_CONDITION: f64 = 1e12;

/// Constraint-value spread below this fraction of the constraint scale is
/// treated as zero: the values differ only by rounding.
pub const PROJECTION_SPREAD_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterVariant {
    Otf,
    OtProj,
    OtNleq,
    OtMa,
    OtNleqMa,
}

impl FilterVariant {
    pub const ALL: [FilterVariant; 5] = [
        FilterVariant::Otf,
        FilterVariant::OtProj,
        FilterVariant::OtNleq,
        FilterVariant::OtMa,
        FilterVariant::OtNleqMa,
    ];

    /// Lowercase identifier used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            FilterVariant::Otf => "otf",
            FilterVariant::OtProj => "otproj",
            FilterVariant::OtNleq => "otnleq",
            FilterVariant::OtMa => "otma",
            FilterVariant::OtNleqMa => "otnleqma",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FilterVariant::Otf => "OTF",
            FilterVariant::OtProj => "OTProj",
            FilterVariant::OtNleq => "OTNLeq",
            FilterVariant::OtMa => "OTMA",
            FilterVariant::OtNleqMa => "OTNLeqMA",
        }
    }

    pub fn projects(self) -> bool {
        matches!(self, FilterVariant::OtProj | FilterVariant::OtNleq | FilterVariant::OtNleqMa)
    }

    pub fn feeds_back_projection(self) -> bool {
        matches!(self, FilterVariant::OtNleq | FilterVariant::OtNleqMa)
    }

    pub fn augments_measurement(self) -> bool {
        matches!(self, FilterVariant::OtMa | FilterVariant::OtNleqMa)
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterVariant::ALL
            .into_iter()
            .find(|v| v.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown filter variant `{s}`")))
    }
}

/// Sign convention of the per-member projection innovation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionInnovation {
    /// `d - g(x_i)`: moves each member toward the constraint target.
    #[default]
    Standard,
    /// `g(x_i) - mean_j g(x_j)`: recenters about the ensemble's own mean
    /// constraint value and never references the target.
    PaperLiteral,
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    pub params: PendulumParams,
    /// Measurement interval in seconds.
    pub dt: f64,
    pub substeps: usize,
    pub process_noise: Option<DMatrix<f64>>,
    pub measurement: MeasurementModel,
    pub constraint: ConstraintSpec,
    pub sigma_g: f64,
    pub metric: CostMetric,
    pub innovation: ProjectionInnovation,
    pub solver: SolverOptions,
}

impl FilterConfig {
    /// Pendulum setup with position measurements and the rod-length
    /// constraint; remaining fields take their defaults.
    pub fn pendulum(params: PendulumParams, r_diag: [f64; 2], sigma_g: f64, dt: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            dt,
            substeps: 4,
            process_noise: None,
            measurement: MeasurementModel::pendulum_position(r_diag)?,
            constraint: ConstraintSpec::pendulum(&params),
            sigma_g,
            metric: CostMetric::Euclidean,
            innovation: ProjectionInnovation::Standard,
            solver: SolverOptions::default(),
        })
    }
}

/// Which pipeline stages ran in a step, plus numerical events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StepDiagnostics {
    pub propagated: bool,
    pub augmented: bool,
    pub projected: bool,
    pub fed_back: bool,
    pub degenerate_weights: bool,
    pub regularized_projection: bool,
}

#[derive(Clone, Debug)]
pub struct FilterState {
    /// Ensemble propagated into the next step.
    pub posterior: Ensemble,
    /// Ensemble used for estimates and metrics.
    pub reported: Ensemble,
    pub k: usize,
    pub t: f64,
    pub diagnostics: StepDiagnostics,
}

impl FilterState {
    pub fn new(initial: Ensemble) -> Self {
        Self {
            reported: initial.clone(),
            posterior: initial,
            k: 0,
            t: 0.0,
            diagnostics: StepDiagnostics::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightOutcome {
    pub weights: WeightVector,
    /// Every raw likelihood underflowed and uniform weights were substituted.
    pub degenerate: bool,
}

/// Normalized likelihood weights of the prior members for observation `y`.
pub fn compute_weights(
    prior: &Ensemble,
    y: &DVector<f64>,
    model: &dyn ObservationModel,
) -> Result<WeightOutcome> {
    if y.len() != model.measurement_dim() {
        return Err(Error::DimensionMismatch {
            context: "measurement",
            expected: model.measurement_dim(),
            got: y.len(),
        });
    }
    if prior.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "observation model state",
            expected: model.state_dim(),
            got: prior.dim(),
        });
    }
    let raw: Vec<f64> = prior.members().map(|x| model.likelihood(y, &x)).collect();
    if raw.iter().all(|l| *l < LIKELIHOOD_FLOOR) {
        return Ok(WeightOutcome { weights: WeightVector::uniform(prior.len())?, degenerate: true });
    }
    Ok(WeightOutcome { weights: WeightVector::from_unnormalized(raw)?, degenerate: false })
}

/// Optimal-transport resampling of `prior` under `weights`.
pub fn ot_update(prior: &Ensemble, weights: &WeightVector, metric: CostMetric) -> Result<Ensemble> {
    ot_update_with(prior, weights, metric, &SolverOptions::default())
}

pub fn ot_update_with(
    prior: &Ensemble,
    weights: &WeightVector,
    metric: CostMetric,
    solver: &SolverOptions,
) -> Result<Ensemble> {
    if weights.len() != prior.len() {
        return Err(Error::DimensionMismatch {
            context: "weights",
            expected: prior.len(),
            got: weights.len(),
        });
    }
    let cost = build_cost_matrix(prior, metric);
    let plan = solve_transport_with(&cost, weights, solver)?;
    apply_transport(prior, &plan)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionArtifacts {
    /// Mean constraint value over the ensemble.
    pub d_hat: DVector<f64>,
    pub sigma_dd: DMatrix<f64>,
    pub sigma_xd: DMatrix<f64>,
    /// `Sigma_xd * Sigma_dd^-1`, `n x s`.
    pub gain: DMatrix<f64>,
    pub regularized: bool,
}

/// Moves each equally weighted member with the ensemble Kalman-type gain
/// `K = Sigma_xd Sigma_dd^-1` computed from the constraint values
/// `D_i = g(x_i)`. Exact in one step for linear constraints.
pub fn constraint_projection(
    posterior: &Ensemble,
    constraint: &ConstraintSpec,
    innovation: ProjectionInnovation,
) -> Result<(Ensemble, ProjectionArtifacts)> {
    if posterior.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: posterior.len() });
    }
    let values = posterior.map(|x| constraint.evaluate(x))?;
    if values.dim() != constraint.dim() {
        return Err(Error::DimensionMismatch {
            context: "constraint value",
            expected: constraint.dim(),
            got: values.dim(),
        });
    }
    let d_hat = values.mean();
    let sigma_dd = values.covariance()?;
    let sigma_xd = cross_covariance(posterior, &values)?;
    let scale = values.as_matrix().amax().max(constraint.target().amax()).max(1.0);
    let spread = (sigma_dd.trace().max(0.0) / sigma_dd.nrows() as f64).sqrt();
    let (inverse, regularized) = if spread <= PROJECTION_SPREAD_FLOOR * scale {
        (DMatrix::zeros(sigma_dd.nrows(), sigma_dd.nrows()), true)
    } else {
        regularized_inverse(&sigma_dd)
    };
    let gain = &sigma_xd * inverse;

    let target = constraint.target();
    let mut projected = posterior.as_matrix().clone();
    for (i, mut col) in projected.column_iter_mut().enumerate() {
        let d_i = values.as_matrix().column(i);
        let innov: DVector<f64> = match innovation {
            ProjectionInnovation::Standard => target - d_i,
            ProjectionInnovation::PaperLiteral => d_i - &d_hat,
        };
        col += &gain * innov;
    }
    let artifacts = ProjectionArtifacts { d_hat, sigma_dd, sigma_xd, gain, regularized };
    Ok((Ensemble::from_matrix(projected)?, artifacts))
}

/// Inverse of a symmetric PSD matrix, adding `1e-12 * trace / s * I` first
/// when it is singular or badly conditioned. A zero matrix yields a zero
/// "inverse" (no spread means no usable gain).
fn regularized_inverse(sigma: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let s = sigma.nrows();
    let eig = sigma.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min > 0.0 && max / min <= MAX_PROJECTION_CONDITION {
        if let Some(inv) = sigma.clone().try_inverse() {
            return (inv, false);
        }
    }
    let trace = sigma.trace();
    if !(trace > 0.0) {
        return (DMatrix::zeros(s, s), true);
    }
    let shifted = sigma + DMatrix::identity(s, s) * (1e-12 * trace / s as f64);
    match shifted.try_inverse() {
        Some(inv) => (inv, true),
        None => (DMatrix::zeros(s, s), true),
    }
}

/// One predict/update cycle. `y` is either the base measurement or, for the
/// augmented variants, the full augmented observation `[y; d]`.
pub fn filter_step<R: Rng + ?Sized>(
    state: &FilterState,
    y: &DVector<f64>,
    variant: FilterVariant,
    config: &FilterConfig,
    rng: &mut R,
) -> Result<FilterState> {
    let mut diagnostics = StepDiagnostics::default();
    let prior = propagate_ensemble(
        &state.posterior,
        &config.params,
        config.dt,
        config.substeps,
        config.process_noise.as_ref(),
        rng,
    )?;
    diagnostics.propagated = true;

    let outcome = if variant.augments_measurement() {
        let model = augment_measurement(&config.measurement, &config.constraint, config.sigma_g)?;
        let base_dim = config.measurement.measurement_dim();
        let y_aug = if y.len() == base_dim { model.augment_observation(y) } else { y.clone() };
        diagnostics.augmented = true;
        compute_weights(&prior, &y_aug, &model)?
    } else {
        compute_weights(&prior, y, &config.measurement)?
    };
    diagnostics.degenerate_weights = outcome.degenerate;

    let updated = ot_update_with(&prior, &outcome.weights, config.metric, &config.solver)?;

    let (posterior, reported) = if variant.projects() {
        let (projected, artifacts) = constraint_projection(&updated, &config.constraint, config.innovation)?;
        diagnostics.projected = true;
        diagnostics.regularized_projection = artifacts.regularized;
        if variant.feeds_back_projection() {
            diagnostics.fed_back = true;
            (projected.clone(), projected)
        } else {
            (updated, projected)
        }
    } else {
        (updated.clone(), updated)
    };

    Ok(FilterState { posterior, reported, k: state.k + 1, t: (state.k + 1) as f64 * config.dt, diagnostics })
}

/// Point estimate and spread of the reported ensemble at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub k: usize,
    pub t: f64,
    pub estimate: StateVector,
    pub std_dev: StateVector,
    pub constraint_error: f64,
    pub diagnostics: StepDiagnostics,
}

impl StepSummary {
    fn from_state(state: &FilterState, constraint: &ConstraintSpec) -> Result<Self> {
        let estimate = state.reported.mean();
        Ok(Self {
            k: state.k,
            t: state.t,
            std_dev: state.reported.std_dev()?,
            constraint_error: constraint.estimate_error(&estimate),
            estimate,
            diagnostics: state.diagnostics,
        })
    }
}

/// Runs the filter over a measurement series. The first summary describes
/// the initial ensemble; one more follows per measurement.
pub fn run_filter<R: Rng + ?Sized>(
    initial: &Ensemble,
    measurements: &[DVector<f64>],
    variant: FilterVariant,
    config: &FilterConfig,
    rng: &mut R,
) -> Result<Vec<StepSummary>> {
    let mut state = FilterState::new(initial.clone());
    let mut series = Vec::with_capacity(measurements.len() + 1);
    series.push(StepSummary::from_state(&state, &config.constraint)?);
    for y in measurements {
        state = filter_step(&state, y, variant, config, rng)?;
        series.push(StepSummary::from_state(&state, &config.constraint)?);
    }
    Ok(series)
}
