//! Experiment configuration, seeded Monte-Carlo driver and file outputs for
//! the constrained-pendulum study.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, StateVector};
use crate::error::{Error, Result};
use crate::filters::{run_filter, FilterConfig, FilterVariant, ProjectionInnovation};
use crate::models::{propagate_state, MeasurementModel, PendulumParams, PENDULUM_STATE_DIM};
use crate::transport::CostMetric;

/// The truth is integrated this many times finer than the filter so its own
/// discretization drift stays well below the errors being measured.
pub const TRUTH_SUBSTEP_REFINEMENT: usize = 8;

pub const SERIES_HEADER: [&str; 10] =
    ["t", "x_true", "y_true", "x_est", "y_est", "std_x", "std_y", "std_vx", "std_vy", "constraint_error"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(rename = "N")]
    pub ensemble_size: usize,
    pub substeps: usize,
    pub pendulum: PendulumParams,
    #[serde(rename = "R_diag")]
    pub r_diag: [f64; 2],
    pub sigma_g: f64,
    pub variants: Vec<FilterVariant>,
    pub runs: usize,
    pub base_seed: u64,
    /// Row-major 4x4 covariance of the initial-state perturbation and of
    /// the initial ensemble about the perturbed state.
    pub initial_spread: Vec<Vec<f64>>,
    pub initial_angle_deg: f64,
    pub metric: CostMetric,
    pub projection_innovation: ProjectionInnovation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let spread = [0.05f64.powi(2), 0.05f64.powi(2), 0.01f64.powi(2), 0.01f64.powi(2)];
        Self {
            dt: 0.05,
            t_final: 10.0,
            ensemble_size: 100,
            substeps: 4,
            pendulum: PendulumParams::default(),
            r_diag: [0.01, 0.01],
            sigma_g: 1e-2,
            variants: FilterVariant::ALL.to_vec(),
            runs: 100,
            base_seed: 0,
            initial_spread: (0..PENDULUM_STATE_DIM)
                .map(|i| (0..PENDULUM_STATE_DIM).map(|j| if i == j { spread[i] } else { 0.0 }).collect())
                .collect(),
            initial_angle_deg: 30.0,
            metric: CostMetric::Euclidean,
            projection_innovation: ProjectionInnovation::Standard,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON config. Every failure is a config error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return fail(format!("t_final must be >= dt, got {}", self.t_final));
        }
        if self.ensemble_size < 2 {
            return fail(format!("N must be >= 2, got {}", self.ensemble_size));
        }
        if self.substeps == 0 {
            return fail("substeps must be >= 1".into());
        }
        if self.runs == 0 {
            return fail("runs must be >= 1".into());
        }
        if !(self.sigma_g > 0.0 && self.sigma_g.is_finite()) {
            return fail(format!("sigma_g must be > 0, got {}", self.sigma_g));
        }
        if !self.initial_angle_deg.is_finite() {
            return fail("initial_angle_deg must be finite".into());
        }
        self.pendulum.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        MeasurementModel::pendulum_position(self.r_diag)
            .map_err(|e| Error::InvalidConfig(format!("R_diag: {e}")))?;
        let spread = self.spread_matrix()?;
        Ensemble::from_gaussian(
            &DVector::zeros(PENDULUM_STATE_DIM),
            &spread,
            2,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .map_err(|e| Error::InvalidConfig(format!("initial_spread: {e}")))?;
        Ok(())
    }

    /// Number of measurement steps, `floor(t_final / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    pub fn spread_matrix(&self) -> Result<DMatrix<f64>> {
        let n = PENDULUM_STATE_DIM;
        if self.initial_spread.len() != n || self.initial_spread.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidConfig(format!("initial_spread must be {n}x{n}")));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.initial_spread[i][j]))
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let mut fc = FilterConfig::pendulum(self.pendulum, self.r_diag, self.sigma_g, self.dt)?;
        fc.substeps = self.substeps;
        fc.metric = self.metric;
        fc.innovation = self.projection_innovation;
        Ok(fc)
    }

    pub fn initial_truth(&self) -> StateVector {
        self.pendulum.rest_state(self.initial_angle_deg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthRun {
    /// States at `t = 0, dt, ..., K dt`.
    pub states: Vec<StateVector>,
    /// Position measurements at `t = dt, ..., K dt`.
    pub measurements: Vec<DVector<f64>>,
}

/// Integrates the truth from the configured rest state and draws one noisy
/// position measurement per interval.
pub fn simulate_truth<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<TruthRun> {
    simulate_truth_from(config, &config.initial_truth(), rng)
}

fn simulate_truth_from<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    x0: &StateVector,
    rng: &mut R,
) -> Result<TruthRun> {
    let model = MeasurementModel::pendulum_position(config.r_diag)?;
    let substeps = config.substeps * TRUTH_SUBSTEP_REFINEMENT;
    let steps = config.steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    states.push(x0.clone());
    for k in 0..steps {
        let next = propagate_state(&states[k], &config.pendulum, config.dt, substeps);
        measurements.push(model.measure(&next, rng));
        states.push(next);
    }
    Ok(TruthRun { states, measurements })
}

/// `sqrt(mean(e_k^2))` over a nonempty series.
pub fn rms_constraint_error(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidParameter("RMS of an empty series".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub truth: StateVector,
    pub estimate: StateVector,
    pub std_dev: StateVector,
    pub constraint_error: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize)]
pub struct RunDiagnostics {
    pub degenerate_weight_steps: usize,
    pub regularized_projection_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub variant: FilterVariant,
    /// One record per measurement step; the initial ensemble is not included.
    pub series: Vec<StepRecord>,
    pub rms_constraint_error: Option<f64>,
    pub failure: Option<String>,
    pub diagnostics: RunDiagnostics,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateResult {
    pub variant: FilterVariant,
    /// Mean of per-run RMS constraint errors over non-failed runs.
    pub avg_rms_constraint_error: Option<f64>,
    pub runs_used: usize,
    pub runs_failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub config: ExperimentConfig,
    /// Ordered by run index, then by the configured variant order.
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateResult>,
}

impl MonteCarloResult {
    pub fn aggregate_for(&self, variant: FilterVariant) -> Option<&AggregateResult> {
        self.aggregate.iter().find(|a| a.variant == variant)
    }

    pub fn runs_for(&self, variant: FilterVariant) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.variant == variant)
    }
}

/// Shared inputs of one Monte-Carlo run, consumed identically by every
/// variant.
#[derive(Clone, Debug)]
pub struct RunInputs {
    pub seed: u64,
    pub truth: TruthRun,
    pub initial_ensemble: Ensemble,
}

/// Draws the truth, measurements and initial ensemble of run `run` from the
/// generator seeded with `base_seed + run`.
pub fn run_inputs(config: &ExperimentConfig, run: usize) -> Result<RunInputs> {
    let seed = config.base_seed.wrapping_add(run as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = config.spread_matrix()?;
    let truth = simulate_truth(config, &mut rng)?;
    let perturbation = Ensemble::from_gaussian(&DVector::zeros(PENDULUM_STATE_DIM), &spread, 1, &mut rng)?;
    let center = config.initial_truth() + perturbation.member(0);
    let initial_ensemble = Ensemble::from_gaussian(&center, &spread, config.ensemble_size, &mut rng)?;
    Ok(RunInputs { seed, truth, initial_ensemble })
}

/// Runs one variant on prepared inputs. Process noise draws come from a
/// per-variant stream of the run seed, so adding or removing variants does
/// not change the others.
pub fn run_variant(
    config: &ExperimentConfig,
    filter: &FilterConfig,
    run: usize,
    inputs: &RunInputs,
    variant: FilterVariant,
) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    rng.set_stream(1 + FilterVariant::ALL.iter().position(|v| *v == variant).unwrap_or(0) as u64);
    let mut result = RunResult {
        run,
        seed: inputs.seed,
        variant,
        series: Vec::new(),
        rms_constraint_error: None,
        failure: None,
        diagnostics: RunDiagnostics::default(),
    };
    let summaries =
        match run_filter(&inputs.initial_ensemble, &inputs.truth.measurements, variant, filter, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                result.failure = Some(e.to_string());
                return result;
            }
        };
    for s in summaries.iter().skip(1) {
        result.diagnostics.degenerate_weight_steps += s.diagnostics.degenerate_weights as usize;
        result.diagnostics.regularized_projection_steps += s.diagnostics.regularized_projection as usize;
        result.series.push(StepRecord {
            t: s.t,
            truth: inputs.truth.states[s.k].clone(),
            estimate: s.estimate.clone(),
            std_dev: s.std_dev.clone(),
            constraint_error: s.constraint_error,
        });
    }
    let finite = result.series.iter().all(|r| {
        r.estimate.iter().chain(r.std_dev.iter()).all(|v| v.is_finite()) && r.constraint_error.is_finite()
    });
    if !finite {
        result.failure = Some("non-finite estimate".into());
    } else if result.series.len() != config.steps() {
        result.failure =
            Some(format!("series has {} steps, expected {}", result.series.len(), config.steps()));
    } else {
        let errors: Vec<f64> = result.series.iter().map(|r| r.constraint_error).collect();
        match rms_constraint_error(&errors) {
            Ok(v) => result.rms_constraint_error = Some(v),
            Err(e) => result.failure = Some(e.to_string()),
        }
    }
    result
}

/// Seeded Monte-Carlo study over all configured variants. Runs execute in
/// parallel; results and aggregates are ordered by run index and do not
/// depend on scheduling.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let filter = config.filter_config()?;
    let per_run: Vec<Vec<RunResult>> = (0..config.runs)
        .into_par_iter()
        .map(|run| match run_inputs(config, run) {
            Ok(inputs) => {
                config.variants.iter().map(|&v| run_variant(config, &filter, run, &inputs, v)).collect()
            }
            Err(e) => config
                .variants
                .iter()
                .map(|&variant| RunResult {
                    run,
                    seed: config.base_seed.wrapping_add(run as u64),
                    variant,
                    series: Vec::new(),
                    rms_constraint_error: None,
                    failure: Some(e.to_string()),
                    diagnostics: RunDiagnostics::default(),
                })
                .collect(),
        })
        .collect();
    let runs: Vec<RunResult> = per_run.into_iter().flatten().collect();
    let aggregate = aggregate(&config.variants, &runs);
    Ok(MonteCarloResult { config: config.clone(), runs, aggregate })
}

pub fn aggregate(variants: &[FilterVariant], runs: &[RunResult]) -> Vec<AggregateResult> {
    variants
        .iter()
        .map(|&variant| {
            let values: Vec<f64> =
                runs.iter().filter(|r| r.variant == variant).filter_map(|r| r.rms_constraint_error).collect();
            let failed = runs.iter().filter(|r| r.variant == variant && r.failed()).count();
            AggregateResult {
                variant,
                avg_rms_constraint_error: (!values.is_empty())
                    .then(|| values.iter().sum::<f64>() / values.len() as f64),
                runs_used: values.len(),
                runs_failed: failed,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!("unknown output format {other:?}"))),
        }
    }
}

pub fn run_file_name(run: &RunResult, format: OutputFormat) -> String {
    format!("run_{:04}_{}.{}", run.run, run.variant.key(), format.extension())
}

pub fn summary_file_name(format: OutputFormat) -> String {
    format!("summary.{}", format.extension())
}

fn series_row(r: &StepRecord) -> [f64; 10] {
    [
        r.t,
        r.truth[0],
        r.truth[1],
        r.estimate[0],
        r.estimate[1],
        r.std_dev[0],
        r.std_dev[1],
        r.std_dev[2],
        r.std_dev[3],
        r.constraint_error,
    ]
}

#[derive(Serialize)]
struct RunFile<'a> {
    run: usize,
    seed: u64,
    variant: FilterVariant,
    rms_constraint_error: Option<f64>,
    failure: Option<&'a str>,
    diagnostics: &'a RunDiagnostics,
    series: Vec<serde_json::Map<String, serde_json::Value>>,
}

/// Writes per-run series, the aggregate summary and a config echo into
/// `out_dir`, returning the paths in write order.
pub fn write_outputs(
    result: &MonteCarloResult,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.to_path_buf(), source })?;
    let mut written = Vec::with_capacity(result.runs.len() + 2);
    for run in &result.runs {
        let path = out_dir.join(run_file_name(run, format));
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_path(&path)
                    .map_err(|source| Error::Csv { path: path.clone(), source })?;
                let csv_err = |source| Error::Csv { path: path.clone(), source };
                w.write_record(SERIES_HEADER).map_err(csv_err)?;
                for r in &run.series {
                    w.write_record(series_row(r).iter().map(|v| v.to_string())).map_err(csv_err)?;
                }
                w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
            }
            OutputFormat::Json => {
                let series = run
                    .series
                    .iter()
                    .map(|r| {
                        SERIES_HEADER
                            .iter()
                            .zip(series_row(r))
                            .map(|(k, v)| (k.to_string(), serde_json::Value::from(v)))
                            .collect()
                    })
                    .collect();
                let file = RunFile {
                    run: run.run,
                    seed: run.seed,
                    variant: run.variant,
                    rms_constraint_error: run.rms_constraint_error,
                    failure: run.failure.as_deref(),
                    diagnostics: &run.diagnostics,
                    series,
                };
                write_json(&path, &file)?;
            }
        }
        written.push(path);
    }

    let summary = out_dir.join(summary_file_name(format));
    match format {
        OutputFormat::Csv => {
            let csv_err = |source| Error::Csv { path: summary.clone(), source };
            let mut w = csv::Writer::from_path(&summary).map_err(csv_err)?;
            w.write_record(["variant", "avg_rms_constraint_error", "runs_used", "runs_failed"])
                .map_err(csv_err)?;
            for a in &result.aggregate {
                w.write_record([
                    a.variant.key().to_string(),
                    a.avg_rms_constraint_error.map(|v| v.to_string()).unwrap_or_default(),
                    a.runs_used.to_string(),
                    a.runs_failed.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|source| Error::Io { path: summary.clone(), source })?;
        }
        OutputFormat::Json => write_json(&summary, &result.aggregate)?,
    }
    written.push(summary);

    let config_path = out_dir.join("config.json");
    write_json(&config_path, &result.config)?;
    written.push(config_path);
    Ok(written)
}

/// Writes one ensemble member per row under the given column names.
pub fn write_ensemble_csv(path: &Path, ensemble: &Ensemble, columns: &[&str]) -> Result<()> {
    if columns.len() != ensemble.dim() {
        return Err(Error::DimensionMismatch {
            context: "csv columns",
            expected: ensemble.dim(),
            got: columns.len(),
        });
    }
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(columns).map_err(csv_err)?;
    for m in ensemble.members() {
        w.write_record(m.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
