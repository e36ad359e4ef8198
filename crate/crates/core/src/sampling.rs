//! Sampling a target density by transport resampling of an easy proposal.
//!
//! Equal-weight proposal draws `s_i` are reweighted with `w_i ∝ p(s_i)` and
//! pushed through the optimal transport plan, giving equal-weight samples
//! that approximate the target. Outputs are convex combinations of the
//! proposal draws, so they stay inside the proposal's convex hull; on a
//! non-convex support such as an annulus they can land in the hole.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::ensemble::{Ensemble, StateVector};
use crate::error::{Error, Result};
use crate::filters::ot_update;
use crate::transport::{CostMetric, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    RealLine,
    Annulus { r_in: f64, r_out: f64 },
    Unbounded,
}

type DensityFn = dyn Fn(&StateVector) -> f64 + Send + Sync;

/// Possibly unnormalized density on `R^dim`.
#[derive(Clone)]
pub struct TargetDensity {
    pdf: Arc<DensityFn>,
    dim: usize,
    support: Support,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity").field("dim", &self.dim).field("support", &self.support).finish()
    }
}

impl TargetDensity {
    pub fn new<F>(dim: usize, support: Support, pdf: F) -> Self
    where
        F: Fn(&StateVector) -> f64 + Send + Sync + 'static,
    {
        Self { pdf: Arc::new(pdf), dim, support }
    }

    pub fn evaluate(&self, x: &StateVector) -> f64 {
        (self.pdf)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> Support {
        self.support
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BimodalParams {
    pub m1: f64,
    pub s1: f64,
    pub m2: f64,
    pub s2: f64,
    pub p: f64,
}

impl Default for BimodalParams {
    fn default() -> Self {
        Self { m1: -2.0, s1: 0.5, m2: 2.0, s2: 0.5, p: 0.5 }
    }
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Two-component Gaussian mixture `p N(m1, s1^2) + (1 - p) N(m2, s2^2)` on
/// the real line. `p` may be 0 or 1, which leaves a single Gaussian.
pub fn bimodal_target(m1: f64, s1: f64, m2: f64, s2: f64, p: f64) -> Result<TargetDensity> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::InvalidParameter(format!("mixture scales must be > 0, got {s1}, {s2}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("mixture weight {p} outside [0, 1]")));
    }
    if !(m1.is_finite() && m2.is_finite()) {
        return Err(Error::InvalidParameter("mixture means must be finite".into()));
    }
    Ok(TargetDensity::new(1, Support::RealLine, move |x: &StateVector| {
        p * normal_pdf(x[0], m1, s1) + (1.0 - p) * normal_pdf(x[0], m2, s2)
    }))
}

/// Uniform density on the planar annulus `r_in <= |s| <= r_out`.
pub fn uniform_annulus_target(r_in: f64, r_out: f64) -> Result<TargetDensity> {
    check_annulus(r_in, r_out)?;
    let area = PI * (r_out * r_out - r_in * r_in);
    Ok(TargetDensity::new(2, Support::Annulus { r_in, r_out }, move |s: &StateVector| {
        let r = s.norm();
        if (r_in..=r_out).contains(&r) {
            1.0 / area
        } else {
            0.0
        }
    }))
}

fn check_annulus(r_in: f64, r_out: f64) -> Result<()> {
    if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "annulus radii must satisfy 0 < r_in < r_out, got {r_in}, {r_out}"
        )));
    }
    Ok(())
}

/// Area-uniform draws on an annulus: radius by inverse CDF
/// `r = sqrt(r_in^2 + u (r_out^2 - r_in^2))`, angle uniform.
pub fn annulus_proposal<R: Rng + ?Sized>(
    count: usize,
    r_in: f64,
    r_out: f64,
    rng: &mut R,
) -> Result<Ensemble> {
    check_annulus(r_in, r_out)?;
    disk_like(count, r_in, r_out, rng)
}

/// Area-uniform draws on the full disk of radius `r`.
pub fn disk_proposal<R: Rng + ?Sized>(count: usize, r: f64, rng: &mut R) -> Result<Ensemble> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("disk radius {r} must be > 0")));
    }
    disk_like(count, 0.0, r, rng)
}

fn disk_like<R: Rng + ?Sized>(count: usize, r_in: f64, r_out: f64, rng: &mut R) -> Result<Ensemble> {
    let mut m = DMatrix::zeros(2, count);
    for mut col in m.column_iter_mut() {
        let u: f64 = rng.random();
        let r = (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt();
        let theta = rng.random::<f64>() * TAU;
        col[0] = r * theta.cos();
        col[1] = r * theta.sin();
    }
    Ensemble::from_matrix(m)
}

/// Uniform draws on the interval `[lo, hi]`.
pub fn interval_proposal<R: Rng + ?Sized>(count: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Ensemble> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
    }
    let values: Vec<f64> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
    Ensemble::from_scalars(&values)
}

/// Self-normalized importance weights `w_i = p(s_i) / sum_j p(s_j)`.
pub fn target_weights(proposal: &Ensemble, target: &TargetDensity) -> Result<WeightVector> {
    if proposal.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            context: "target density",
            expected: target.dim(),
            got: proposal.dim(),
        });
    }
    let raw: Vec<f64> = proposal.members().map(|s| target.evaluate(&s)).collect();
    if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidWeights(format!("target density at sample {i} is {v}")));
    }
    if raw.iter().all(|v| *v == 0.0) {
        return Err(Error::EmptySupport);
    }
    WeightVector::from_unnormalized(raw)
}

/// Turns equal-weight proposal draws into equal-weight draws from `target`.
pub fn ot_sample(proposal: &Ensemble, target: &TargetDensity, metric: CostMetric) -> Result<Ensemble> {
    if proposal.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: proposal.len() });
    }
    let weights = target_weights(proposal, target)?;
    ot_update(proposal, &weights, metric)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Fraction of `samples` inside the convex hull of `proposal` (with
/// absolute slack `tol`). Supports one- and two-dimensional ensembles.
pub fn hull_membership(proposal: &Ensemble, samples: &Ensemble, tol: f64) -> Result<f64> {
    if proposal.dim() != samples.dim() {
        return Err(Error::DimensionMismatch {
            context: "hull membership",
            expected: proposal.dim(),
            got: samples.dim(),
        });
    }
    let inside = match proposal.dim() {
        1 => {
            let row = proposal.as_matrix().row(0);
            let (lo, hi) = (row.min(), row.max());
            samples.as_matrix().iter().filter(|v| **v >= lo - tol && **v <= hi + tol).count()
        }
        2 => {
            let hull = convex_hull(proposal);
            samples.members().filter(|s| inside_hull(&hull, [s[0], s[1]], tol)).count()
        }
        d => {
            return Err(Error::InvalidParameter(format!(
                "hull membership supports dimensions 1 and 2, got {d}"
            )))
        }
    };
    Ok(inside as f64 / samples.len() as f64)
}

/// Counter-clockwise hull vertices (monotone chain).
fn convex_hull(points: &Ensemble) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.members().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross =
        |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn inside_hull(hull: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (hull[0][0] - p[0]).hypot(hull[0][1] - p[1]) <= tol,
        _ => (0..hull.len()).all(|k| {
            let a = hull[k];
            let b = hull[(k + 1) % hull.len()];
            let edge = (b[0] - a[0]).hypot(b[1] - a[1]);
            let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            // Signed distance to the left of edge a->b.
            edge == 0.0 || cross / edge >= -tol
        }),
    }
}

/// Fraction of two-dimensional samples with `r_in <= |s| <= r_out`.
pub fn annulus_coverage(samples: &Ensemble, r_in: f64, r_out: f64) -> f64 {
    let inside = samples
        .members()
        .filter(|s| {
            let r = s.norm();
            r >= r_in && r <= r_out
        })
        .count();
    inside as f64 / samples.len() as f64
}

/// Self-normalized importance-sampling mean `sum_i w_i s_i`.
pub fn weighted_mean(proposal: &Ensemble, weights: &WeightVector) -> StateVector {
    proposal.as_matrix() * DVector::from_column_slice(weights.as_slice())
}
