//! Equally weighted sample ensembles and their sample statistics.
//!
//! An [`Ensemble`] stores its members as the columns of an `n x N` matrix, so
//! linear resampling maps act on it by right multiplication.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A point in state space. For the pendulum the ordering is `(x, y, vx, vy)`.
pub type StateVector = DVector<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps an `n x N` matrix whose columns are the members.
    pub fn from_matrix(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() == 0 {
            return Err(Error::InvalidEnsemble("ensemble has no members".into()));
        }
        if members.nrows() == 0 {
            return Err(Error::InvalidEnsemble("state dimension is zero".into()));
        }
        if let Some(idx) = members.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEnsemble(format!(
                "member {} has a non-finite component",
                idx / members.nrows()
            )));
        }
        Ok(Self { members })
    }

    pub fn from_members(members: &[StateVector]) -> Result<Self> {
        let first =
            members.first().ok_or_else(|| Error::InvalidEnsemble("ensemble has no members".into()))?;
        let dim = first.len();
        if let Some((i, m)) = members.iter().enumerate().find(|(_, m)| m.len() != dim) {
            return Err(Error::InvalidEnsemble(format!(
                "member {i} has dimension {}, expected {dim}",
                m.len()
            )));
        }
        Self::from_matrix(DMatrix::from_columns(members))
    }

    /// Builds a one-dimensional ensemble from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_row_slice(1, values.len(), values))
    }

    /// Number of members `N`.
    pub fn len(&self) -> usize {
        self.members.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn member(&self, i: usize) -> StateVector {
        self.members.column(i).into_owned()
    }

    pub fn members(&self) -> impl Iterator<Item = StateVector> + '_ {
        self.members.column_iter().map(|c| c.into_owned())
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.members
    }

    /// Applies `f` to every member, producing a new ensemble (possibly of a
    /// different dimension).
    pub fn map<F>(&self, mut f: F) -> Result<Ensemble>
    where
        F: FnMut(&StateVector) -> StateVector,
    {
        let mapped: Vec<StateVector> = self.members().map(|m| f(&m)).collect();
        Ensemble::from_members(&mapped)
    }

    /// Coordinatewise arithmetic mean.
    pub fn mean(&self) -> StateVector {
        self.members.column_mean()
    }

    /// Unbiased sample covariance (divisor `N - 1`).
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        cross_covariance(self, self)
    }

    /// Per-coordinate sample standard deviation, `sqrt(diag(covariance))`.
    pub fn std_dev(&self) -> Result<StateVector> {
        let cov = self.covariance()?;
        Ok(cov.diagonal().map(|v| v.max(0.0).sqrt()))
    }

    /// Draws `count` independent members from `N(mean, cov)`.
    ///
    /// `cov` must be symmetric positive definite. The draws are a
    /// deterministic function of the random source state.
    pub fn from_gaussian<R: Rng + ?Sized>(
        mean: &StateVector,
        cov: &DMatrix<f64>,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "gaussian covariance",
                expected: n,
                got: cov.nrows(),
            });
        }
        if count == 0 {
            return Err(Error::InvalidEnsemble("requested zero members".into()));
        }
        let chol = cholesky_factor(cov)?;
        let mut members = DMatrix::zeros(n, count);
        for mut col in members.column_iter_mut() {
            let z = standard_normal_vector(n, rng);
            col.copy_from(&(mean + &chol * z));
        }
        Self::from_matrix(members)
    }
}

/// Unbiased sample cross-covariance `E[(a - mean a)(b - mean b)^T]` with
/// divisor `N - 1`, where samples are the members of each ensemble.
pub fn cross_covariance(a: &Ensemble, b: &Ensemble) -> Result<DMatrix<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cross-covariance sample count",
            expected: a.len(),
            got: b.len(),
        });
    }
    let count = a.len();
    if count < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: count });
    }
    let da = centered(a.as_matrix());
    let db = centered(b.as_matrix());
    Ok(da * db.transpose() / (count as f64 - 1.0))
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(cov, 1e-12) {
        return Err(Error::Decomposition("covariance is not symmetric".into()));
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Decomposition("covariance is not positive definite".into()))
}

/// Symmetric square-root factor `S` with `S S^T = cov` for a positive
/// semidefinite matrix; tolerates exact zeros, rejects negative eigenvalues.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(cov, 1e-12) {
        return Err(Error::Decomposition("covariance is not symmetric".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -1e-12 * scale.max(1.0);
    if let Some(v) = eig.eigenvalues.iter().find(|v| **v < floor) {
        return Err(Error::Decomposition(format!(
            "covariance is not positive semidefinite (eigenvalue {v:e})"
        )));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol * scale))
}
