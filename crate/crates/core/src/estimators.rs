//! Rank-penalized estimators.
//!
//! Under exact isometry the penalized least-squares problem reduces to hard
//! thresholding the singular values of the surrogate matrix at `sqrt(lambda) * mu`.
//! The matrix-regression variant thresholds the projected fit `P_V U` at
//! `sqrt(l * m2 * lambda)` and maps back through the pseudo-inverse of `V`.

use serde::Serialize;

use crate::designs::{accumulate_surrogate, add_design, DesignKind, DesignSample, DesignSpec, Observation};
use crate::error::{Error, Result};
use crate::linalg::{column_projector, kept_count, pseudo_inverse, spectral_norm, svd, Matrix};

/// Penalty level, isometry constant and the slack factor `varrho >= 1` of the
/// tuning condition `sqrt(lambda) >= 2 varrho mu Delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub mu_sq: f64,
    pub varrho: f64,
}

impl EstimatorConfig {
    pub fn new(lambda: f64, mu_sq: f64, varrho: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if !(mu_sq > 0.0 && mu_sq.is_finite()) {
            return Err(Error::param("mu_sq", format!("must be positive, got {mu_sq}")));
        }
        if !(varrho >= 1.0 && varrho.is_finite()) {
            return Err(Error::param("varrho", format!("must be >= 1, got {varrho}")));
        }
        Ok(Self { lambda, mu_sq, varrho })
    }

    pub fn threshold(&self) -> f64 {
        (self.lambda * self.mu_sq).sqrt()
    }

    pub fn tuning_condition_met(&self, delta: f64) -> bool {
        self.lambda.sqrt() >= 2.0 * self.varrho * self.mu_sq.sqrt() * delta
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimate: Matrix,
    pub rank: usize,
    pub threshold: f64,
    pub kept_singular_values: Vec<f64>,
    pub discarded_singular_values: Vec<f64>,
    pub lambda: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must be positive, got {lambda}")))
    }
}

fn threshold_report(target: &Matrix, tau: f64, lambda: f64) -> Result<EstimateReport> {
    let decomposition = svd(target)?;
    let rank = kept_count(&decomposition.singular_values, tau);
    let (kept, discarded) = decomposition.singular_values.split_at(rank);
    Ok(EstimateReport {
        estimate: decomposition.truncate(rank),
        rank,
        threshold: tau,
        kept_singular_values: kept.to_vec(),
        discarded_singular_values: discarded.to_vec(),
        lambda,
    })
}

/// Hard-threshold estimator for matrix completion under uniform sampling,
/// threshold `sqrt(lambda * m1 * m2)`.
pub fn estimate_completion(observations: &[Observation], m1: usize, m2: usize, lambda: f64) -> Result<EstimateReport> {
    if let Some(bad) = observations
        .iter()
        .find(|o| !matches!(o.design, DesignSample::EntryIndex { .. }))
    {
        return Err(Error::WrongDesign(format!(
            "matrix completion expects entry samples, got {:?}",
            bad.design
        )));
    }
    estimate_isometry(observations, m1, m2, (m1 * m2) as f64, lambda)
}

/// Hard-threshold estimator for any design satisfying the isometry with
/// equality, threshold `sqrt(lambda) * mu`.
pub fn estimate_isometry(
    observations: &[Observation],
    m1: usize,
    m2: usize,
    mu_sq: f64,
    lambda: f64,
) -> Result<EstimateReport> {
    check_lambda(lambda)?;
    let surrogate = accumulate_surrogate(observations, m1, m2, mu_sq)?;
    threshold_report(&surrogate, (lambda * mu_sq).sqrt(), lambda)
}

/// Rank-selection estimator for `U = V A0 + E`.
///
/// The reported singular values are those of the projected fit `P_V U`.
/// When `V` is rank deficient the minimum-norm minimizer is returned.
pub fn estimate_rsc(v: &Matrix, u: &Matrix, lambda: f64) -> Result<EstimateReport> {
    check_lambda(lambda)?;
    if v.rows() != u.rows() {
        return Err(Error::DimensionMismatch(format!(
            "V has {} rows but U has {}",
            v.rows(),
            u.rows()
        )));
    }
    let (l, m2) = u.shape();
    let tau = ((l * m2) as f64 * lambda).sqrt();
    let fit = column_projector(v)?.try_mul(u)?;
    let mut report = threshold_report(&fit, tau, lambda)?;
    report.estimate = pseudo_inverse(v)?.try_mul(&report.estimate)?;
    Ok(report)
}

/// `||U - V A||_2^2 + l m2 lambda rank(A)` with the rank supplied by the caller.
pub fn rsc_objective(v: &Matrix, u: &Matrix, a: &Matrix, rank: usize, lambda: f64) -> Result<f64> {
    let residual = u.try_sub(&v.try_mul(a)?)?;
    let (l, m2) = u.shape();
    Ok(residual.frobenius_norm().powi(2) + (l * m2) as f64 * lambda * rank as f64)
}

/// Noise level `Delta = ||M||_inf` with
/// `M = (1/n) sum_i (Y_i X_i - E[Y_i X_i])`, using the known truth `a0`.
///
/// For every supported design `E[<A0, X> X] = A0 / mu^2`.
pub fn oracle_delta(observations: &[Observation], spec: &DesignSpec, a0: &Matrix) -> Result<f64> {
    let (m1, m2) = (spec.m1(), spec.m2());
    if a0.shape() != (m1, m2) {
        return Err(Error::DimensionMismatch(format!(
            "truth is {:?}, design is {m1}x{m2}",
            a0.shape()
        )));
    }
    if observations.is_empty() {
        return Err(Error::InvalidInput("noise level needs at least one observation".into()));
    }
    let expectation_scale = match spec.kind() {
        DesignKind::UsrCompletion => (m1 * m2) as f64,
        DesignKind::ColumnMask => m2 as f64,
        DesignKind::GaussianFull | DesignKind::RademacherFull => 1.0,
        DesignKind::RegressionFixed => {
            return Err(Error::UnsupportedDesign(
                "use oracle_delta_regression for fixed regression designs".into(),
            ))
        }
    };
    let n = observations.len() as f64;
    let mut m = Matrix::zeros(m1, m2);
    for obs in observations {
        add_design(&mut m, &obs.design, obs.response / n);
    }
    m.add_scaled(-1.0 / expectation_scale, a0);
    spectral_norm(&m)
}

/// `||P_V E||_inf` for a realized regression noise matrix.
pub fn oracle_delta_regression(v: &Matrix, e: &Matrix) -> Result<f64> {
    if v.rows() != e.rows() {
        return Err(Error::DimensionMismatch(format!(
            "V has {} rows but E has {}",
            v.rows(),
            e.rows()
        )));
    }
    spectral_norm(&column_projector(v)?.try_mul(e)?)
}
