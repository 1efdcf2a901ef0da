//! Downlink power control.
//!
//! Power coefficients `eta[m, k]` must satisfy the per-AP budget
//! `sum_k eta[m, k] gamma[m, k] <= 1`. [`cd_fpt`] spends the full budget
//! uniformly; [`sca::bisection_maxmin`] maximizes the minimum SINR.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub mod feasibility;
pub mod sca;

pub use feasibility::{FeasibilityData, Mode, SolveOutcome, SolveStatus, SolverDiagnostics};
pub use sca::{bisection_maxmin, statistical_maxmin, MaxMinResult, ScaIteration, ScaSettings};

/// Slack allowed on the per-AP budget.
pub const POWER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCoefficients {
    pub eta: DMatrix<f64>,
    /// Elementwise square root of `eta`.
    pub zeta: DMatrix<f64>,
}

impl PowerCoefficients {
    pub fn from_eta(eta: DMatrix<f64>) -> Self {
        let zeta = eta.map(f64::sqrt);
        Self { eta, zeta }
    }

    pub fn from_zeta(zeta: DMatrix<f64>) -> Self {
        let eta = zeta.map(|z| z * z);
        Self { eta, zeta }
    }

    pub fn zeros(m: usize, k: usize) -> Self {
        Self { eta: DMatrix::zeros(m, k), zeta: DMatrix::zeros(m, k) }
    }

    /// Fraction of its budget each AP spends, `sum_k eta[m, k] gamma[m, k]`.
    pub fn load(&self, gamma: &DMatrix<f64>) -> Vec<f64> {
        self.eta.component_mul(gamma).row_iter().map(|r| r.sum()).collect()
    }
}

/// Channel-dependent full power: `eta[m, k] = 1 / sum_k' gamma[m, k']`.
pub fn cd_fpt(gamma: &DMatrix<f64>) -> Result<PowerCoefficients> {
    let mut eta = DMatrix::zeros(gamma.nrows(), gamma.ncols());
    for (m, row) in gamma.row_iter().enumerate() {
        let total = row.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroEstimateQuality(m));
        }
        eta.row_mut(m).fill(1.0 / total);
    }
    Ok(PowerCoefficients::from_eta(eta))
}

/// True when every AP respects its power budget.
pub fn check_power(eta: &PowerCoefficients, gamma: &DMatrix<f64>) -> bool {
    eta.eta.iter().all(|&e| e >= 0.0) && eta.load(gamma).iter().all(|&l| l <= 1.0 + POWER_TOLERANCE)
}
