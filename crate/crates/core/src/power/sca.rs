//! Max-min fairness power control by bisection over conic feasibility
//! problems, wrapped in sequential convex approximation for the
//! upper-bound SINR.

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::feasibility::{FeasibilityData, Mode, SolveStatus};
use crate::power::PowerCoefficients;

/// Hard cap on bisection steps per search.
const MAX_BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaSettings {
    /// Relative bisection accuracy on the SINR target.
    pub eps: f64,
    /// Number of linearizations.
    pub iterations: usize,
    /// Initial upper end of the SINR bracket; defaults to ten times the
    /// largest upper-bound SINR at full power.
    pub nu_max: Option<f64>,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self { eps: 1e-3, iterations: 5, nu_max: None }
    }
}

/// Bisection record for one linearization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaIteration {
    /// Minimum SINR certified by the expansion point.
    pub nu_start: f64,
    /// Largest target found feasible.
    pub nu_final: f64,
    /// Minimum SINR of the new iterate.
    pub min_sinr: f64,
    pub solves: usize,
    pub numerical_failures: usize,
    /// Solver successes whose point failed independent verification.
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct MaxMinResult {
    pub eta: PowerCoefficients,
    /// Scaled solution `sqrt(eta gamma)`.
    pub x: DMatrix<f64>,
    pub min_sinr: f64,
    pub nu_max: f64,
    pub trace: Vec<ScaIteration>,
    /// Power coefficients after each linearization.
    pub iterates: Vec<PowerCoefficients>,
}

struct Bracket {
    lo: f64,
    best: Option<DMatrix<f64>>,
    record: ScaIteration,
}

fn bisect(data: &FeasibilityData, mode: Mode<'_>, lo: f64, mut hi: f64, eps: f64) -> Bracket {
    let mut lo = lo.max(0.0);
    while lo > 0.99 * hi {
        hi *= 2.0;
    }
    let mut record =
        ScaIteration { nu_start: lo, nu_final: lo, min_sinr: lo, solves: 0, numerical_failures: 0, rejected: 0 };
    let mut best = None;
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= eps * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let out = data.solve(&data.build(mid, mode));
        record.solves += 1;
        record.rejected += usize::from(out.diagnostics.rejected);
        match out.status {
            SolveStatus::Feasible => {
                lo = mid;
                best = out.x;
            }
            SolveStatus::Infeasible => hi = mid,
            SolveStatus::NumericalFailure => {
                debug!("numerical failure at nu = {mid}: {}", out.diagnostics.solver_status);
                record.numerical_failures += 1;
                hi = mid;
            }
        }
    }
    record.nu_final = lo;
    Bracket { lo, best, record }
}

fn initial_nu_max(data: &FeasibilityData, settings: &ScaSettings) -> Result<f64> {
    let nu_max = match settings.nu_max {
        Some(v) => v,
        None => 10.0 * data.sinr_ub(&data.full_power()).into_iter().fold(0.0, f64::max),
    };
    if !(nu_max > 0.0) || !nu_max.is_finite() {
        return Err(Error::DegenerateScenario(format!("no positive SINR is attainable (nu_max = {nu_max})")));
    }
    Ok(nu_max)
}

fn check_settings(settings: &ScaSettings) -> Result<()> {
    if !(settings.eps > 0.0 && settings.eps < 1.0) {
        return Err(Error::InvalidConfig(format!("bisection accuracy {} must lie in (0, 1)", settings.eps)));
    }
    Ok(())
}

/// Maximizes the minimum upper-bound SINR starting from `start`.
///
/// Each linearization restarts the bisection from the SINR its expansion
/// point already achieves, so the objective never decreases.
pub fn bisection_maxmin(
    data: &FeasibilityData,
    start: &PowerCoefficients,
    settings: &ScaSettings,
) -> Result<MaxMinResult> {
    check_settings(settings)?;
    let nu_max = initial_nu_max(data, settings)?;
    let mut xn = data.project(&data.x_from_power(start));
    let mut trace = Vec::with_capacity(settings.iterations);
    let mut iterates = Vec::with_capacity(settings.iterations);
    for n in 0..settings.iterations {
        let lo = data.min_sinr(&xn, &Mode::Linearized(&xn));
        let bracket = bisect(data, Mode::Linearized(&xn), lo, nu_max, settings.eps);
        if let Some(x) = bracket.best {
            xn = x;
        }
        let mut record = bracket.record;
        record.min_sinr = data.min_sinr(&xn, &Mode::Linearized(&xn));
        if n == 0 && !(record.min_sinr > 0.0) {
            return Err(Error::DegenerateScenario("no feasible point at any positive SINR target".into()));
        }
        debug!("SCA iteration {n}: nu {} -> {}, {} solves", record.nu_start, bracket.lo, record.solves);
        trace.push(record);
        iterates.push(data.power_from_x(&xn));
    }
    let min_sinr = data.min_sinr(&xn, &Mode::Linearized(&xn));
    Ok(MaxMinResult { eta: data.power_from_x(&xn), x: xn, min_sinr, nu_max, trace, iterates })
}

/// Maximizes the minimum statistical-CSI SINR. That problem is
/// quasi-convex, so a single bisection reaches the optimum.
pub fn statistical_maxmin(data: &FeasibilityData, settings: &ScaSettings) -> Result<MaxMinResult> {
    check_settings(settings)?;
    let nu_max = initial_nu_max(data, settings)?;
    let start = data.full_power();
    let lo = data.min_sinr(&start, &Mode::Statistical);
    let bracket = bisect(data, Mode::Statistical, lo, nu_max, settings.eps);
    let x = bracket.best.unwrap_or(start);
    let min_sinr = data.min_sinr(&x, &Mode::Statistical);
    if !(min_sinr > 0.0) {
        return Err(Error::DegenerateScenario("no feasible point at any positive SINR target".into()));
    }
    let mut record = bracket.record;
    record.min_sinr = min_sinr;
    let eta = data.power_from_x(&x);
    Ok(MaxMinResult { eta: eta.clone(), x, min_sinr, nu_max, trace: vec![record], iterates: vec![eta] })
}
