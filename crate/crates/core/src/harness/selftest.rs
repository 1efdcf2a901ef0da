//! Fast numerical checks against hand-computed values, for verifying a
//! build before long runs.

use nalgebra::DMatrix;

use crate::estimation::mmse_uplink;
use crate::harness::cdf::percentile;
use crate::pilots::PilotPlan;
use crate::power::{bisection_maxmin, cd_fpt, check_power, FeasibilityData, PowerCoefficients, ScaSettings};
use crate::rates::{rate_cf, rate_scsi, rate_ub, RateInputs};
use crate::user_centric::select_largest_lsf;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn check(name: &'static str, got: f64, want: f64, tol: f64) -> Check {
    Check { name, passed: (got - want).abs() <= tol, detail: format!("got {got:.12}, expected {want:.12}") }
}

fn scalar_rates() -> Vec<Check> {
    let one = |v| DMatrix::from_element(1, 1, v);
    let (beta, gamma) = (one(1.0), one(0.5));
    let eta = PowerCoefficients::from_eta(one(2.0));
    let plan = PilotPlan::orthogonal(1);
    let inputs =
        RateInputs { beta: &beta, gamma: &gamma, eta: &eta, plan: &plan, rho_d: 1.0, rho_dp: 1.0, rho_up: 1.0 };
    let first = |r: crate::Result<Vec<f64>>| r.map_or(f64::NAN, |v| v[0]);
    vec![
        check("scalar beamformed-training rate", first(rate_cf(&inputs)), (5.0f64 / 3.0).log2(), 1e-12),
        check("scalar upper bound", first(rate_ub(&inputs)), 2.5f64.log2(), 1e-12),
        check("scalar statistical-CSI rate", first(rate_scsi(&inputs)), 1.25f64.log2(), 1e-12),
    ]
}

fn estimation_quality() -> Check {
    // Two UEs sharing a pilot at one AP: gamma = tau rho beta^2 / (tau rho (b1 + b2) + 1).
    let beta = DMatrix::from_row_slice(1, 2, &[0.4, 0.1]);
    let plan = PilotPlan::new(1, 2, &[(0, 0), (0, 1)]);
    let (_, gamma) = mmse_uplink(&beta, &plan, 10.0);
    check("co-pilot estimate quality", gamma[(0, 0)], 10.0 * 0.16 / (10.0 * 0.5 + 1.0), 1e-12)
}

fn full_power_budget() -> Check {
    let gamma = DMatrix::from_row_slice(2, 3, &[0.2, 0.3, 0.5, 0.1, 0.0, 0.4]);
    let loads = cd_fpt(&gamma).map(|eta| (check_power(&eta, &gamma), eta.load(&gamma)));
    let passed = matches!(&loads, Ok((true, l)) if l.iter().all(|v| (v - 1.0).abs() < 1e-12));
    Check { name: "full power spends each AP budget", passed, detail: format!("{loads:?}") }
}

fn single_ue_maxmin() -> Check {
    let beta = DMatrix::from_column_slice(3, 1, &[0.5, 0.05, 0.01]);
    let plan = PilotPlan::orthogonal(1);
    let (_, gamma) = mmse_uplink(&beta, &plan, 10.0);
    let result = FeasibilityData::new(&beta, &gamma, &plan, 50.0, None).and_then(|data| {
        let optimum = data.sinr_ub(&data.full_power())[0];
        Ok((bisection_maxmin(&data, &cd_fpt(&gamma)?, &ScaSettings::default())?.min_sinr, optimum))
    });
    match result {
        Ok((got, want)) => check("single-UE max-min reaches full power", got, want, 1e-3 * want),
        Err(e) => Check { name: "single-UE max-min reaches full power", passed: false, detail: e.to_string() },
    }
}

fn cluster_selection() -> Check {
    let beta = DMatrix::from_column_slice(4, 1, &[0.5, 0.3, 0.15, 0.05]);
    let sizes = select_largest_lsf(&beta, 0.9).map(|c| c.sizes());
    Check { name: "largest-fading cluster", passed: matches!(&sizes, Ok(s) if s == &[3]), detail: format!("{sizes:?}") }
}

fn nearest_rank() -> Check {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    check("nearest-rank fifth percentile", percentile(&v, 0.05).unwrap_or(f64::NAN), 5.0, 0.0)
}

pub fn run() -> Vec<Check> {
    let mut out = scalar_rates();
    out.extend([estimation_quality(), full_power_budget(), single_ue_maxmin(), cluster_selection(), nearest_rank()]);
    out
}
