//! Studies that compare several arms over the same placements.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    allocate_power, prepare_channels, rho_dp, run_experiment, with_workers, ChannelState, ExperimentSpec, PowerPolicy,
    RateKind,
};
use crate::error::{Error, Result};
use crate::harness::cdf::percentile;
use crate::power::PowerCoefficients;
use crate::rates::{net_rate_with_overhead, pilot_overhead, rate_cf, rate_scsi, RateInputs};

/// Mean rate of one pilot-length pair, or the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub ul: usize,
    pub dl: usize,
    pub kind: RateKind,
    pub mean_net: Option<f64>,
    pub mean_gross: Option<f64>,
    pub placements: usize,
    pub skipped: Option<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `base` for every `(ul, dl)` pair and averages one bound over all
/// UEs and placements. Pairs that cannot host every UE are skipped.
pub fn sweep_pilot_lengths(
    base: &ExperimentSpec,
    ul: &[usize],
    dl: &[usize],
    kind: RateKind,
) -> Result<Vec<SweepCell>> {
    base.validate()?;
    let mut cells = Vec::with_capacity(ul.len() * dl.len());
    for &u in ul {
        for &d in dl {
            let mut spec = base.clone();
            spec.scenario.ul_pilot_len = u;
            spec.scenario.dl_pilot_len = d;
            if !spec.rates.contains(&kind) {
                spec.rates.push(kind);
            }
            let mut cell =
                SweepCell { ul: u, dl: d, kind, mean_net: None, mean_gross: None, placements: 0, skipped: None };
            if let Err(e) = spec.validate() {
                cell.skipped = Some(e.to_string());
                cells.push(cell);
                continue;
            }
            let out = run_experiment(&spec)?;
            cell.placements = spec.num_placements - out.failures.len();
            cell.mean_net = mean(&out.net_values(kind));
            cell.mean_gross = mean(&out.gross_values(kind));
            if cell.placements == 0 {
                cell.skipped = Some("every placement failed".into());
            }
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// Minimum rates of one placement under each power-control arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcPlacement {
    pub index: usize,
    pub min_cf_cd_fpt: f64,
    /// Minimum beamformed-training rate after each linearization.
    pub min_cf_by_iteration: Vec<f64>,
    /// Minimum beamformed-training rate with statistical max-min power.
    pub min_cf_scsi_power: f64,
    /// Minimum statistical-CSI rate with statistical max-min power.
    pub min_scsi_scsi_power: f64,
}

impl PcPlacement {
    pub fn min_cf_sca(&self) -> f64 {
        self.min_cf_by_iteration.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PcComparison {
    pub placements: Vec<PcPlacement>,
    pub failures: Vec<(usize, String)>,
}

impl PcComparison {
    /// Mean over placements of the minimum rate after linearization
    /// `iteration`, counted from 1.
    pub fn mean_min_cf_at(&self, iteration: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .placements
            .iter()
            .filter_map(|p| p.min_cf_by_iteration.get(iteration.checked_sub(1)?).copied())
            .collect();
        mean(&v)
    }

    /// Share of placements where the SCA power beats statistical max-min
    /// power on the minimum beamformed-training rate.
    pub fn fraction_sca_beats_scsi(&self) -> f64 {
        if self.placements.is_empty() {
            return 0.0;
        }
        let wins = self.placements.iter().filter(|p| p.min_cf_sca() > p.min_cf_scsi_power).count();
        wins as f64 / self.placements.len() as f64
    }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn inputs<'a>(spec: &ExperimentSpec, ch: &'a ChannelState, eta: &'a PowerCoefficients, rho_dp: f64) -> RateInputs<'a> {
    let s = &spec.scenario;
    RateInputs { beta: &ch.beta, gamma: &ch.gamma, eta, plan: &ch.plan, rho_d: s.rho_d(), rho_dp, rho_up: s.rho_up() }
}

fn pc_placement(spec: &ExperimentSpec, index: usize) -> Result<PcPlacement> {
    let ch = prepare_channels(spec, index)?;
    let rho_d = spec.scenario.rho_d();
    let dp = rho_dp(spec);
    let (cd, _) = allocate_power(PowerPolicy::CdFpt, &spec.sca, &ch, rho_d)?;
    let (_, sca) = allocate_power(PowerPolicy::MmfSca, &spec.sca, &ch, rho_d)?;
    let (scsi, _) = allocate_power(PowerPolicy::MmfScsi, &spec.sca, &ch, rho_d)?;
    let min_cf_by_iteration = sca
        .iterates
        .iter()
        .map(|eta| rate_cf(&inputs(spec, &ch, eta, dp)).map(|r| min_of(&r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcPlacement {
        index,
        min_cf_cd_fpt: min_of(&rate_cf(&inputs(spec, &ch, &cd, dp))?),
        min_cf_by_iteration,
        min_cf_scsi_power: min_of(&rate_cf(&inputs(spec, &ch, &scsi, dp))?),
        min_scsi_scsi_power: min_of(&rate_scsi(&inputs(spec, &ch, &scsi, dp))?),
    })
}

fn run_placements<T: Send>(
    spec: &ExperimentSpec,
    f: impl Fn(&ExperimentSpec, usize) -> Result<T> + Sync + Send,
) -> Result<(Vec<T>, Vec<(usize, String)>)> {
    spec.validate()?;
    let results: Vec<(usize, Result<T>)> =
        with_workers(spec.workers, || (0..spec.num_placements).into_par_iter().map(|p| (p, f(spec, p))).collect())?;
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (p, res) in results {
        match res {
            Ok(v) => ok.push(v),
            Err(e) => {
                warn!("placement {p} skipped: {e}");
                failures.push((p, e.to_string()));
            }
        }
    }
    Ok((ok, failures))
}

/// Channel-dependent full power, max-min by SCA and statistical max-min
/// power on identical placements and pilots.
pub fn compare_pc(spec: &ExperimentSpec) -> Result<PcComparison> {
    if !spec.dl_training {
        return Err(Error::InvalidConfig("power-control comparison needs downlink training".into()));
    }
    let (placements, failures) = run_placements(spec, pc_placement)?;
    Ok(PcComparison { placements, failures })
}

/// Net per-UE rates with and without beamformed downlink training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingComparison {
    pub with_training: Vec<f64>,
    pub without_training: Vec<f64>,
    pub p5_with: f64,
    pub p5_without: f64,
    pub median_with: f64,
    pub median_without: f64,
    /// Relative gain of the fifth percentile.
    pub gain_p5: f64,
    pub failures: Vec<(usize, String)>,
}

/// Power policy used when the UE has no downlink training: the SCA target
/// assumes training, so it is replaced by the statistical max-min.
fn untrained_policy(policy: PowerPolicy) -> PowerPolicy {
    match policy {
        PowerPolicy::MmfSca => PowerPolicy::MmfScsi,
        p => p,
    }
}

fn training_placement(spec: &ExperimentSpec, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = &spec.scenario;
    let ch = prepare_channels(spec, index)?;
    let (eta_a, _) = allocate_power(spec.power_policy, &spec.sca, &ch, s.rho_d())?;
    let (eta_b, _) = allocate_power(untrained_policy(spec.power_policy), &spec.sca, &ch, s.rho_d())?;
    let with = rate_cf(&inputs(spec, &ch, &eta_a, s.rho_dp()))?;
    let without = rate_scsi(&inputs(spec, &ch, &eta_b, 0.0))?;
    Ok((
        net_rate_with_overhead(&with, s, pilot_overhead(s, true))?,
        net_rate_with_overhead(&without, s, pilot_overhead(s, false))?,
    ))
}

/// Beamformed training charged for both pilot phases against statistical
/// decoding charged for uplink pilots only, on identical pilot plans.
pub fn compare_training(spec: &ExperimentSpec) -> Result<TrainingComparison> {
    let (rows, failures) = run_placements(spec, training_placement)?;
    let with_training: Vec<f64> = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let without_training: Vec<f64> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
    if with_training.is_empty() {
        return Err(Error::DegenerateScenario("every placement failed".into()));
    }
    let p5_with = percentile(&with_training, 0.05)?;
    let p5_without = percentile(&without_training, 0.05)?;
    Ok(TrainingComparison {
        p5_with,
        p5_without,
        median_with: percentile(&with_training, 0.5)?,
        median_without: percentile(&without_training, 0.5)?,
        gain_p5: p5_with / p5_without - 1.0,
        with_training,
        without_training,
        failures,
    })
}
