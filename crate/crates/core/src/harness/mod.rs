//! Experiment orchestration over many random placements.
//!
//! A placement is one draw of AP/UE positions and shadowing. Each placement
//! runs in isolation from its own random substreams, so results are
//! identical for any worker count.

use std::path::PathBuf;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::mmse_uplink;
use crate::geometry::{large_scale, place_uniform, ScenarioConfig};
use crate::pilots::{
    advanced_greedy_assign, baseline_assign, greedy_assign, AssignmentContext, PairPool, PilotPlan, PowerRule,
};
use crate::power::{
    bisection_maxmin, cd_fpt, statistical_maxmin, FeasibilityData, PowerCoefficients, ScaIteration, ScaSettings,
};
use crate::rates::{
    net_rate_with_overhead, pilot_overhead, rate_cf, rate_noncoherent_lb, rate_scsi, rate_ub, rate_unf_mc, RateInputs,
};
use crate::rng::{derive_seed, substream, tag};
use crate::user_centric::{mask_power, select_largest_lsf, ServingClusters};

pub mod cdf;
pub mod emit;
pub mod selftest;
pub mod studies;

pub use cdf::{compute_cdf, percentile, Cdf};
pub use emit::{read_csv, write_csv, write_jsonl, write_manifest, write_outputs, Manifest, CSV_COLUMNS};
pub use studies::{compare_pc, compare_training, sweep_pilot_lengths, PcComparison, SweepCell, TrainingComparison};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotPolicy {
    Baseline,
    Greedy,
    AdvancedGreedy,
    /// One unique pilot per UE; requires both pilot lengths to equal `K`.
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerPolicy {
    CdFpt,
    /// Max-min of the upper-bound SINR by sequential convex approximation.
    MmfSca,
    /// Max-min of the statistical-CSI SINR.
    MmfScsi,
}

/// How the greedy pilot searches set power while scoring candidate plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentPower {
    /// Channel-dependent full power recomputed for every candidate plan.
    Recompute,
    /// Channel-dependent full power of the starting plan, held fixed.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    Cf,
    Scsi,
    Ub,
    Unf,
    Lb,
}

impl RateKind {
    pub const ALL: [RateKind; 5] = [RateKind::Cf, RateKind::Scsi, RateKind::Ub, RateKind::Unf, RateKind::Lb];

    pub fn name(self) -> &'static str {
        match self {
            RateKind::Cf => "cf",
            RateKind::Scsi => "scsi",
            RateKind::Ub => "ub",
            RateKind::Unf => "unf",
            RateKind::Lb => "lb",
        }
    }

    /// Whether the UE uses downlink pilots to decode under this bound.
    pub fn uses_dl_pilots(self) -> bool {
        matches!(self, RateKind::Cf | RateKind::Ub | RateKind::Unf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub num_placements: usize,
    /// Monte Carlo budget per placement for the `unf` and `lb` bounds.
    pub num_fading_draws: usize,
    pub pilot_policy: PilotPolicy,
    pub power_policy: PowerPolicy,
    pub rates: Vec<RateKind>,
    /// Send beamformed downlink pilots. Without them the UE relies on
    /// statistics and the pilot overhead excludes downlink pilots.
    pub dl_training: bool,
    /// Cumulative large-scale fading share defining each serving cluster.
    pub user_centric_alpha: Option<f64>,
    pub greedy_iterations: usize,
    pub assignment_power: AssignmentPower,
    /// Downlink data symbols per coherence interval for the non-coherent
    /// bound; defaults to the data fraction of the non-pilot symbols.
    pub noncoherent_block: Option<usize>,
    pub sca: ScaSettings,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            num_placements: 200,
            num_fading_draws: 2000,
            pilot_policy: PilotPolicy::Baseline,
            power_policy: PowerPolicy::CdFpt,
            rates: vec![RateKind::Cf, RateKind::Scsi, RateKind::Ub],
            dl_training: true,
            user_centric_alpha: None,
            greedy_iterations: 5,
            assignment_power: AssignmentPower::Recompute,
            noncoherent_block: None,
            sca: ScaSettings::default(),
            workers: 0,
            output_path: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let spec: Self =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let s = &self.scenario;
        if self.num_placements == 0 || self.num_fading_draws == 0 {
            return Err(Error::InvalidConfig("placement and fading-draw counts must be at least 1".into()));
        }
        if self.pilot_policy == PilotPolicy::Orthogonal && (s.ul_pilot_len != s.num_ues || s.dl_pilot_len != s.num_ues)
        {
            return Err(Error::InvalidConfig(format!(
                "orthogonal pilots need both pilot lengths equal to K = {}",
                s.num_ues
            )));
        }
        if s.ul_pilot_len * s.dl_pilot_len < s.num_ues {
            return Err(Error::PilotPoolTooSmall { pairs: s.ul_pilot_len * s.dl_pilot_len, ues: s.num_ues });
        }
        if let Some(a) = self.user_centric_alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidConfig(format!("user_centric_alpha = {a} must lie in (0, 1]")));
            }
        }
        if self.rates.is_empty() {
            return Err(Error::InvalidConfig("at least one rate must be requested".into()));
        }
        if self.noncoherent_block == Some(0) {
            return Err(Error::InvalidConfig("noncoherent_block must be at least 1".into()));
        }
        for with_dl in [false, true] {
            let overhead = pilot_overhead(s, with_dl && self.dl_training);
            if overhead >= s.coherence_length {
                return Err(Error::OverheadTooLarge { overhead, coherence: s.coherence_length });
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.scenario.rng_seed
    }

    /// Pilot overhead charged against a bound.
    pub fn overhead(&self, kind: RateKind) -> usize {
        pilot_overhead(&self.scenario, self.dl_training && kind.uses_dl_pilots())
    }

    pub fn noncoherent_block_len(&self) -> usize {
        self.noncoherent_block.unwrap_or_else(|| {
            let s = &self.scenario;
            let data = s.coherence_length - pilot_overhead(s, false);
            ((s.dl_data_fraction * data as f64).round() as usize).max(1)
        })
    }
}

/// Geometry, pilots and estimation quality of one placement.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub index: usize,
    pub beta: DMatrix<f64>,
    pub plan: PilotPlan,
    pub gamma: DMatrix<f64>,
    pub clusters: ServingClusters,
}

/// A placement after power control, ready for rate evaluation.
#[derive(Debug, Clone)]
pub struct PlacementState {
    pub channel: ChannelState,
    pub eta: PowerCoefficients,
    pub power: PowerDiagnostics,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PowerDiagnostics {
    pub sca_trace: Vec<ScaIteration>,
    pub min_sinr: Option<f64>,
    /// Power coefficients after each linearization.
    #[serde(skip)]
    pub iterates: Vec<PowerCoefficients>,
}

/// Per-UE gross rates of every requested bound, plus Monte Carlo errors.
#[derive(Debug, Clone, Default)]
pub struct PlacementRates {
    pub gross: Vec<(RateKind, Vec<f64>)>,
    pub std_err: Vec<(RateKind, Vec<f64>)>,
    pub excluded: Vec<(RateKind, Vec<u64>)>,
}

impl PlacementRates {
    pub fn get(&self, kind: RateKind) -> Option<&[f64]> {
        self.gross.iter().find(|(k, _)| *k == kind).map(|(_, v)| v.as_slice())
    }
}

/// One output row: a UE within a placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub placement: usize,
    pub ue: usize,
    pub seed: u64,
    /// Label path of the placement's substreams below `seed`.
    pub seed_path: String,
    pub pilot_policy: PilotPolicy,
    pub power_policy: PowerPolicy,
    pub ul_pilot: usize,
    pub dl_pilot: usize,
    pub cluster_size: usize,
    pub cf: Option<f64>,
    pub scsi: Option<f64>,
    pub ub: Option<f64>,
    pub unf: Option<f64>,
    pub lb: Option<f64>,
    pub net_cf: Option<f64>,
    pub net_scsi: Option<f64>,
    pub net_ub: Option<f64>,
    pub net_unf: Option<f64>,
    pub net_lb: Option<f64>,
    pub unf_std_err: Option<f64>,
    pub lb_std_err: Option<f64>,
    pub unf_excluded: Option<u64>,
    pub sca_iterations: Option<usize>,
    pub sca_solves: Option<usize>,
    pub sca_failures: Option<usize>,
    pub min_sinr: Option<f64>,
}

impl ResultRecord {
    pub fn gross(&self, kind: RateKind) -> Option<f64> {
        match kind {
            RateKind::Cf => self.cf,
            RateKind::Scsi => self.scsi,
            RateKind::Ub => self.ub,
            RateKind::Unf => self.unf,
            RateKind::Lb => self.lb,
        }
    }

    pub fn net(&self, kind: RateKind) -> Option<f64> {
        match kind {
            RateKind::Cf => self.net_cf,
            RateKind::Scsi => self.net_scsi,
            RateKind::Ub => self.net_ub,
            RateKind::Unf => self.net_unf,
            RateKind::Lb => self.net_lb,
        }
    }

    fn set(&mut self, kind: RateKind, gross: f64, net: f64) {
        let (g, n) = match kind {
            RateKind::Cf => (&mut self.cf, &mut self.net_cf),
            RateKind::Scsi => (&mut self.scsi, &mut self.net_scsi),
            RateKind::Ub => (&mut self.ub, &mut self.net_ub),
            RateKind::Unf => (&mut self.unf, &mut self.net_unf),
            RateKind::Lb => (&mut self.lb, &mut self.net_lb),
        };
        *g = Some(gross);
        *n = Some(net);
    }
}

/// Records of every successful placement plus the failures that were skipped.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<(usize, String)>,
}

impl ExperimentOutcome {
    /// All per-UE values of one net rate.
    pub fn net_values(&self, kind: RateKind) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.net(kind)).collect()
    }

    pub fn gross_values(&self, kind: RateKind) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.gross(kind)).collect()
    }

    /// Minimum gross rate over UEs, one value per placement.
    pub fn min_rates(&self, kind: RateKind) -> Vec<f64> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for r in &self.records {
            let Some(v) = r.gross(kind) else { continue };
            match out.last_mut() {
                Some((p, m)) if *p == r.placement => *m = m.min(v),
                _ => out.push((r.placement, v)),
            }
        }
        out.into_iter().map(|(_, v)| v).collect()
    }
}

fn assign_pilots(spec: &ExperimentSpec, index: usize, beta: &DMatrix<f64>) -> Result<PilotPlan> {
    let s = &spec.scenario;
    if spec.pilot_policy == PilotPolicy::Orthogonal {
        return Ok(PilotPlan::orthogonal(s.num_ues));
    }
    let pool = PairPool::new(s.ul_pilot_len, s.dl_pilot_len);
    let mut rng = substream(spec.seed(), &[index as u64, tag::PILOTS]);
    let plan0 = baseline_assign(&pool, s.num_ues, &mut rng)?;
    if spec.pilot_policy == PilotPolicy::Baseline {
        return Ok(plan0);
    }
    let power = match spec.assignment_power {
        AssignmentPower::Recompute => PowerRule::CdFpt,
        AssignmentPower::Fixed => PowerRule::Fixed(cd_fpt(&mmse_uplink(beta, &plan0, s.rho_up()).1)?),
    };
    let ctx = AssignmentContext { beta, rho_up: s.rho_up(), rho_d: s.rho_d(), rho_dp: rho_dp(spec), power };
    match spec.pilot_policy {
        PilotPolicy::Greedy => greedy_assign(&plan0, &ctx, spec.greedy_iterations),
        _ => advanced_greedy_assign(&plan0, &ctx, spec.greedy_iterations),
    }
}

pub(crate) fn rho_dp(spec: &ExperimentSpec) -> f64 {
    if spec.dl_training {
        spec.scenario.rho_dp()
    } else {
        0.0
    }
}

/// Draws a placement's geometry and assigns pilots and serving clusters.
pub fn prepare_channels(spec: &ExperimentSpec, index: usize) -> Result<ChannelState> {
    let s = &spec.scenario;
    let placement = place_uniform(s, &mut substream(spec.seed(), &[index as u64, tag::GEOMETRY]));
    let beta = large_scale(&placement, s, &mut substream(spec.seed(), &[index as u64, tag::SHADOWING]))?.beta;
    let plan = assign_pilots(spec, index, &beta)?;
    let (_, gamma) = mmse_uplink(&beta, &plan, s.rho_up());
    let clusters = match spec.user_centric_alpha {
        Some(alpha) => select_largest_lsf(&beta, alpha)?,
        None => ServingClusters::all(s.num_aps, s.num_ues),
    };
    Ok(ChannelState { index, beta, plan, gamma, clusters })
}

pub fn prepare_placement(spec: &ExperimentSpec, index: usize) -> Result<PlacementState> {
    let channel = prepare_channels(spec, index)?;
    let (eta, power) = allocate_power(spec.power_policy, &spec.sca, &channel, spec.scenario.rho_d())?;
    Ok(PlacementState { channel, eta, power })
}

pub fn allocate_power(
    policy: PowerPolicy,
    sca: &ScaSettings,
    channel: &ChannelState,
    rho_d: f64,
) -> Result<(PowerCoefficients, PowerDiagnostics)> {
    let ChannelState { beta, gamma, plan, clusters, .. } = channel;
    let full = clusters.sizes().iter().all(|&n| n == clusters.num_aps);
    match policy {
        PowerPolicy::CdFpt => {
            let eta = cd_fpt(gamma)?;
            let eta = if full { eta } else { mask_power(&eta, clusters, gamma)? };
            Ok((eta, PowerDiagnostics::default()))
        }
        PowerPolicy::MmfSca | PowerPolicy::MmfScsi => {
            let mask = clusters.mask();
            let data = FeasibilityData::new(beta, gamma, plan, rho_d, if full { None } else { Some(&mask) })?;
            let res = if policy == PowerPolicy::MmfSca {
                let start = data.power_from_x(&data.full_power());
                bisection_maxmin(&data, &start, sca)?
            } else {
                statistical_maxmin(&data, sca)?
            };
            Ok((
                res.eta,
                PowerDiagnostics { sca_trace: res.trace, min_sinr: Some(res.min_sinr), iterates: res.iterates },
            ))
        }
    }
}

/// Evaluates every requested bound for a prepared placement.
pub fn evaluate_rates(spec: &ExperimentSpec, state: &PlacementState) -> Result<PlacementRates> {
    let s = &spec.scenario;
    let ch = &state.channel;
    let inputs = RateInputs {
        beta: &ch.beta,
        gamma: &ch.gamma,
        eta: &state.eta,
        plan: &ch.plan,
        rho_d: s.rho_d(),
        rho_dp: rho_dp(spec),
        rho_up: s.rho_up(),
    };
    let mut out = PlacementRates::default();
    let p = ch.index as u64;
    for &kind in &spec.rates {
        let values = match kind {
            RateKind::Cf => rate_cf(&inputs)?,
            RateKind::Scsi => rate_scsi(&inputs)?,
            RateKind::Ub => rate_ub(&inputs)?,
            RateKind::Unf => {
                let mc = rate_unf_mc(&inputs, spec.num_fading_draws, derive_seed(spec.seed(), &[p, tag::UNF]))?;
                out.std_err.push((kind, mc.std_err));
                out.excluded.push((kind, mc.excluded));
                mc.rates
            }
            RateKind::Lb => {
                let seed = derive_seed(spec.seed(), &[p, tag::NONCOHERENT]);
                let mc = rate_noncoherent_lb(&inputs, spec.noncoherent_block_len(), spec.num_fading_draws, seed)?;
                out.std_err.push((kind, mc.std_err));
                mc.rates
            }
        };
        out.gross.push((kind, values));
    }
    Ok(out)
}

/// Flattens one placement into per-UE records.
pub fn placement_records(
    spec: &ExperimentSpec,
    state: &PlacementState,
    rates: &PlacementRates,
) -> Result<Vec<ResultRecord>> {
    let k = spec.scenario.num_ues;
    let ch = &state.channel;
    let sizes = ch.clusters.sizes();
    let trace = &state.power.sca_trace;
    let mut records: Vec<ResultRecord> = (0..k)
        .map(|ue| {
            let (ul, dl) = ch.plan.pair(ue);
            ResultRecord {
                placement: ch.index,
                ue,
                seed: spec.seed(),
                seed_path: format!("{}", ch.index),
                pilot_policy: spec.pilot_policy,
                power_policy: spec.power_policy,
                ul_pilot: ul,
                dl_pilot: dl,
                cluster_size: sizes[ue],
                cf: None,
                scsi: None,
                ub: None,
                unf: None,
                lb: None,
                net_cf: None,
                net_scsi: None,
                net_ub: None,
                net_unf: None,
                net_lb: None,
                unf_std_err: None,
                lb_std_err: None,
                unf_excluded: None,
                sca_iterations: (!trace.is_empty()).then_some(trace.len()),
                sca_solves: (!trace.is_empty()).then(|| trace.iter().map(|t| t.solves).sum()),
                sca_failures: (!trace.is_empty())
                    .then(|| trace.iter().map(|t| t.numerical_failures + t.rejected).sum()),
                min_sinr: state.power.min_sinr,
            }
        })
        .collect();
    for (kind, values) in &rates.gross {
        let net = net_rate_with_overhead(values, &spec.scenario, spec.overhead(*kind))?;
        for ue in 0..k {
            records[ue].set(*kind, values[ue], net[ue]);
        }
    }
    for (kind, se) in &rates.std_err {
        for ue in 0..k {
            match kind {
                RateKind::Unf => records[ue].unf_std_err = Some(se[ue]),
                RateKind::Lb => records[ue].lb_std_err = Some(se[ue]),
                _ => {}
            }
        }
    }
    for (_, ex) in &rates.excluded {
        for ue in 0..k {
            records[ue].unf_excluded = Some(ex[ue]);
        }
    }
    Ok(records)
}

pub fn run_placement(spec: &ExperimentSpec, index: usize) -> Result<Vec<ResultRecord>> {
    let state = prepare_placement(spec, index)?;
    let rates = evaluate_rates(spec, &state)?;
    placement_records(spec, &state, &rates)
}

/// Runs `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every placement of `spec`, in parallel, keeping placement order.
/// A failing placement is logged and skipped.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let results: Vec<(usize, Result<Vec<ResultRecord>>)> = with_workers(spec.workers, || {
        (0..spec.num_placements).into_par_iter().map(|p| (p, run_placement(spec, p))).collect()
    })?;
    let mut outcome = ExperimentOutcome::default();
    for (p, res) in results {
        match res {
            Ok(records) => outcome.records.extend(records),
            Err(e) => {
                warn!("placement {p} skipped: {e}");
                outcome.failures.push((p, e.to_string()));
            }
        }
    }
    Ok(outcome)
}
