//! Achievable downlink rates in bits/s/Hz.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{downlink_moments, gain_statistics, LinkSampler};
use crate::geometry::ScenarioConfig;
use crate::pilots::PilotPlan;
use crate::power::PowerCoefficients;
use crate::rng::{substream, tag};

/// Largest number of independent batches a Monte Carlo estimate is split into.
pub const MAX_BATCHES: usize = 20;

/// Magnitude below which an estimate `a_hat` is treated as a failed trial.
pub const MIN_ESTIMATE_NORM: f64 = 1e-150;

#[derive(Debug, Clone, Copy)]
pub struct RateInputs<'a> {
    pub beta: &'a DMatrix<f64>,
    pub gamma: &'a DMatrix<f64>,
    pub eta: &'a PowerCoefficients,
    pub plan: &'a PilotPlan,
    pub rho_d: f64,
    pub rho_dp: f64,
    pub rho_up: f64,
}

/// Per-UE terms shared by the closed-form SINR expressions.
#[derive(Debug, Clone)]
pub struct SinrTerms {
    /// `E[a_kk] = sum_m sqrt(eta) gamma`.
    pub mean_gain: Vec<f64>,
    /// Beamforming gain uncertainty `varsigma_kk`.
    pub uncertainty: Vec<f64>,
    /// `sum_{k' != k} E|a_kk'|^2`.
    pub interference: Vec<f64>,
}

impl SinrTerms {
    pub fn new(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, eta: &PowerCoefficients, plan: &PilotPlan) -> Self {
        let stats = gain_statistics(beta, gamma, eta, plan);
        let k = beta.ncols();
        let mean_gain = (0..k).map(|ue| (0..beta.nrows()).map(|m| eta.zeta[(m, ue)] * gamma[(m, ue)]).sum()).collect();
        let uncertainty = (0..k).map(|ue| stats.varsigma[(ue, ue)]).collect();
        let interference =
            (0..k).map(|ue| (0..k).filter(|&o| o != ue).map(|o| stats.second_moment[(ue, o)]).sum()).collect();
        Self { mean_gain, uncertainty, interference }
    }

    /// SINR with downlink-estimate variance `kappa[k]`; `kappa = 0` is the
    /// statistical-CSI case.
    pub fn sinr(&self, kappa: &[f64], rho_d: f64) -> Vec<f64> {
        (0..self.mean_gain.len())
            .map(|k| {
                let num = rho_d * (self.mean_gain[k].powi(2) + kappa[k]);
                let den = rho_d * ((self.uncertainty[k] - kappa[k]).max(0.0) + self.interference[k]) + 1.0;
                num / den
            })
            .collect()
    }

    /// SINR with the estimate variance replaced by the full uncertainty.
    pub fn sinr_ub(&self, rho_d: f64) -> Vec<f64> {
        (0..self.mean_gain.len())
            .map(|k| rho_d * (self.mean_gain[k].powi(2) + self.uncertainty[k]) / (rho_d * self.interference[k] + 1.0))
            .collect()
    }

    pub fn sinr_scsi(&self, rho_d: f64) -> Vec<f64> {
        self.sinr(&vec![0.0; self.mean_gain.len()], rho_d)
    }
}

fn to_rate(sinr: Vec<f64>) -> Vec<f64> {
    sinr.into_iter().map(|s| (1.0 + s).log2()).collect()
}

fn check_shapes(inputs: &RateInputs<'_>) -> Result<()> {
    let shape = inputs.beta.shape();
    if inputs.gamma.shape() != shape || inputs.eta.eta.shape() != shape || inputs.plan.num_ues() != shape.1 {
        return Err(Error::Shape(format!(
            "beta {:?}, gamma {:?}, eta {:?}, plan for {} UEs",
            shape,
            inputs.gamma.shape(),
            inputs.eta.eta.shape(),
            inputs.plan.num_ues()
        )));
    }
    Ok(())
}

/// Closed-form approximate rate with downlink beamforming training.
pub fn rate_cf(inputs: &RateInputs<'_>) -> Result<Vec<f64>> {
    check_shapes(inputs)?;
    let moments = downlink_moments(inputs.beta, inputs.gamma, inputs.eta, inputs.plan, inputs.rho_dp)?;
    let terms = SinrTerms::new(inputs.beta, inputs.gamma, inputs.eta, inputs.plan);
    Ok(to_rate(terms.sinr(&moments.kappa, inputs.rho_d)))
}

/// Rate when the UE knows only channel statistics.
pub fn rate_scsi(inputs: &RateInputs<'_>) -> Result<Vec<f64>> {
    check_shapes(inputs)?;
    let terms = SinrTerms::new(inputs.beta, inputs.gamma, inputs.eta, inputs.plan);
    Ok(to_rate(terms.sinr_scsi(inputs.rho_d)))
}

/// Upper bound obtained with a perfect estimate of `a_kk`.
pub fn rate_ub(inputs: &RateInputs<'_>) -> Result<Vec<f64>> {
    check_shapes(inputs)?;
    let terms = SinrTerms::new(inputs.beta, inputs.gamma, inputs.eta, inputs.plan);
    Ok(to_rate(terms.sinr_ub(inputs.rho_d)))
}

/// Monte Carlo rate estimate with batch-means standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRates {
    pub rates: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Trials dropped per UE because the estimate was numerically zero.
    pub excluded: Vec<u64>,
    pub trials: usize,
}

/// Running sums for the use-and-forget bound.
#[derive(Debug, Clone)]
pub struct UnfAccumulator {
    count: Vec<u64>,
    excluded: Vec<u64>,
    ratio: Vec<Complex64>,
    ratio_sq: Vec<f64>,
    cross: Vec<f64>,
    inv_sq: Vec<f64>,
}

impl UnfAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            count: vec![0; k],
            excluded: vec![0; k],
            ratio: vec![Complex64::new(0.0, 0.0); k],
            ratio_sq: vec![0.0; k],
            cross: vec![0.0; k],
            inv_sq: vec![0.0; k],
        }
    }

    /// Adds one realization of the gains `a` and the estimates `a_hat[k]` of `a[k, k]`.
    pub fn push(&mut self, a: &DMatrix<Complex64>, a_hat: &[Complex64]) {
        let k = a.nrows();
        for ue in 0..k {
            let est = a_hat[ue];
            let inv = 1.0 / est.norm_sqr();
            if est.norm() < MIN_ESTIMATE_NORM || !inv.is_finite() {
                self.excluded[ue] += 1;
                continue;
            }
            let r = a[(ue, ue)] / est;
            let cross: f64 = (0..k).filter(|&o| o != ue).map(|o| a[(ue, o)].norm_sqr()).sum::<f64>() * inv;
            if !(r.re.is_finite() && r.im.is_finite() && cross.is_finite()) {
                self.excluded[ue] += 1;
                continue;
            }
            self.count[ue] += 1;
            self.ratio[ue] += r;
            self.ratio_sq[ue] += r.norm_sqr();
            self.cross[ue] += cross;
            self.inv_sq[ue] += inv;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for ue in 0..self.count.len() {
            self.count[ue] += other.count[ue];
            self.excluded[ue] += other.excluded[ue];
            self.ratio[ue] += other.ratio[ue];
            self.ratio_sq[ue] += other.ratio_sq[ue];
            self.cross[ue] += other.cross[ue];
            self.inv_sq[ue] += other.inv_sq[ue];
        }
    }

    pub fn rates(&self, rho_d: f64) -> Vec<f64> {
        (0..self.count.len())
            .map(|ue| {
                let n = self.count[ue] as f64;
                if n == 0.0 || rho_d <= 0.0 {
                    return 0.0;
                }
                let mean = self.ratio[ue] / n;
                let var = (self.ratio_sq[ue] / n - mean.norm_sqr()).max(0.0);
                let den = var + self.cross[ue] / n + self.inv_sq[ue] / n / rho_d;
                (1.0 + mean.norm_sqr() / den).log2()
            })
            .collect()
    }
}

fn batch_sizes(trials: usize) -> Vec<usize> {
    let nb = trials.clamp(1, MAX_BATCHES);
    (0..nb).map(|b| trials / nb + usize::from(b < trials % nb)).collect()
}

fn batch_std_err(per_batch: &[Vec<f64>], k: usize) -> Vec<f64> {
    let nb = per_batch.len();
    if nb < 2 {
        return vec![f64::NAN; k];
    }
    (0..k)
        .map(|ue| {
            let mean = per_batch.iter().map(|r| r[ue]).sum::<f64>() / nb as f64;
            let var = per_batch.iter().map(|r| (r[ue] - mean).powi(2)).sum::<f64>() / (nb - 1) as f64;
            (var / nb as f64).sqrt()
        })
        .collect()
}

/// Use-and-forget rate by Monte Carlo over fading and pilot noise.
///
/// Batches draw from independent substreams of `seed`, so the result does
/// not depend on the thread schedule.
pub fn rate_unf_mc(inputs: &RateInputs<'_>, trials: usize, seed: u64) -> Result<McRates> {
    if trials == 0 {
        return Err(Error::InvalidConfig("Monte Carlo trials must be at least 1".into()));
    }
    check_shapes(inputs)?;
    let k = inputs.beta.ncols();
    let sampler = LinkSampler::new(inputs.beta, inputs.plan, inputs.eta, inputs.rho_up, inputs.rho_dp)?;
    let batches: Vec<UnfAccumulator> = batch_sizes(trials)
        .into_par_iter()
        .enumerate()
        .map(|(b, n)| {
            let mut rng = substream(seed, &[tag::UNF, b as u64]);
            let mut acc = UnfAccumulator::new(k);
            for _ in 0..n {
                let link = sampler.draw(&mut rng);
                acc.push(&link.a, link.a_hat.as_slice());
            }
            acc
        })
        .collect();
    let mut total = UnfAccumulator::new(k);
    for b in &batches {
        total.merge(b);
    }
    let per_batch: Vec<Vec<f64>> = batches.iter().map(|b| b.rates(inputs.rho_d)).collect();
    Ok(McRates {
        rates: total.rates(inputs.rho_d),
        std_err: batch_std_err(&per_batch, k),
        excluded: total.excluded,
        trials,
    })
}

/// Penalty term of the non-coherent bound,
/// `(1/tau_dd) sum_k' log2(1 + tau_dd rho_d var(a_kk'))`.
pub fn noncoherent_penalty(varsigma: &DMatrix<f64>, tau_dd: usize, rho_d: f64) -> Vec<f64> {
    let t = tau_dd as f64;
    (0..varsigma.nrows())
        .map(|k| varsigma.row(k).iter().map(|v| (1.0 + t * rho_d * v).log2()).sum::<f64>() / t)
        .collect()
}

/// Lower bound for non-coherent detection over `tau_dd` downlink data
/// symbols. May be negative.
pub fn rate_noncoherent_lb(inputs: &RateInputs<'_>, tau_dd: usize, trials: usize, seed: u64) -> Result<McRates> {
    if tau_dd == 0 {
        return Err(Error::InvalidConfig("downlink data length must be at least 1".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("Monte Carlo trials must be at least 1".into()));
    }
    check_shapes(inputs)?;
    let k = inputs.beta.ncols();
    let rho = inputs.rho_d;
    let sampler = LinkSampler::new(inputs.beta, inputs.plan, inputs.eta, inputs.rho_up, inputs.rho_dp)?;
    let sizes = batch_sizes(trials);
    let sums: Vec<Vec<f64>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &n)| {
            let mut rng = substream(seed, &[tag::NONCOHERENT, b as u64]);
            let mut sum = vec![0.0; k];
            for _ in 0..n {
                let a = sampler.draw_gains(&mut rng);
                for (ue, s) in sum.iter_mut().enumerate() {
                    let own = a[(ue, ue)].norm_sqr();
                    let other: f64 = (0..k).filter(|&o| o != ue).map(|o| a[(ue, o)].norm_sqr()).sum();
                    *s += (1.0 + rho * own / (rho * other + 1.0)).log2();
                }
            }
            sum
        })
        .collect();
    let penalty = noncoherent_penalty(&sampler.moments.varsigma, tau_dd, rho);
    let per_batch: Vec<Vec<f64>> = sums
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s.iter().zip(&penalty).map(|(v, p)| v / n as f64 - p).collect())
        .collect();
    let rates = (0..k).map(|ue| sums.iter().map(|s| s[ue]).sum::<f64>() / trials as f64 - penalty[ue]).collect();
    Ok(McRates { rates, std_err: batch_std_err(&per_batch, k), excluded: vec![0; k], trials })
}

/// Pilot symbols per coherence interval. With downlink training the
/// overhead counts both uplink and downlink pilots.
pub fn pilot_overhead(config: &ScenarioConfig, with_dl_training: bool) -> usize {
    config.ul_pilot_len + if with_dl_training { config.dl_pilot_len } else { 0 }
}

/// Scales gross rates by the downlink data fraction and pilot overhead.
pub fn net_rate_with_overhead(gross: &[f64], config: &ScenarioConfig, overhead: usize) -> Result<Vec<f64>> {
    if overhead >= config.coherence_length {
        return Err(Error::OverheadTooLarge { overhead, coherence: config.coherence_length });
    }
    let factor = config.dl_data_fraction * (1.0 - overhead as f64 / config.coherence_length as f64);
    Ok(gross.iter().map(|r| factor * r).collect())
}

pub fn net_rate(gross: &[f64], config: &ScenarioConfig, with_dl_training: bool) -> Result<Vec<f64>> {
    net_rate_with_overhead(gross, config, pilot_overhead(config, with_dl_training))
}
