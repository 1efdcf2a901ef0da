//! Network geometry, large-scale fading and small-scale Rayleigh fading.
//!
//! APs and UEs are dropped uniformly on a `D x D` km square with wrap-around
//! (torus) distances. Large-scale fading is a three-slope path loss plus
//! log-normal shadowing that is either i.i.d. or spatially correlated through
//! a two-component (AP-side + UE-side) Gaussian field.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const NOISE_TEMPERATURE_K: f64 = 290.0;
/// Diagonal loading added before factoring a shadow-field covariance.
pub const COVARIANCE_JITTER: f64 = 1e-10;

/// Constants of the three-slope path-loss model.
///
/// The fixed loss `L` follows the Hata-COST231 expression at the scenario
/// carrier frequency unless `fixed_loss_db` overrides it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    pub d0_km: f64,
    pub d1_km: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub fixed_loss_db: Option<f64>,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { d0_km: 0.01, d1_km: 0.05, ap_height_m: 15.0, ue_height_m: 1.65, fixed_loss_db: None }
    }
}

/// Resolved three-slope model: knees `d0 < d1` (km) and fixed loss `L` (dB).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeSlope {
    pub d0_km: f64,
    pub d1_km: f64,
    pub fixed_loss_db: f64,
}

impl ThreeSlope {
    pub fn new(params: &PathLossParams, carrier_freq_ghz: f64) -> Self {
        let fixed_loss_db = params
            .fixed_loss_db
            .unwrap_or_else(|| hata_cost231_loss_db(carrier_freq_ghz * 1e3, params.ap_height_m, params.ue_height_m));
        Self { d0_km: params.d0_km, d1_km: params.d1_km, fixed_loss_db }
    }
}

/// Hata-COST231 fixed loss in dB; frequency in MHz, heights in metres.
pub fn hata_cost231_loss_db(freq_mhz: f64, ap_height_m: f64, ue_height_m: f64) -> f64 {
    let lf = freq_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * ap_height_m.log10() - (1.1 * lf - 0.7) * ue_height_m + (1.56 * lf - 0.8)
}

/// All physical and protocol parameters of one simulated deployment.
///
/// Field names double as the keys of the `[scenario]` table in configuration
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_side_km: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub carrier_freq_ghz: f64,
    pub coherence_length: usize,
    pub dl_data_fraction: f64,
    pub ul_pilot_len: usize,
    pub dl_pilot_len: usize,
    pub dl_radiated_power_w: f64,
    pub ul_radiated_power_w: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub shadowing_std_db: f64,
    pub shadowing_correlated: bool,
    pub decorr_distance_km: f64,
    pub shadowing_split: f64,
    /// Apply shadowing only beyond the outer knee `d1`.
    pub shadowing_beyond_d1_only: bool,
    pub wrap_around: bool,
    pub pathloss_params: PathLossParams,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            area_side_km: 1.0,
            num_aps: 100,
            num_ues: 20,
            carrier_freq_ghz: 2.0,
            coherence_length: 200,
            dl_data_fraction: 0.5,
            ul_pilot_len: 10,
            dl_pilot_len: 10,
            dl_radiated_power_w: 0.2,
            ul_radiated_power_w: 0.1,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            shadowing_std_db: 8.0,
            shadowing_correlated: false,
            decorr_distance_km: 0.1,
            shadowing_split: 0.5,
            shadowing_beyond_d1_only: true,
            wrap_around: true,
            pathloss_params: PathLossParams::default(),
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_aps <= self.num_ues {
            return bad(format!("need more APs than UEs (M={}, K={})", self.num_aps, self.num_ues));
        }
        if self.num_ues == 0 {
            return bad("at least one UE is required".into());
        }
        if self.ul_pilot_len == 0 || self.dl_pilot_len == 0 {
            return bad("pilot lengths must be at least 1".into());
        }
        if self.ul_pilot_len + self.dl_pilot_len >= self.coherence_length {
            return bad(format!(
                "pilots ({} + {}) do not fit in the coherence interval {}",
                self.ul_pilot_len, self.dl_pilot_len, self.coherence_length
            ));
        }
        if self.ul_pilot_len * self.dl_pilot_len < self.num_ues {
            return bad(format!(
                "{} x {} pilot pairs cannot serve {} UEs",
                self.ul_pilot_len, self.dl_pilot_len, self.num_ues
            ));
        }
        let positive = [
            ("area_side_km", self.area_side_km),
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("dl_radiated_power_w", self.dl_radiated_power_w),
            ("ul_radiated_power_w", self.ul_radiated_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("decorr_distance_km", self.decorr_distance_km),
            ("pathloss_params.d0_km", self.pathloss_params.d0_km),
            ("pathloss_params.ap_height_m", self.pathloss_params.ap_height_m),
            ("pathloss_params.ue_height_m", self.pathloss_params.ue_height_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.pathloss_params.d1_km <= self.pathloss_params.d0_km {
            return bad("pathloss_params.d1_km must exceed d0_km".into());
        }
        if !(0.0..=1.0).contains(&self.dl_data_fraction) {
            return bad(format!("dl_data_fraction {} outside [0, 1]", self.dl_data_fraction));
        }
        if !(0.0..=1.0).contains(&self.shadowing_split) {
            return bad(format!("shadowing_split {} outside [0, 1]", self.shadowing_split));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return bad("shadowing_std_db must be non-negative".into());
        }
        Ok(())
    }

    pub fn three_slope(&self) -> ThreeSlope {
        ThreeSlope::new(&self.pathloss_params, self.carrier_freq_ghz)
    }

    /// Normalized downlink data SNR.
    pub fn rho_d(&self) -> f64 {
        snr_normalize(self.dl_radiated_power_w, self)
    }

    /// Normalized downlink pilot SNR (pilots use the data power budget).
    pub fn rho_dp(&self) -> f64 {
        self.rho_d()
    }

    /// Normalized uplink pilot SNR.
    pub fn rho_up(&self) -> f64 {
        snr_normalize(self.ul_radiated_power_w, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleState {
    /// Linear-scale gains, APs along rows and UEs along columns.
    pub beta: DMatrix<f64>,
    pub shadow_db: DMatrix<f64>,
}

/// Drops `M` APs and `K` UEs uniformly on `[0, D)^2`.
pub fn place_uniform<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Placement {
    let d = config.area_side_km;
    let point = |rng: &mut R| [rng.random_range(0.0..d), rng.random_range(0.0..d)];
    let ap_positions = (0..config.num_aps).map(|_| point(rng)).collect();
    let ue_positions = (0..config.num_ues).map(|_| point(rng)).collect();
    Placement { ap_positions, ue_positions }
}

/// Torus distance on a square of side `side`.
pub fn wrap_distance(p: [f64; 2], q: [f64; 2], side: f64) -> f64 {
    let wrap = |delta: f64| {
        let a = delta.abs();
        a.min(side - a)
    };
    wrap(p[0] - q[0]).hypot(wrap(p[1] - q[1]))
}

fn distance(p: [f64; 2], q: [f64; 2], config: &ScenarioConfig) -> f64 {
    if config.wrap_around {
        wrap_distance(p, q, config.area_side_km)
    } else {
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

/// AP-by-UE distance matrix in km.
pub fn distances(placement: &Placement, config: &ScenarioConfig) -> DMatrix<f64> {
    let m = placement.ap_positions.len();
    let k = placement.ue_positions.len();
    DMatrix::from_fn(m, k, |i, j| distance(placement.ap_positions[i], placement.ue_positions[j], config))
}

/// Three-slope path loss (dB, negative) at distance `d` km.
pub fn path_loss_db(d: f64, model: &ThreeSlope) -> f64 {
    let ThreeSlope { d0_km, d1_km, fixed_loss_db: l } = *model;
    if d > d1_km {
        -l - 35.0 * d.log10()
    } else if d > d0_km {
        -l - 15.0 * d1_km.log10() - 20.0 * d.log10()
    } else {
        -l - 15.0 * d1_km.log10() - 20.0 * d0_km.log10()
    }
}

/// Lower Cholesky factor of `exp(-dist / d_decorr)` over a point set.
fn field_factor(points: &[[f64; 2]], config: &ScenarioConfig, which: &'static str) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut cov =
        DMatrix::from_fn(n, n, |i, j| (-distance(points[i], points[j], config) / config.decorr_distance_km).exp());
    for i in 0..n {
        cov[(i, i)] += COVARIANCE_JITTER;
    }
    let chol = cov.cholesky().ok_or(Error::DegenerateCovariance(which))?;
    Ok(chol.l())
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Shadow-fading draws in dB.
///
/// Uncorrelated: i.i.d. `N(0, sigma^2)`. Correlated: `sigma * (sqrt(delta) a_m
/// + sqrt(1 - delta) b_k)` with unit-variance exponential-covariance fields
/// `a` over APs and `b` over UEs.
pub fn shadowing<R: Rng + ?Sized>(placement: &Placement, config: &ScenarioConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    let m = placement.ap_positions.len();
    let k = placement.ue_positions.len();
    let sigma = config.shadowing_std_db;
    let mut z = if config.shadowing_correlated {
        let la = field_factor(&placement.ap_positions, config, "AP field")?;
        let lb = field_factor(&placement.ue_positions, config, "UE field")?;
        let a = la * gaussian_vector(m, rng);
        let b = lb * gaussian_vector(k, rng);
        let (wa, wb) = (config.shadowing_split.sqrt(), (1.0 - config.shadowing_split).sqrt());
        DMatrix::from_fn(m, k, |i, j| wa * a[i] + wb * b[j])
    } else {
        DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    z *= sigma;
    if config.shadowing_beyond_d1_only {
        let d1 = config.pathloss_params.d1_km;
        let dist = distances(placement, config);
        z.zip_apply(&dist, |s, d| {
            if d <= d1 {
                *s = 0.0;
            }
        });
    }
    Ok(z)
}

/// Combines path loss at the (wrapped) AP-UE distances with given shadowing.
pub fn beta_from_shadowing(placement: &Placement, shadow_db: &DMatrix<f64>, config: &ScenarioConfig) -> DMatrix<f64> {
    let model = config.three_slope();
    let dist = distances(placement, config);
    dist.zip_map(shadow_db, |d, s| 10f64.powf((path_loss_db(d, &model) + s) / 10.0))
}

pub fn large_scale<R: Rng + ?Sized>(
    placement: &Placement,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<LargeScaleState> {
    let shadow_db = shadowing(placement, config, rng)?;
    let beta = beta_from_shadowing(placement, &shadow_db, config);
    Ok(LargeScaleState { beta, shadow_db })
}

/// Draws one `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `M x K` matrix of i.i.d. `CN(0, 1)` small-scale fading coefficients.
pub fn draw_small_scale<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(m, k, |_, _| complex_normal(rng))
}

/// Channel realization `g = sqrt(beta) h`.
pub fn draw_channel<R: Rng + ?Sized>(beta: &DMatrix<f64>, rng: &mut R) -> DMatrix<Complex64> {
    let h = draw_small_scale(beta.nrows(), beta.ncols(), rng);
    h.zip_map(beta, |h, b| h * b.sqrt())
}

/// Transmit SNR normalized by the thermal noise power over the bandwidth.
pub fn snr_normalize(radiated_power_w: f64, config: &ScenarioConfig) -> f64 {
    let noise_w = config.bandwidth_hz * BOLTZMANN * NOISE_TEMPERATURE_K * 10f64.powf(config.noise_figure_db / 10.0);
    radiated_power_w / noise_w
}
