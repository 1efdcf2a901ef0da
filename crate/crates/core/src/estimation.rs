//! Channel estimation on both ends of the link.
//!
//! APs estimate their uplink channels from projected pilots with a linear
//! MMSE filter. After beamforming downlink pilots with those estimates, each
//! UE estimates its effective gain `a_kk` with a second linear MMSE filter
//! whose moments are available in closed form when co-uplink-pilot UEs hold
//! orthogonal downlink pilots.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::complex_normal;
use crate::pilots::{validate_plan, PilotPlan};
use crate::power::PowerCoefficients;

/// Lower bound applied to `var(y_dp)` before dividing by it.
pub const VARIANCE_FLOOR: f64 = 1e-30;

/// Uplink estimation statistics plus one draw of the estimates.
#[derive(Debug, Clone)]
pub struct UplinkEstimate {
    pub c: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub g_hat: DMatrix<Complex64>,
}

/// Projects each AP's received uplink pilot block onto every UE's pilot.
///
/// Noise is drawn once per (AP, pilot sequence), so UEs sharing an uplink
/// pilot see the same projected noise.
pub fn uplink_receive_project<R: Rng + ?Sized>(
    g: &DMatrix<Complex64>,
    plan: &PilotPlan,
    rho_up: f64,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let (m, k) = g.shape();
    let tau = plan.ul_len();
    let amp = (tau as f64 * rho_up).sqrt();
    // w_m in C^tau for each AP; projection phi_k^H w_m.
    let noise = DMatrix::from_fn(m, tau, |_, _| complex_normal(rng));
    let mut y = DMatrix::zeros(m, k);
    for ue in 0..k {
        let phi = plan.ul_book.sequence(plan.ul_index[ue]);
        for ap in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..tau {
                acc += noise[(ap, t)] * phi[t];
            }
            for other in 0..k {
                let w = plan.ul_inner(ue, other);
                if w != 0.0 {
                    acc += g[(ap, other)] * (amp * w);
                }
            }
            y[(ap, ue)] = acc;
        }
    }
    y
}

/// MMSE coefficients `c` and estimate mean-squares `gamma`.
pub fn mmse_uplink(beta: &DMatrix<f64>, plan: &PilotPlan, rho_up: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, k) = beta.shape();
    let tr = plan.ul_len() as f64 * rho_up;
    let overlap = plan.ul_overlap();
    let mut c = DMatrix::zeros(m, k);
    let mut gamma = DMatrix::zeros(m, k);
    for ue in 0..k {
        for ap in 0..m {
            let received: f64 = (0..k).map(|o| beta[(ap, o)] * overlap[(ue, o)]).sum();
            let cm = tr.sqrt() * beta[(ap, ue)] / (tr * received + 1.0);
            c[(ap, ue)] = cm;
            gamma[(ap, ue)] = tr.sqrt() * beta[(ap, ue)] * cm;
        }
    }
    (c, gamma)
}

pub fn estimate_uplink(y_up: &DMatrix<Complex64>, c: &DMatrix<f64>) -> DMatrix<Complex64> {
    y_up.zip_map(c, |y, c| y * c)
}

/// Effective gains `a[k, k'] = sum_m sqrt(eta[m, k']) g[m, k] conj(g_hat[m, k'])`.
pub fn effective_gains(
    g: &DMatrix<Complex64>,
    g_hat: &DMatrix<Complex64>,
    eta: &PowerCoefficients,
) -> DMatrix<Complex64> {
    let (m, k) = g.shape();
    // precoder columns sqrt(eta) conj(g_hat)
    let w = DMatrix::from_fn(m, k, |ap, ue| g_hat[(ap, ue)].conj() * eta.zeta[(ap, ue)]);
    g.transpose() * w
}

/// Projects each UE's received downlink pilot block onto its own pilot.
pub fn downlink_receive_project<R: Rng + ?Sized>(
    a: &DMatrix<Complex64>,
    plan: &PilotPlan,
    rho_dp: f64,
    rng: &mut R,
) -> DVector<Complex64> {
    let k = a.nrows();
    let amp = (plan.dl_len() as f64 * rho_dp).sqrt();
    DVector::from_fn(k, |ue, _| {
        let mut acc = complex_normal(rng);
        for other in 0..k {
            let w = plan.dl_inner(ue, other);
            if w != 0.0 {
                acc += a[(ue, other)] * (amp * w);
            }
        }
        acc
    })
}

/// `varsigma[k, k'] = sum_m eta[m, k'] beta[m, k] gamma[m, k']`, the variance
/// of `a[k, k']`.
pub fn varsigma(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, eta: &PowerCoefficients) -> DMatrix<f64> {
    let weighted = eta.eta.component_mul(gamma);
    beta.transpose() * weighted
}

/// First and second moments of every effective gain `a[k, k']`.
#[derive(Debug, Clone)]
pub struct GainStatistics {
    /// `E[a[k, k']]`.
    pub mean: DMatrix<f64>,
    /// `E[|a[k, k']|^2]`.
    pub second_moment: DMatrix<f64>,
    pub varsigma: DMatrix<f64>,
}

pub fn gain_statistics(
    beta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    eta: &PowerCoefficients,
    plan: &PilotPlan,
) -> GainStatistics {
    let (m, k) = beta.shape();
    let vs = varsigma(beta, gamma, eta);
    let mut mean = DMatrix::zeros(k, k);
    for ue in 0..k {
        for other in 0..k {
            let w = plan.ul_inner(ue, other);
            if w == 0.0 {
                continue;
            }
            let s: f64 = (0..m)
                .filter(|&ap| beta[(ap, other)] > 0.0)
                .map(|ap| eta.zeta[(ap, other)] * gamma[(ap, other)] * beta[(ap, ue)] / beta[(ap, other)])
                .sum();
            mean[(ue, other)] = w * s;
        }
    }
    let second_moment = DMatrix::from_fn(k, k, |i, j| mean[(i, j)].powi(2) + vs[(i, j)]);
    GainStatistics { mean, second_moment, varsigma: vs }
}

/// Closed-form statistics of the downlink pilot observation and of the
/// linear MMSE estimate of `a_kk`.
#[derive(Debug, Clone)]
pub struct DownlinkMoments {
    /// `E[a_kk]`.
    pub mean_a: Vec<f64>,
    /// `cov(a_kk, y_dp,k)`.
    pub cov_ay: Vec<f64>,
    /// `var(y_dp,k)`.
    pub var_y: Vec<f64>,
    /// `E[y_dp,k]`.
    pub mean_y: Vec<f64>,
    /// Variance of the estimate of `a_kk`.
    pub kappa: Vec<f64>,
    pub varsigma: DMatrix<f64>,
}

pub fn downlink_moments(
    beta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    eta: &PowerCoefficients,
    plan: &PilotPlan,
    rho_dp: f64,
) -> Result<DownlinkMoments> {
    if !validate_plan(plan) {
        return Err(Error::InvalidPilotPlan);
    }
    let (m, k) = beta.shape();
    if gamma.shape() != (m, k) || eta.eta.shape() != (m, k) || plan.num_ues() != k {
        return Err(Error::Shape(format!(
            "beta {:?}, gamma {:?}, eta {:?}, plan for {} UEs",
            beta.shape(),
            gamma.shape(),
            eta.eta.shape(),
            plan.num_ues()
        )));
    }
    let tr = plan.dl_len() as f64 * rho_dp;
    let vs = varsigma(beta, gamma, eta);
    let dl = plan.dl_overlap();
    let mut out = DownlinkMoments {
        mean_a: Vec::with_capacity(k),
        cov_ay: Vec::with_capacity(k),
        var_y: Vec::with_capacity(k),
        mean_y: Vec::with_capacity(k),
        kappa: Vec::with_capacity(k),
        varsigma: vs.clone(),
    };
    for ue in 0..k {
        let mean_a: f64 = (0..m).map(|ap| eta.zeta[(ap, ue)] * gamma[(ap, ue)]).sum();
        let leak: f64 = (0..k).map(|o| vs[(ue, o)] * dl[(ue, o)]).sum();
        let cov = tr.sqrt() * vs[(ue, ue)];
        let var_y = 1.0 + tr * leak;
        out.mean_a.push(mean_a);
        out.cov_ay.push(cov);
        out.var_y.push(var_y);
        out.mean_y.push(tr.sqrt() * mean_a);
        out.kappa.push(tr * vs[(ue, ue)].powi(2) / var_y.max(VARIANCE_FLOOR));
    }
    Ok(out)
}

/// Linear MMSE estimate of each `a_kk` from its projected downlink pilot.
pub fn estimate_a(y_dp: &DVector<Complex64>, moments: &DownlinkMoments) -> DVector<Complex64> {
    DVector::from_fn(y_dp.len(), |k, _| {
        let gain = moments.cov_ay[k] / moments.var_y[k].max(VARIANCE_FLOOR);
        Complex64::new(moments.mean_a[k], 0.0) + (y_dp[k] - moments.mean_y[k]) * gain
    })
}

/// One full small-scale realization: channel, uplink estimates, effective
/// gains and the UE-side estimates of `a_kk`.
#[derive(Debug, Clone)]
pub struct LinkRealization {
    pub g: DMatrix<Complex64>,
    pub g_hat: DMatrix<Complex64>,
    pub a: DMatrix<Complex64>,
    pub y_dp: DVector<Complex64>,
    pub a_hat: DVector<Complex64>,
}

/// Precomputed statistics for drawing realizations of the whole chain.
#[derive(Debug, Clone)]
pub struct LinkSampler<'a> {
    pub beta: &'a DMatrix<f64>,
    pub plan: &'a PilotPlan,
    pub eta: &'a PowerCoefficients,
    pub rho_up: f64,
    pub rho_dp: f64,
    pub c: DMatrix<f64>,
    pub moments: DownlinkMoments,
}

impl<'a> LinkSampler<'a> {
    pub fn new(
        beta: &'a DMatrix<f64>,
        plan: &'a PilotPlan,
        eta: &'a PowerCoefficients,
        rho_up: f64,
        rho_dp: f64,
    ) -> Result<Self> {
        let (c, gamma) = mmse_uplink(beta, plan, rho_up);
        let moments = downlink_moments(beta, &gamma, eta, plan, rho_dp)?;
        Ok(Self { beta, plan, eta, rho_up, rho_dp, c, moments })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LinkRealization {
        let g = crate::geometry::draw_channel(self.beta, rng);
        let y_up = uplink_receive_project(&g, self.plan, self.rho_up, rng);
        let g_hat = estimate_uplink(&y_up, &self.c);
        let a = effective_gains(&g, &g_hat, self.eta);
        let y_dp = downlink_receive_project(&a, self.plan, self.rho_dp, rng);
        let a_hat = estimate_a(&y_dp, &self.moments);
        LinkRealization { g, g_hat, a, y_dp, a_hat }
    }

    /// Draws only the effective gains, skipping downlink training.
    pub fn draw_gains<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<Complex64> {
        let g = crate::geometry::draw_channel(self.beta, rng);
        let y_up = uplink_receive_project(&g, self.plan, self.rho_up, rng);
        let g_hat = estimate_uplink(&y_up, &self.c);
        effective_gains(&g, &g_hat, self.eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilots::PilotPlan;
    use crate::rng::substream;

    fn flat(m: usize, k: usize, v: f64) -> DMatrix<f64> {
        DMatrix::from_element(m, k, v)
    }

    #[test]
    fn single_ue_mmse() {
        let plan = PilotPlan::orthogonal(1);
        let (c, gamma) = mmse_uplink(&flat(1, 1, 1.0), &plan, 1.0);
        assert!((c[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((gamma[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_gives_zero_gamma() {
        let plan = PilotPlan::orthogonal(2);
        let beta = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let (_, gamma) = mmse_uplink(&beta, &plan, 3.0);
        assert_eq!(gamma[(0, 0)], 0.0);
    }

    #[test]
    fn copilot_mmse_hand_value() {
        // tau*rho = 4 (tau = 1, rho = 4), beta = (1, 2) on one shared pilot:
        // c_1 = 2*1/(4*3 + 1) = 2/13, gamma_1 = 2*1*2/13 = 4/13
        let plan = PilotPlan::new(1, 2, &[(0, 0), (0, 1)]);
        let beta = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let (c, gamma) = mmse_uplink(&beta, &plan, 4.0);
        assert!((c[(0, 0)] - 2.0 / 13.0).abs() < 1e-15);
        assert!((gamma[(0, 0)] - 4.0 / 13.0).abs() < 1e-15);
        assert!((gamma[(0, 1)] - 16.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_bounded_by_beta_and_consistent_with_c() {
        let plan = PilotPlan::new(2, 2, &[(0, 0), (0, 1), (1, 0)]);
        let beta = DMatrix::from_fn(5, 3, |m, k| 0.1 + (m as f64) * 0.7 + k as f64);
        let rho = 2.5;
        let (c, gamma) = mmse_uplink(&beta, &plan, rho);
        for (i, g) in gamma.iter().enumerate() {
            assert!(*g >= 0.0 && *g <= beta[i]);
            assert!((g - (2.0 * rho).sqrt() * beta[i] * c[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn noiseless_orthogonal_projection_recovers_channel() {
        let plan = PilotPlan::orthogonal(3);
        let beta = flat(4, 3, 1.0);
        let mut rng = substream(1, &[]);
        let g = crate::geometry::draw_channel(&beta, &mut rng);
        let rho = 1e20;
        let y = uplink_receive_project(&g, &plan, rho, &mut rng);
        let scaled = y.map(|v| v / (3.0 * rho).sqrt());
        assert!((scaled - &g).iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn shared_pilot_gives_identical_projections() {
        let plan = PilotPlan::new(1, 2, &[(0, 0), (0, 1)]);
        let beta = flat(3, 2, 1.0);
        let mut rng = substream(2, &[]);
        let g = crate::geometry::draw_channel(&beta, &mut rng);
        let y = uplink_receive_project(&g, &plan, 5.0, &mut rng);
        assert_eq!(y.column(0), y.column(1));
    }

    #[test]
    fn zero_c_or_eta_give_zero_outputs() {
        let y = DMatrix::from_element(2, 2, Complex64::new(1.0, -2.0));
        assert!(estimate_uplink(&y, &flat(2, 2, 0.0)).iter().all(|z| z.norm() == 0.0));
        let eta = PowerCoefficients::zeros(2, 2);
        assert!(effective_gains(&y, &y, &eta).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn orthogonal_downlink_pilots_carry_no_contamination() {
        let plan = PilotPlan::orthogonal(2);
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(7.0, 3.0), Complex64::new(-5.0, 2.0), Complex64::new(2.0, 0.0)],
        );
        let rho = 1e20;
        let y = downlink_receive_project(&a, &plan, rho, &mut substream(3, &[]));
        let scale = (2.0 * rho).sqrt();
        assert!((y[0] / scale - a[(0, 0)]).norm() < 1e-9);
        assert!((y[1] / scale - a[(1, 1)]).norm() < 1e-9);
    }

    #[test]
    fn zero_pilot_power_gives_unit_noise() {
        let plan = PilotPlan::orthogonal(1);
        let a = DMatrix::from_element(1, 1, Complex64::new(3.0, 0.0));
        let mut rng = substream(4, &[]);
        let n = 100_000;
        let p: f64 =
            (0..n).map(|_| downlink_receive_project(&a, &plan, 0.0, &mut rng)[0].norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn kappa_hand_values() {
        // M = K = 1, eta = 2, gamma = 0.5, beta = 1 -> varsigma = 1.
        let plan = PilotPlan::orthogonal(1);
        let beta = flat(1, 1, 1.0);
        let gamma = flat(1, 1, 0.5);
        let eta = PowerCoefficients::from_eta(flat(1, 1, 2.0));
        let mom = downlink_moments(&beta, &gamma, &eta, &plan, 1.0).unwrap();
        assert!((mom.varsigma[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((mom.kappa[0] - 0.5).abs() < 1e-15);
        let silent = downlink_moments(&beta, &gamma, &eta, &plan, 0.0).unwrap();
        assert_eq!(silent.kappa[0], 0.0);
    }

    #[test]
    fn kappa_approaches_varsigma_with_strong_training() {
        // tau*rho*varsigma = 100 gives kappa/varsigma = 100/101.
        let plan = PilotPlan::orthogonal(1);
        let eta = PowerCoefficients::from_eta(flat(1, 1, 2.0));
        let mom = downlink_moments(&flat(1, 1, 1.0), &flat(1, 1, 0.5), &eta, &plan, 100.0).unwrap();
        assert!((mom.kappa[0] / mom.varsigma[(0, 0)] - 1.0).abs() < 0.01);
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let plan = PilotPlan::new(1, 1, &[(0, 0), (0, 0)]);
        let eta = PowerCoefficients::from_eta(flat(2, 2, 1.0));
        let err = downlink_moments(&flat(2, 2, 1.0), &flat(2, 2, 0.5), &eta, &plan, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidPilotPlan));
    }

    #[test]
    fn estimate_at_mean_observation_is_mean_gain() {
        let plan = PilotPlan::orthogonal(2);
        let beta = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 2.0]);
        let (_, gamma) = mmse_uplink(&beta, &plan, 3.0);
        let eta = crate::power::cd_fpt(&gamma).unwrap();
        let mom = downlink_moments(&beta, &gamma, &eta, &plan, 3.0).unwrap();
        let y = DVector::from_iterator(2, mom.mean_y.iter().map(|&v| Complex64::new(v, 0.0)));
        let a_hat = estimate_a(&y, &mom);
        for k in 0..2 {
            assert!((a_hat[k].re - mom.mean_a[k]).abs() < 1e-12 && a_hat[k].im.abs() < 1e-12);
            assert!(mom.kappa[k] >= 0.0 && mom.kappa[k] <= mom.varsigma[(k, k)]);
        }
    }
}
