//! Acceptance checks. Each criterion prints one PASS or FAIL line and the
//! process exits non-zero if any fails. Criterion numbers given as
//! arguments select a subset: `cargo test --test acceptance -- 1 3`.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use cellfree::estimation::{downlink_moments, gain_statistics, mmse_uplink, LinkRealization, LinkSampler};
use cellfree::harness::{compare_pc, compare_training, prepare_channels, ExperimentSpec, PowerPolicy};
use cellfree::pilots::{
    advanced_greedy_assign, baseline_assign, greedy_assign, AssignmentContext, PairPool, PilotPlan, PowerRule,
};
use cellfree::power::{bisection_maxmin, cd_fpt, FeasibilityData, PowerCoefficients, ScaSettings};
use cellfree::rates::{rate_cf, rate_scsi, rate_ub, RateInputs};
use cellfree::rng::{substream, Stream};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn random_beta(rng: &mut Stream, m: usize, k: usize, lo_exp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |_, _| 10f64.powf(rng.random_range(lo_exp..0.0)))
}

/// Random feasible power: random shares per AP, scaled to a random fraction
/// of the budget.
fn random_eta(rng: &mut Stream, gamma: &DMatrix<f64>) -> PowerCoefficients {
    let (m, k) = gamma.shape();
    let mut eta = DMatrix::zeros(m, k);
    for ap in 0..m {
        let u: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let load: f64 = (0..k).map(|ue| u[ue] * gamma[(ap, ue)]).sum();
        let spend = rng.random_range(0.5..1.0);
        for ue in 0..k {
            eta[(ap, ue)] = spend * u[ue] / load;
        }
    }
    PowerCoefficients::from_eta(eta)
}

fn random_plan(rng: &mut Stream, k: usize) -> PilotPlan {
    let ul = rng.random_range(1..=2usize);
    let dl = k.div_ceil(ul).max(2);
    baseline_assign(&PairPool::new(ul, dl), k, rng).unwrap()
}

/// Mean of `samples` against `expect` in standard errors.
fn z_score(samples: &[f64], expect: f64) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    if se == 0.0 {
        if (mean - expect).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (mean - expect).abs() / se
    }
}

/// Distance in standard errors between each closed-form moment and its
/// Monte Carlo estimate, for one random instance and one draw stream.
fn moment_z_scores(inst: u64, stream: u64) -> Vec<f64> {
    const DRAWS: usize = 100_000;
    let mut rng = substream(101, &[inst]);
    let m = rng.random_range(4..=20);
    let k = rng.random_range(2..=4);
    let plan = random_plan(&mut rng, k);
    let beta = random_beta(&mut rng, m, k, -1.5);
    let rho_up = rng.random_range(1.0..10.0);
    let rho_dp = rng.random_range(1.0..10.0);
    let (_, gamma) = mmse_uplink(&beta, &plan, rho_up);
    let eta = random_eta(&mut rng, &gamma);
    let stats = gain_statistics(&beta, &gamma, &eta, &plan);
    let sampler = LinkSampler::new(&beta, &plan, &eta, rho_up, rho_dp).unwrap();
    let mom = &sampler.moments;
    let mut draw_rng = substream(101, &[inst, stream]);
    let draws: Vec<LinkRealization> = (0..DRAWS).map(|_| sampler.draw(&mut draw_rng)).collect();
    let mut z = Vec::new();
    let mut check = |f: &dyn Fn(&LinkRealization) -> f64, expect: f64| {
        z.push(z_score(&draws.iter().map(f).collect::<Vec<_>>(), expect));
    };
    for i in 0..k {
        for j in 0..k {
            let mu = stats.mean[(i, j)];
            check(&|d| d.a[(i, j)].re, mu);
            check(&|d| d.a[(i, j)].norm_sqr(), stats.second_moment[(i, j)]);
            check(&|d| (d.a[(i, j)] - mu).norm_sqr(), stats.varsigma[(i, j)]);
        }
        let (mu_a, mu_y) = (mom.mean_a[i], mom.mean_y[i]);
        check(&|d| d.y_dp[i].re, mu_y);
        check(&|d| (d.y_dp[i] - mu_y).norm_sqr(), mom.var_y[i]);
        check(&|d| ((d.a[(i, i)] - mu_a) * (d.y_dp[i] - mu_y).conj()).re, mom.cov_ay[i]);
        check(&|d| (d.a_hat[i] - Complex64::from(mu_a)).norm_sqr(), mom.kappa[i]);
    }
    z
}

/// Every moment must lie within 3 SE. With hundreds of correlated checks a
/// few chance exceedances are expected, so each exceedance is re-tested on
/// an independent stream of the same size and must pass there.
fn criterion_1() -> Verdict {
    let rows: Vec<(usize, usize, usize, f64)> = (0..20u64)
        .into_par_iter()
        .map(|inst| {
            let first = moment_z_scores(inst, 0);
            let over: Vec<usize> = (0..first.len()).filter(|&i| !(first[i] <= 3.0)).collect();
            let worst = first.iter().copied().fold(0.0, f64::max);
            if over.is_empty() {
                return (first.len(), 0, 0, worst);
            }
            let second = moment_z_scores(inst, 1);
            let persistent = over.iter().filter(|&&i| !(second[i] <= 3.0)).count();
            (first.len(), over.len(), persistent, worst)
        })
        .collect();
    let checks: usize = rows.iter().map(|r| r.0).sum();
    let over: usize = rows.iter().map(|r| r.1).sum();
    let persistent: usize = rows.iter().map(|r| r.2).sum();
    let worst = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    verdict(
        persistent == 0,
        format!(
            "{checks} closed-form moments on 20 instances with 1e5 draws: {over} beyond 3 SE on the first stream \
             (largest {worst:.2} SE), {persistent} still beyond 3 SE on an independent stream"
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for inst in 0..1000u64 {
        let mut rng = substream(202, &[inst]);
        let m = rng.random_range(1..=30);
        let k = rng.random_range(1..=6);
        let plan = random_plan(&mut rng, k);
        let beta = random_beta(&mut rng, m, k, -3.0);
        let rho_up = 10f64.powf(rng.random_range(-1.0..3.0));
        let (_, gamma) = mmse_uplink(&beta, &plan, rho_up);
        let eta = random_eta(&mut rng, &gamma);
        let inputs = RateInputs {
            beta: &beta,
            gamma: &gamma,
            eta: &eta,
            plan: &plan,
            rho_d: 10f64.powf(rng.random_range(-1.0..3.0)),
            rho_dp: 10f64.powf(rng.random_range(-1.0..3.0)),
            rho_up,
        };
        let (cf, scsi, ub) = (rate_cf(&inputs).unwrap(), rate_scsi(&inputs).unwrap(), rate_ub(&inputs).unwrap());
        for ue in 0..k {
            let excess = (scsi[ue] - cf[ue]).max(cf[ue] - ub[ue]);
            worst = worst.max(excess);
            violations += usize::from(excess > 1e-12);
        }
    }
    verdict(violations == 0, format!("{violations} ordering violations on 1000 instances (largest excess {worst:.1e})"))
}

fn criterion_3() -> Verdict {
    let mut rng = substream(303, &[]);
    let k = 4;
    let plan = PilotPlan::orthogonal(k);
    let beta = random_beta(&mut rng, 20, k, -2.0);
    let (_, gamma) = mmse_uplink(&beta, &plan, 10.0);
    let eta = cd_fpt(&gamma).unwrap();
    let mut worst: f64 = 0.0;
    for ue in 0..k {
        let vs = gain_statistics(&beta, &gamma, &eta, &plan).varsigma[(ue, ue)];
        let rho_dp = 1e3 / (plan.dl_len() as f64 * vs);
        let kappa = downlink_moments(&beta, &gamma, &eta, &plan, rho_dp).unwrap().kappa[ue];
        worst = worst.max((kappa / vs - 1.0).abs());
    }
    verdict(worst < 1e-3, format!("largest |kappa/varsigma - 1| = {worst:.3e} at training SNR 1e3"))
}

/// Minimum upper-bound SINR over both UEs, written out for `K = 2`.
fn min_sinr_two_ues(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, shared: bool, rho: f64, z: &DMatrix<f64>) -> f64 {
    let m = beta.nrows();
    let w = if shared { 1.0 } else { 0.0 };
    let mut min = f64::INFINITY;
    for k in 0..2 {
        let o = 1 - k;
        let mut coherent = 0.0;
        let mut own_var = 0.0;
        let mut other_var = 0.0;
        let mut other_mean = 0.0;
        for ap in 0..m {
            coherent += z[(ap, k)] * gamma[(ap, k)];
            own_var += z[(ap, k)].powi(2) * beta[(ap, k)] * gamma[(ap, k)];
            other_var += z[(ap, o)].powi(2) * beta[(ap, k)] * gamma[(ap, o)];
            other_mean += z[(ap, o)] * gamma[(ap, o)] * beta[(ap, k)] / beta[(ap, o)];
        }
        let sinr = rho * (coherent.powi(2) + own_var) / (rho * (other_var + w * other_mean.powi(2)) + 1.0);
        min = min.min(sinr);
    }
    min
}

/// Visits every index tuple with `idx[d] < len` for each of `dims` digits.
fn odometer(dims: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims];
    loop {
        f(&idx);
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] < len {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            return;
        }
    }
}

/// Exhaustive search over per-AP spend `r` and split angle `t`, then
/// successive zooming around each of the best coarse points.
fn grid_optimum(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, shared: bool, rho: f64) -> f64 {
    const STARTS: usize = 10;
    let m = beta.nrows();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let point = |params: &[(f64, f64)]| {
        let z = DMatrix::from_fn(m, 2, |ap, k| {
            let (r, t) = params[ap];
            let share = if k == 0 { t.cos().powi(2) } else { t.sin().powi(2) };
            (r * r * share / gamma[(ap, k)]).sqrt()
        });
        min_sinr_two_ues(beta, gamma, shared, rho, &z)
    };
    let axis: Vec<(f64, f64)> =
        (0..=10).flat_map(|i| (0..=20).map(move |j| (i as f64 / 10.0, half_pi * j as f64 / 20.0))).collect();
    let mut coarse: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    odometer(m, axis.len(), |idx| {
        let params: Vec<_> = idx.iter().map(|&i| axis[i]).collect();
        coarse.push((point(&params), params));
    });
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    coarse.truncate(STARTS);
    let mut overall = f64::NEG_INFINITY;
    for mut best in coarse {
        let (mut dr, mut dt) = (0.1, half_pi / 20.0);
        for _ in 0..30 {
            let local: Vec<Vec<(f64, f64)>> = best
                .1
                .iter()
                .map(|&(r, t)| {
                    (-2..=2)
                        .flat_map(|a| {
                            (-2..=2).map(move |b| {
                                let r = (r + a as f64 * dr / 2.0).clamp(0.0, 1.0);
                                (r, (t + b as f64 * dt / 2.0).clamp(0.0, half_pi))
                            })
                        })
                        .collect()
                })
                .collect();
            let mut next = best.clone();
            odometer(m, 25, |idx| {
                let params: Vec<_> = (0..m).map(|ap| local[ap][idx[ap]]).collect();
                let v = point(&params);
                if v > next.0 {
                    next = (v, params);
                }
            });
            best = next;
            dr /= 2.0;
            dt /= 2.0;
        }
        overall = overall.max(best.0);
    }
    overall
}

/// Gaps are relative to the grid optimum; a second run with many more
/// linearizations separates slow convergence from local optima.
fn criterion_4() -> Verdict {
    const CONVERGED_ITERATIONS: usize = 100;
    let rows: Vec<(f64, f64, f64)> = (0..50u64)
        .into_par_iter()
        .map(|inst| {
            let mut rng = substream(404, &[inst]);
            let m = rng.random_range(2..=3);
            let shared = inst % 2 == 0;
            let plan = if shared { PilotPlan::new(1, 2, &[(0, 0), (0, 1)]) } else { PilotPlan::orthogonal(2) };
            let beta = random_beta(&mut rng, m, 2, -2.0);
            let rho = 10f64.powf(rng.random_range(0.0..2.0));
            let (_, gamma) = mmse_uplink(&beta, &plan, rho / 2.0);
            let data = FeasibilityData::new(&beta, &gamma, &plan, rho, None).unwrap();
            let start = cd_fpt(&gamma).unwrap();
            let res = bisection_maxmin(&data, &start, &ScaSettings::default()).unwrap();
            let long = ScaSettings { iterations: CONVERGED_ITERATIONS, ..ScaSettings::default() };
            let converged = bisection_maxmin(&data, &start, &long).unwrap();
            let mut budget_excess: f64 = 0.0;
            for eta in [&res.eta, &converged.eta] {
                for ap in 0..m {
                    let load: f64 = (0..2).map(|k| eta.eta[(ap, k)] * gamma[(ap, k)]).sum();
                    budget_excess = budget_excess.max(load - 1.0);
                    for k in 0..2 {
                        budget_excess = budget_excess.max(-eta.eta[(ap, k)]);
                    }
                }
            }
            let grid = grid_optimum(&beta, &gamma, shared, rho);
            let gap =
                |eta: &PowerCoefficients| (min_sinr_two_ues(&beta, &gamma, shared, rho, &eta.zeta) - grid).abs() / grid;
            (gap(&res.eta), gap(&converged.eta), budget_excess)
        })
        .collect();
    let worst = |i: usize| rows.iter().map(|r| [r.0, r.1][i]).fold(0.0, f64::max);
    let beyond = |i: usize| rows.iter().filter(|r| [r.0, r.1][i] > 0.02).count();
    let worst_budget = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        worst(0) <= 0.02 && worst_budget <= 1e-9,
        format!(
            "50 instances: default settings largest gap {:.2}% ({} beyond 2%), after {CONVERGED_ITERATIONS} linearizations \
             largest gap {:.2}% ({} beyond 2%), largest budget excess {worst_budget:.1e}",
            100.0 * worst(0),
            beyond(0),
            100.0 * worst(1),
            beyond(1)
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut spec = ExperimentSpec::default();
    spec.num_placements = 20;
    spec.power_policy = PowerPolicy::MmfSca;
    let cmp = compare_pc(&spec).unwrap();
    let at2 = cmp.mean_min_cf_at(2).unwrap_or(f64::NAN);
    let at5 = cmp.mean_min_cf_at(5).unwrap_or(f64::NAN);
    let change = (at5 - at2).abs() / at2;
    let wins = cmp.fraction_sca_beats_scsi();
    let trace: Vec<String> = (1..=5).map(|n| format!("{:.4}", cmp.mean_min_cf_at(n).unwrap_or(f64::NAN))).collect();
    verdict(
        change < 0.01 && wins >= 0.9 && cmp.placements.len() == 20,
        format!(
            "mean minimum rate by iteration [{}], change 2->5 {:.2}%, beats statistical power on {:.0}% of {} placements",
            trace.join(", "),
            100.0 * change,
            100.0 * wins,
            cmp.placements.len()
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut spec = ExperimentSpec::default();
    spec.scenario.num_aps = 200;
    spec.num_placements = 50;
    spec.power_policy = PowerPolicy::MmfSca;
    let cmp = compare_training(&spec).unwrap();
    let ok = (0.2..=0.8).contains(&cmp.gain_p5) && cmp.failures.is_empty();
    verdict(
        ok,
        format!(
            "5th-percentile net rate {:.4} with training vs {:.4} without, gain {:.1}%, {} failed placements",
            cmp.p5_with,
            cmp.p5_without,
            100.0 * cmp.gain_p5,
            cmp.failures.len()
        ),
    )
}

/// Kolmogorov-Smirnov distance between `samples` and a normal law.
fn ks_distance(samples: &mut [f64], mean: f64, var: f64) -> f64 {
    let n = samples.len() as f64;
    let normal = Normal::new(mean, var.sqrt()).unwrap();
    samples.sort_by(f64::total_cmp);
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn criterion_7() -> Verdict {
    let mut spec = ExperimentSpec::default();
    spec.scenario.num_ues = 2;
    let ch = prepare_channels(&spec, 0).unwrap();
    let eta = cd_fpt(&ch.gamma).unwrap();
    let s = &spec.scenario;
    let stats = gain_statistics(&ch.beta, &ch.gamma, &eta, &ch.plan);
    let sampler = LinkSampler::new(&ch.beta, &ch.plan, &eta, s.rho_up(), s.rho_dp()).unwrap();
    let mut rng = substream(707, &[]);
    let draws: Vec<_> = (0..10_000).map(|_| sampler.draw_gains(&mut rng)).collect();
    let stats: Vec<f64> = (0..2)
        .map(|k| {
            // |g_hat|^2 is real, so the real part carries more than half the variance
            let real_excess: f64 = (0..s.num_aps).map(|m| eta.eta[(m, k)] * ch.gamma[(m, k)].powi(2)).sum();
            let mut re: Vec<f64> = draws.iter().map(|a| a[(k, k)].re).collect();
            ks_distance(&mut re, stats.mean[(k, k)], (stats.varsigma[(k, k)] + real_excess) / 2.0)
        })
        .collect();
    let worst = stats.iter().copied().fold(0.0, f64::max);
    verdict(worst < 0.05, format!("KS statistics {stats:.4?} with 10000 samples at M = 100"))
}

fn holder(plan: &PilotPlan, pair: (usize, usize)) -> Option<usize> {
    (0..plan.num_ues()).find(|&u| plan.pair(u) == pair)
}

fn moved(plan: &PilotPlan, ue: usize, pair: (usize, usize)) -> PilotPlan {
    let mut pairs: Vec<_> = (0..plan.num_ues()).map(|u| plan.pair(u)).collect();
    if let Some(h) = holder(plan, pair) {
        pairs[h] = pairs[ue];
    }
    pairs[ue] = pair;
    PilotPlan::new(plan.ul_len(), plan.dl_len(), &pairs)
}

fn contamination(k: usize, plan: &PilotPlan, beta: &DMatrix<f64>, eta: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for o in (0..plan.num_ues()).filter(|&o| o != k) {
        let ul = if plan.pair(o).0 == plan.pair(k).0 { 1.0 } else { 0.0 };
        let dl = if plan.pair(o).1 == plan.pair(k).1 { 1.0 } else { 0.0 };
        for ap in 0..beta.nrows() {
            total += beta[(ap, o)] * ul + eta[(ap, o)] * beta[(ap, k)] * gamma[(ap, o)] * dl;
        }
    }
    total
}

fn criterion_8() -> Verdict {
    let mut guard_violations = 0;
    for inst in 0..200u64 {
        let mut rng = substream(808, &[inst]);
        let ul = rng.random_range(2..=4);
        let dl = rng.random_range(2..=4);
        let k = rng.random_range(2..=(ul * dl).min(8));
        let m = rng.random_range(5..=30);
        let beta = random_beta(&mut rng, m, k, -3.0);
        let plan0 = baseline_assign(&PairPool::new(ul, dl), k, &mut rng).unwrap();
        let (_, gamma0) = mmse_uplink(&beta, &plan0, 10.0);
        for power in [PowerRule::CdFpt, PowerRule::Fixed(cd_fpt(&gamma0).unwrap())] {
            let ctx = AssignmentContext { beta: &beta, rho_up: 10.0, rho_d: 20.0, rho_dp: 20.0, power };
            let start = ctx.evaluate(&plan0).unwrap().min_rate();
            for out in [greedy_assign(&plan0, &ctx, 5).unwrap(), advanced_greedy_assign(&plan0, &ctx, 5).unwrap()] {
                guard_violations += usize::from(ctx.evaluate(&out).unwrap().min_rate() < start);
            }
        }
    }
    let mut mismatches = 0;
    for inst in 0..100u64 {
        let mut rng = substream(818, &[inst]);
        let m = rng.random_range(5..=20);
        let beta = random_beta(&mut rng, m, 3, -3.0);
        let plan0 = baseline_assign(&PairPool::new(2, 2), 3, &mut rng).unwrap();
        let ctx = AssignmentContext { beta: &beta, rho_up: 10.0, rho_d: 20.0, rho_dp: 20.0, power: PowerRule::CdFpt };
        let eval0 = ctx.evaluate(&plan0).unwrap();
        let worst = eval0.worst_ue();
        let candidates: Vec<PilotPlan> =
            [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&p| moved(&plan0, worst, p)).collect();
        let brute_best =
            candidates.iter().map(|c| ctx.evaluate(c).unwrap().min_rate()).fold(f64::NEG_INFINITY, f64::max);
        let adv = ctx.evaluate(&advanced_greedy_assign(&plan0, &ctx, 1).unwrap()).unwrap().min_rate();
        mismatches += usize::from((adv - brute_best).abs() > 1e-12);
        let utility: Vec<f64> =
            candidates.iter().map(|c| contamination(worst, c, &beta, &eval0.eta.eta, &eval0.gamma)).collect();
        let pick = (0..4).fold(0, |b, i| if utility[i] < utility[b] { i } else { b });
        let expect = if ctx.evaluate(&candidates[pick]).unwrap().min_rate() >= eval0.min_rate() {
            &candidates[pick]
        } else {
            &plan0
        };
        let got = greedy_assign(&plan0, &ctx, 1).unwrap();
        mismatches += usize::from((0..3).any(|u| got.pair(u) != expect.pair(u)));
    }
    verdict(
        guard_violations == 0 && mismatches == 0,
        format!("{guard_violations} guard violations on 200 instances, {mismatches} brute-force mismatches on 100 instances"),
    )
}

fn criterion_9() -> Verdict {
    let mut spec = ExperimentSpec::default();
    spec.scenario.num_aps = 200;
    spec.user_centric_alpha = Some(0.95);
    let sizes: Vec<f64> =
        (0..50).into_par_iter().map(|p| prepare_channels(&spec, p).unwrap().clusters.mean_size()).collect();
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    verdict((15.0..=40.0).contains(&mean), format!("mean cluster size {mean:.2} over 50 placements"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Verdict); 9] = [
        (1, "moment oracle", criterion_1),
        (2, "rate ordering", criterion_2),
        (3, "training limit", criterion_3),
        (4, "solver oracle", criterion_4),
        (5, "SCA convergence", criterion_5),
        (6, "downlink training gain", criterion_6),
        (7, "Gaussian approximation", criterion_7),
        (8, "pilot assignment", criterion_8),
        (9, "user-centric cluster size", criterion_9),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.passed { "PASS" } else { "FAIL" };
        let secs = start.elapsed().as_secs_f64();
        writeln!(err, "criterion {id} ({name}): {status} - {} [{secs:.1} s]", v.detail).unwrap();
        if !v.passed {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        writeln!(err, "failed criteria: {failed:?}").unwrap();
        std::process::exit(1);
    }
}
