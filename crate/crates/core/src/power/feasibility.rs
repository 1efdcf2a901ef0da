//! Second-order-cone feasibility problems for max-min power control.
//!
//! Everything here works in the scaled variables `x[m, k] = sqrt(eta[m, k]
//! gamma[m, k])`, which lie in `[0, 1]` and keep the conic data well
//! conditioned. With `G = rho_d gamma` and `B = rho_d beta` the upper-bound
//! SINR of UE `k` is
//!
//! ```text
//! (sum_m sqrt(G[m,k]) x[m,k])^2 + sum_m B[m,k] x[m,k]^2
//! ------------------------------------------------------------------------------
//! sum_m B[m,k] sum_{k'!=k} x[m,k']^2 + sum_{k'!=k} w[k',k] rho[k',k]^2 + 1
//! ```
//!
//! where `rho[k',k] = sum_m sqrt(G[m,k']) (beta[m,k] / beta[m,k']) x[m,k']` is
//! the coherent leakage from a co-uplink-pilot UE `k'` with pilot overlap
//! `w[k',k]`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pilots::PilotPlan;
use crate::power::PowerCoefficients;

/// Absolute tolerance used to verify a solver's feasible point.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

/// Coherent leakage from `interferer` into `victim` through a shared uplink pilot.
#[derive(Debug, Clone)]
struct Leakage {
    interferer: usize,
    victim: usize,
    weight: f64,
    /// `(AP, sqrt(G[m,k']) beta[m,k] / beta[m,k'])` over active APs of the interferer.
    coeff: Vec<(usize, f64)>,
}

/// Problem data shared by every feasibility solve of one scenario.
#[derive(Debug, Clone)]
pub struct FeasibilityData {
    m: usize,
    k: usize,
    sqrt_g: DMatrix<f64>,
    b: DMatrix<f64>,
    gamma: DMatrix<f64>,
    /// Column index of `x[m, k]` in the solver's variable vector.
    index: DMatrix<Option<usize>>,
    num_x: usize,
    leakage: Vec<Leakage>,
}

/// Which SINR the feasibility problem certifies.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Upper-bound SINR, with its convex numerator linearized at the given point.
    Linearized(&'a DMatrix<f64>),
    /// Statistical-CSI SINR, which is exactly representable as a cone.
    Statistical,
}

/// One assembled conic program `A v + s = b, s in K`.
#[derive(Debug, Clone)]
pub struct SocpProblem {
    pub nu: f64,
    pub num_vars: usize,
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    linearized_at: Option<DMatrix<f64>>,
}

impl SocpProblem {
    /// Dimensions of the second-order cones, in row order.
    pub fn soc_dims(&self) -> Vec<usize> {
        self.cones
            .iter()
            .filter_map(|c| match c {
                SecondOrderConeT(n) => Some(*n),
                _ => None,
            })
            .collect()
    }

    pub fn nonnegative_rows(&self) -> usize {
        self.cones
            .iter()
            .map(|c| match c {
                NonnegativeConeT(n) => *n,
                _ => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub solver_status: String,
    pub iterations: u32,
    pub r_prim: f64,
    pub r_dual: f64,
    /// Set when the solver reported success but the point failed verification.
    pub rejected: bool,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Scaled solution `x`, present when feasible.
    pub x: Option<DMatrix<f64>>,
    pub diagnostics: SolverDiagnostics,
}

impl FeasibilityData {
    /// `mask[m, k] = false` pins `eta[m, k]` to zero.
    pub fn new(
        beta: &DMatrix<f64>,
        gamma: &DMatrix<f64>,
        plan: &PilotPlan,
        rho_d: f64,
        mask: Option<&DMatrix<bool>>,
    ) -> Result<Self> {
        let (m, k) = beta.shape();
        if gamma.shape() != (m, k) || plan.num_ues() != k || mask.is_some_and(|s| s.shape() != (m, k)) {
            return Err(Error::Shape(format!(
                "beta {:?}, gamma {:?}, plan for {} UEs",
                beta.shape(),
                gamma.shape(),
                plan.num_ues()
            )));
        }
        if !(rho_d > 0.0) {
            return Err(Error::InvalidConfig("downlink SNR must be positive".into()));
        }
        let sqrt_g = gamma.map(|g| (rho_d * g).sqrt());
        let b = beta * rho_d;
        let mut index = DMatrix::from_element(m, k, None);
        let mut num_x = 0;
        for ue in 0..k {
            for ap in 0..m {
                if gamma[(ap, ue)] > 0.0 && mask.is_none_or(|s| s[(ap, ue)]) {
                    index[(ap, ue)] = Some(num_x);
                    num_x += 1;
                }
            }
        }
        let mut leakage = Vec::new();
        for victim in 0..k {
            for interferer in (0..k).filter(|&o| o != victim) {
                let weight = plan.ul_inner(victim, interferer).powi(2);
                if weight == 0.0 {
                    continue;
                }
                let coeff: Vec<(usize, f64)> = (0..m)
                    .filter(|&ap| index[(ap, interferer)].is_some())
                    .map(|ap| (ap, sqrt_g[(ap, interferer)] * beta[(ap, victim)] / beta[(ap, interferer)]))
                    .collect();
                if !coeff.is_empty() {
                    leakage.push(Leakage { interferer, victim, weight, coeff });
                }
            }
        }
        Ok(Self { m, k, sqrt_g, b, gamma: gamma.clone(), index, num_x, leakage })
    }

    pub fn num_aps(&self) -> usize {
        self.m
    }

    pub fn num_ues(&self) -> usize {
        self.k
    }

    pub fn is_active(&self, ap: usize, ue: usize) -> bool {
        self.index[(ap, ue)].is_some()
    }

    /// Scaled variables of given power coefficients, zeroed where inactive.
    pub fn x_from_power(&self, eta: &PowerCoefficients) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.k, |ap, ue| {
            if self.is_active(ap, ue) {
                eta.zeta[(ap, ue)] * self.gamma[(ap, ue)].sqrt()
            } else {
                0.0
            }
        })
    }

    pub fn power_from_x(&self, x: &DMatrix<f64>) -> PowerCoefficients {
        let zeta = DMatrix::from_fn(self.m, self.k, |ap, ue| {
            if self.is_active(ap, ue) {
                x[(ap, ue)].max(0.0) / self.gamma[(ap, ue)].sqrt()
            } else {
                0.0
            }
        });
        PowerCoefficients::from_zeta(zeta)
    }

    /// Clamps to the feasible power region: nonnegative, masked, per-AP norm at most one.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out =
            DMatrix::from_fn(self.m, self.k, |ap, ue| if self.is_active(ap, ue) { x[(ap, ue)].max(0.0) } else { 0.0 });
        for ap in 0..self.m {
            let norm = out.row(ap).norm();
            if norm > 1.0 {
                out.row_mut(ap).unscale_mut(norm);
            }
        }
        out
    }

    /// Channel-dependent full power on the active support, in scaled form
    /// `x[m, k] = sqrt(gamma[m, k] / sum_k' gamma[m, k'])`.
    pub fn full_power(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.m, self.k);
        for ap in 0..self.m {
            let total: f64 = (0..self.k).filter(|&ue| self.is_active(ap, ue)).map(|ue| self.gamma[(ap, ue)]).sum();
            for ue in (0..self.k).filter(|&ue| self.is_active(ap, ue)) {
                x[(ap, ue)] = (self.gamma[(ap, ue)] / total).sqrt();
            }
        }
        x
    }

    fn coherent(&self, x: &DMatrix<f64>, ue: usize) -> f64 {
        (0..self.m).map(|ap| self.sqrt_g[(ap, ue)] * x[(ap, ue)]).sum()
    }

    fn own_spread(&self, x: &DMatrix<f64>, ue: usize) -> f64 {
        (0..self.m).map(|ap| self.b[(ap, ue)] * x[(ap, ue)].powi(2)).sum()
    }

    fn leakage_value(&self, l: &Leakage, x: &DMatrix<f64>) -> f64 {
        l.coeff.iter().map(|&(ap, c)| c * x[(ap, l.interferer)]).sum()
    }

    /// Interference-plus-noise of each UE excluding its own spread term.
    fn interference(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let row_sq: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
        let mut out: Vec<f64> = (0..self.k)
            .map(|ue| 1.0 + (0..self.m).map(|ap| self.b[(ap, ue)] * (row_sq[ap] - x[(ap, ue)].powi(2))).sum::<f64>())
            .collect();
        for l in &self.leakage {
            out[l.victim] += l.weight * self.leakage_value(l, x).powi(2);
        }
        out
    }

    pub fn sinr_ub(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let den = self.interference(x);
        (0..self.k).map(|ue| (self.coherent(x, ue).powi(2) + self.own_spread(x, ue)) / den[ue]).collect()
    }

    pub fn sinr_scsi(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let den = self.interference(x);
        (0..self.k).map(|ue| self.coherent(x, ue).powi(2) / (den[ue] + self.own_spread(x, ue))).collect()
    }

    pub fn min_sinr(&self, x: &DMatrix<f64>, mode: &Mode<'_>) -> f64 {
        let s = match mode {
            Mode::Linearized(_) => self.sinr_ub(x),
            Mode::Statistical => self.sinr_scsi(x),
        };
        s.into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Convex left-hand side `(a^T x)^2 + (1 + nu) sum_m B x^2` of the
    /// rearranged upper-bound SINR constraint.
    pub fn lhs(&self, x: &DMatrix<f64>, ue: usize, nu: f64) -> f64 {
        self.coherent(x, ue).powi(2) + (1.0 + nu) * self.own_spread(x, ue)
    }

    /// First-order expansion of [`Self::lhs`] around `xn`.
    pub fn lhs_linearized(&self, x: &DMatrix<f64>, xn: &DMatrix<f64>, ue: usize, nu: f64) -> f64 {
        let (c, d) = self.linear_part(xn, ue, nu);
        let an = self.coherent(xn, ue);
        let s: f64 = c.iter().map(|&(ap, cm)| cm * x[(ap, ue)]).sum::<f64>() + d;
        (1.0 + nu) * s - an * an
    }

    /// Coefficients `(c, d)` of `s_k = c^T x_k + d`, the linearized
    /// numerator divided by `1 + nu` without its constant `(a^T xn)^2` part.
    fn linear_part(&self, xn: &DMatrix<f64>, ue: usize, nu: f64) -> (Vec<(usize, f64)>, f64) {
        let an = self.coherent(xn, ue);
        let mut c = Vec::new();
        let mut d = 0.0;
        for ap in (0..self.m).filter(|&ap| self.is_active(ap, ue)) {
            let bm = self.b[(ap, ue)];
            let xm = xn[(ap, ue)];
            c.push((ap, 2.0 / (1.0 + nu) * an * self.sqrt_g[(ap, ue)] + 2.0 * bm * xm));
            d -= bm * xm * xm;
        }
        (c, d)
    }

    /// Assembles the feasibility problem for target SINR `nu`.
    pub fn build(&self, nu: f64, mode: Mode<'_>) -> SocpProblem {
        assert!(nu > 0.0, "target SINR must be positive");
        let theta0 = self.num_x;
        let rho0 = theta0 + self.m;
        let num_vars = rho0 + self.leakage.len();
        let mut tri = Triplets::default();
        let mut b = Vec::new();
        let mut cones = Vec::new();

        let linear: Vec<(Vec<(usize, f64)>, f64)> = match mode {
            Mode::Linearized(xn) => (0..self.k).map(|ue| self.linear_part(xn, ue, nu)).collect(),
            Mode::Statistical => Vec::new(),
        };

        // x >= 0, theta >= 0, theta <= 1, leakage epigraphs, s_k >= 0
        let start = b.len();
        for j in 0..rho0 {
            tri.push(b.len(), j, -1.0);
            b.push(0.0);
        }
        for ap in 0..self.m {
            tri.push(b.len(), theta0 + ap, 1.0);
            b.push(1.0);
        }
        for (p, l) in self.leakage.iter().enumerate() {
            let row = b.len();
            tri.push(row, rho0 + p, -1.0);
            for &(ap, c) in &l.coeff {
                tri.push(row, self.var(ap, l.interferer), c);
            }
            b.push(0.0);
        }
        for (ue, (c, d)) in linear.iter().enumerate() {
            let row = b.len();
            for &(ap, cm) in c {
                tri.push(row, self.var(ap, ue), -cm);
            }
            b.push(*d);
        }
        cones.push(NonnegativeConeT(b.len() - start));

        // per-AP budget ||x_m|| <= theta_m
        for ap in 0..self.m {
            let active: Vec<usize> = (0..self.k).filter(|&ue| self.is_active(ap, ue)).collect();
            if active.is_empty() {
                continue;
            }
            tri.push(b.len(), theta0 + ap, -1.0);
            b.push(0.0);
            for ue in active {
                tri.push(b.len(), self.var(ap, ue), -1.0);
                b.push(0.0);
            }
            cones.push(SecondOrderConeT(1 + self.active_count(ap)));
        }

        // per-UE SINR cone
        for ue in 0..self.k {
            let start = b.len();
            // the hyperbolic form doubles the tail entries
            let scale = if matches!(mode, Mode::Linearized(_)) { 2.0 } else { 1.0 };
            let t = 1.0 + 1.0 / nu;
            match mode {
                Mode::Linearized(_) => {
                    let (c, d) = &linear[ue];
                    for &(ap, cm) in c {
                        tri.push(b.len(), self.var(ap, ue), -cm);
                    }
                    b.push(d + t);
                }
                Mode::Statistical => {
                    for ap in (0..self.m).filter(|&ap| self.is_active(ap, ue)) {
                        tri.push(b.len(), self.var(ap, ue), -self.sqrt_g[(ap, ue)] / nu.sqrt());
                    }
                    b.push(0.0);
                }
            }
            for (p, l) in self.leakage.iter().enumerate().filter(|(_, l)| l.victim == ue) {
                tri.push(b.len(), rho0 + p, -scale * l.weight.sqrt());
                b.push(0.0);
            }
            for ap in (0..self.m).filter(|&ap| self.b[(ap, ue)] > 0.0) {
                tri.push(b.len(), theta0 + ap, -scale * self.b[(ap, ue)].sqrt());
                b.push(0.0);
            }
            match mode {
                Mode::Linearized(xn) => {
                    let an = self.coherent(xn, ue);
                    b.push(2.0 * (1.0 + an * an / nu).sqrt());
                    let (c, d) = &linear[ue];
                    for &(ap, cm) in c {
                        tri.push(b.len(), self.var(ap, ue), -cm);
                    }
                    b.push(d - t);
                }
                Mode::Statistical => b.push(1.0),
            }
            cones.push(SecondOrderConeT(b.len() - start));
        }

        let rows = b.len();
        SocpProblem {
            nu,
            num_vars,
            a: CscMatrix::new_from_triplets(rows, num_vars, tri.i, tri.j, tri.v),
            b,
            cones,
            linearized_at: match mode {
                Mode::Linearized(xn) => Some(xn.clone()),
                Mode::Statistical => None,
            },
        }
    }

    fn var(&self, ap: usize, ue: usize) -> usize {
        self.index[(ap, ue)].expect("inactive variable referenced")
    }

    fn active_count(&self, ap: usize) -> usize {
        (0..self.k).filter(|&ue| self.is_active(ap, ue)).count()
    }

    fn x_from_solution(&self, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.k, |ap, ue| self.index[(ap, ue)].map_or(0.0, |j| v[j]))
    }

    /// Checks a point against every constraint, with the power and leakage
    /// slacks set to their tightest values.
    pub fn verify(&self, problem: &SocpProblem, x: &DMatrix<f64>, tol: f64) -> bool {
        if x.iter().any(|&v| v < -tol) {
            return false;
        }
        let row_norm: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
        if row_norm.iter().any(|&n| n > 1.0 + tol) {
            return false;
        }
        let nu = problem.nu;
        let leak: Vec<f64> = self.leakage.iter().map(|l| self.leakage_value(l, x)).collect();
        for ue in 0..self.k {
            let mut tail_sq: f64 = self
                .leakage
                .iter()
                .zip(&leak)
                .filter(|(l, _)| l.victim == ue)
                .map(|(l, v)| l.weight * v * v)
                .sum::<f64>()
                + (0..self.m).map(|ap| self.b[(ap, ue)] * row_norm[ap].powi(2)).sum::<f64>();
            match &problem.linearized_at {
                Some(xn) => {
                    let (c, d) = self.linear_part(xn, ue, nu);
                    let s: f64 = c.iter().map(|&(ap, cm)| cm * x[(ap, ue)]).sum::<f64>() + d;
                    let t = 1.0 + 1.0 / nu;
                    if s < -tol {
                        return false;
                    }
                    let an = self.coherent(xn, ue);
                    tail_sq = 4.0 * (tail_sq + 1.0 + an * an / nu) + (s - t).powi(2);
                    if tail_sq.sqrt() > (s + t) * (1.0 + tol) + tol {
                        return false;
                    }
                }
                None => {
                    let head = self.coherent(x, ue) / nu.sqrt();
                    if (tail_sq + 1.0).sqrt() > head * (1.0 + tol) + tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn solve(&self, problem: &SocpProblem) -> SolveOutcome {
        let p = CscMatrix::zeros((problem.num_vars, problem.num_vars));
        let q = vec![0.0; problem.num_vars];
        let settings = DefaultSettings { verbose: false, max_iter: 200, tol_feas: 1e-9, ..DefaultSettings::default() };
        let mut solver = match DefaultSolver::new(&p, &q, &problem.a, &problem.b, &problem.cones, settings) {
            Ok(s) => s,
            Err(e) => {
                return SolveOutcome {
                    status: SolveStatus::NumericalFailure,
                    x: None,
                    diagnostics: SolverDiagnostics { solver_status: format!("setup: {e}"), ..Default::default() },
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let mut diagnostics = SolverDiagnostics {
            solver_status: format!("{:?}", sol.status),
            iterations: sol.iterations,
            r_prim: sol.r_prim,
            r_dual: sol.r_dual,
            rejected: false,
        };
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = self.x_from_solution(&sol.x);
                if self.verify(problem, &x, VERIFY_TOLERANCE) {
                    return SolveOutcome { status: SolveStatus::Feasible, x: Some(self.project(&x)), diagnostics };
                }
                diagnostics.rejected = true;
                SolveStatus::Infeasible
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        SolveOutcome { status, x: None, diagnostics }
    }
}

#[derive(Default)]
struct Triplets {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.i.push(i);
            self.j.push(j);
            self.v.push(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::mmse_uplink;
    use crate::power::cd_fpt;
    use crate::rates::SinrTerms;
    use crate::rng::substream;
    use rand::Rng;

    fn instance(
        m: usize,
        pairs: &[(usize, usize)],
        ul: usize,
        dl: usize,
        seed: u64,
    ) -> (DMatrix<f64>, DMatrix<f64>, PilotPlan) {
        let mut rng = substream(seed, &[]);
        let beta = DMatrix::from_fn(m, pairs.len(), |_, _| 10f64.powf(rng.random_range(-1.5..0.0)));
        let plan = PilotPlan::new(ul, dl, pairs);
        let (_, gamma) = mmse_uplink(&beta, &plan, 4.0);
        (beta, gamma, plan)
    }

    #[test]
    fn sinr_matches_rate_module() {
        let (beta, gamma, plan) = instance(5, &[(0, 0), (0, 1), (1, 0)], 2, 2, 1);
        let rho = 3.0;
        let data = FeasibilityData::new(&beta, &gamma, &plan, rho, None).unwrap();
        let eta = cd_fpt(&gamma).unwrap();
        let eta = PowerCoefficients::from_eta(eta.eta.map(|e| e * 0.7));
        let x = data.x_from_power(&eta);
        let terms = SinrTerms::new(&beta, &gamma, &eta, &plan);
        for (a, b) in data.sinr_ub(&x).iter().zip(terms.sinr_ub(rho)) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
        for (a, b) in data.sinr_scsi(&x).iter().zip(terms.sinr_scsi(rho)) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
        let back = data.power_from_x(&x);
        assert!((back.eta - eta.eta).abs().max() < 1e-12);
    }

    #[test]
    fn full_power_is_cd_fpt() {
        let (beta, gamma, plan) = instance(4, &[(0, 0), (1, 0), (0, 1)], 2, 2, 2);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 1.0, None).unwrap();
        let eta = cd_fpt(&gamma).unwrap();
        assert!((data.full_power() - data.x_from_power(&eta)).abs().max() < 1e-12);
    }

    #[test]
    fn single_ue_has_no_leakage_and_expected_cones() {
        let (beta, gamma, plan) = instance(1, &[(0, 0)], 1, 1, 3);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 2.0, None).unwrap();
        assert!(data.leakage.is_empty());
        let x = data.full_power();
        let p = data.build(0.5, Mode::Linearized(&x));
        // power cone [theta; x], SINR cone [s + t; 2 sqrt(B) theta; const; s - t]
        assert_eq!(p.soc_dims(), vec![2, 4]);
        // x >= 0, theta >= 0, theta <= 1, s >= 0
        assert_eq!(p.nonnegative_rows(), 4);
        assert_eq!(p.num_vars, 2);
    }

    #[test]
    fn leakage_only_for_shared_uplink_pilots() {
        let (beta, gamma, plan) = instance(3, &[(0, 0), (0, 1), (1, 0)], 2, 2, 4);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 2.0, None).unwrap();
        let mut pairs: Vec<(usize, usize)> = data.leakage.iter().map(|l| (l.interferer, l.victim)).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn linearization_is_exact_at_expansion_point() {
        let (beta, gamma, plan) = instance(4, &[(0, 0), (0, 1), (1, 0)], 2, 2, 5);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 5.0, None).unwrap();
        let xn = data.full_power() * 0.8;
        for ue in 0..3 {
            let f = data.lhs(&xn, ue, 1.7);
            assert!((data.lhs_linearized(&xn, &xn, ue, 1.7) - f).abs() < 1e-12 * f);
        }
    }

    #[test]
    fn linearized_gradient_matches_finite_differences_in_zeta() {
        // Differentiate both sides with respect to zeta = x / sqrt(gamma).
        let (beta, gamma, plan) = instance(3, &[(0, 0), (1, 0)], 2, 1, 6);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 5.0, None).unwrap();
        let xn = data.full_power() * 0.6;
        let nu = 2.3;
        let h = 1e-5;
        for ue in 0..2 {
            for ap in 0..3 {
                let sg = gamma[(ap, ue)].sqrt();
                let mut plus = xn.clone();
                let mut minus = xn.clone();
                plus[(ap, ue)] += h * sg;
                minus[(ap, ue)] -= h * sg;
                let fd = (data.lhs(&plus, ue, nu) - data.lhs(&minus, ue, nu)) / (2.0 * h);
                let lin =
                    (data.lhs_linearized(&plus, &xn, ue, nu) - data.lhs_linearized(&minus, &xn, ue, nu)) / (2.0 * h);
                assert!((fd - lin).abs() <= 1e-6 * fd.abs().max(1e-12), "{fd} vs {lin}");
            }
        }
    }

    #[test]
    fn linearization_underestimates_convex_lhs() {
        let (beta, gamma, plan) = instance(4, &[(0, 0), (1, 0)], 2, 1, 7);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 5.0, None).unwrap();
        let xn = data.full_power() * 0.5;
        let mut rng = substream(8, &[]);
        for _ in 0..100 {
            let x = data.project(&DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>()));
            for ue in 0..2 {
                assert!(data.lhs_linearized(&x, &xn, ue, 0.9) <= data.lhs(&x, ue, 0.9) + 1e-12);
            }
        }
    }

    #[test]
    fn tiny_target_is_feasible() {
        let (beta, gamma, plan) = instance(3, &[(0, 0), (0, 1)], 1, 2, 9);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 10.0, None).unwrap();
        let xn = data.full_power();
        let out = data.solve(&data.build(1e-6, Mode::Linearized(&xn)));
        assert_eq!(out.status, SolveStatus::Feasible, "{:?}", out.diagnostics);
        let out = data.solve(&data.build(1e-6, Mode::Statistical));
        assert_eq!(out.status, SolveStatus::Feasible, "{:?}", out.diagnostics);
    }

    #[test]
    fn single_ue_bound_separates_verdicts() {
        let (beta, gamma, plan) = instance(1, &[(0, 0)], 1, 1, 10);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 20.0, None).unwrap();
        let full = data.full_power();
        let best = data.sinr_ub(&full)[0];
        let below = data.solve(&data.build(best * 0.99, Mode::Linearized(&full)));
        assert_eq!(below.status, SolveStatus::Feasible);
        let above = data.solve(&data.build(best * 1.01, Mode::Linearized(&full)));
        assert_eq!(above.status, SolveStatus::Infeasible);
    }

    #[test]
    fn feasible_points_certify_true_sinr() {
        let (beta, gamma, plan) = instance(5, &[(0, 0), (0, 1), (1, 0)], 2, 2, 11);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 30.0, None).unwrap();
        let xn = data.full_power();
        let start = data.min_sinr(&xn, &Mode::Linearized(&xn));
        let out = data.solve(&data.build(start * 1.05, Mode::Linearized(&xn)));
        if let Some(x) = out.x {
            assert!(data.min_sinr(&x, &Mode::Linearized(&xn)) >= start * 1.05 * (1.0 - 1e-5));
        }
    }

    #[test]
    fn masked_entries_stay_zero() {
        let (beta, gamma, plan) = instance(3, &[(0, 0), (1, 0)], 2, 1, 12);
        let mask = DMatrix::from_row_slice(3, 2, &[true, false, true, true, false, true]);
        let data = FeasibilityData::new(&beta, &gamma, &plan, 10.0, Some(&mask)).unwrap();
        let xn = data.full_power();
        let out = data.solve(&data.build(1e-3, Mode::Linearized(&xn)));
        let x = out.x.unwrap();
        assert_eq!(x[(0, 1)], 0.0);
        assert_eq!(x[(2, 0)], 0.0);
    }
}
