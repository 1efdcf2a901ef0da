//! Pilot books and joint uplink/downlink pilot assignment.
//!
//! Every UE gets a pair `(uplink index, downlink index)` drawn from the
//! Cartesian product of the two books. Pairs are unique per UE, which is the
//! same as requiring UEs that share an uplink pilot to use orthogonal
//! downlink pilots.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::mmse_uplink;
use crate::power::{cd_fpt, PowerCoefficients};
use crate::rates::{rate_cf, RateInputs};

/// `tau` mutually orthonormal length-`tau` pilot sequences (canonical basis).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    sequences: Vec<DVector<f64>>,
}

impl PilotBook {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence(&self, i: usize) -> &DVector<f64> {
        &self.sequences[i]
    }

    pub fn inner(&self, i: usize, j: usize) -> f64 {
        self.sequences[i].dot(&self.sequences[j])
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.inner(i, j))
    }
}

pub fn make_book(tau: usize) -> PilotBook {
    assert!(tau >= 1, "pilot length must be at least 1");
    PilotBook { sequences: (0..tau).map(|i| DVector::from_fn(tau, |t, _| f64::from(t == i))).collect() }
}

/// Per-UE pilot indices into an uplink and a downlink book.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub ul_book: PilotBook,
    pub dl_book: PilotBook,
    pub ul_index: Vec<usize>,
    pub dl_index: Vec<usize>,
}

/// Flat serializable view of a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub ul_pilot_len: usize,
    pub dl_pilot_len: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl PilotPlan {
    pub fn new(ul_len: usize, dl_len: usize, pairs: &[(usize, usize)]) -> Self {
        Self {
            ul_book: make_book(ul_len),
            dl_book: make_book(dl_len),
            ul_index: pairs.iter().map(|p| p.0).collect(),
            dl_index: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Mutually orthogonal pilots: UE `k` uses index `k` in books of length `K`.
    pub fn orthogonal(num_ues: usize) -> Self {
        let pairs: Vec<_> = (0..num_ues).map(|k| (k, k)).collect();
        Self::new(num_ues, num_ues, &pairs)
    }

    pub fn num_ues(&self) -> usize {
        self.ul_index.len()
    }

    pub fn ul_len(&self) -> usize {
        self.ul_book.len()
    }

    pub fn dl_len(&self) -> usize {
        self.dl_book.len()
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        (self.ul_index[k], self.dl_index[k])
    }

    pub fn set_pair(&mut self, k: usize, pair: (usize, usize)) {
        self.ul_index[k] = pair.0;
        self.dl_index[k] = pair.1;
    }

    /// `phi_k^H phi_k'` for UEs `k`, `k'`.
    pub fn ul_inner(&self, k: usize, kp: usize) -> f64 {
        self.ul_book.inner(self.ul_index[k], self.ul_index[kp])
    }

    /// `psi_k^H psi_k'` for UEs `k`, `k'`.
    pub fn dl_inner(&self, k: usize, kp: usize) -> f64 {
        self.dl_book.inner(self.dl_index[k], self.dl_index[kp])
    }

    /// `K x K` matrix of `|phi_k^H phi_k'|^2`.
    pub fn ul_overlap(&self) -> DMatrix<f64> {
        let k = self.num_ues();
        DMatrix::from_fn(k, k, |i, j| self.ul_inner(i, j).powi(2))
    }

    /// `K x K` matrix of `|psi_k^H psi_k'|^2`.
    pub fn dl_overlap(&self) -> DMatrix<f64> {
        let k = self.num_ues();
        DMatrix::from_fn(k, k, |i, j| self.dl_inner(i, j).powi(2))
    }

    pub fn record(&self) -> PlanRecord {
        PlanRecord {
            ul_pilot_len: self.ul_len(),
            dl_pilot_len: self.dl_len(),
            pairs: (0..self.num_ues()).map(|k| self.pair(k)).collect(),
        }
    }

    fn holder_of(&self, pair: (usize, usize)) -> Option<usize> {
        (0..self.num_ues()).find(|&k| self.pair(k) == pair)
    }
}

/// True iff indices are in range, pairs are unique and co-uplink-pilot UEs
/// have orthogonal downlink pilots.
pub fn validate_plan(plan: &PilotPlan) -> bool {
    let k = plan.num_ues();
    if plan.dl_index.len() != k
        || plan.ul_index.iter().any(|&i| i >= plan.ul_len())
        || plan.dl_index.iter().any(|&j| j >= plan.dl_len())
    {
        return false;
    }
    for a in 0..k {
        for b in (a + 1)..k {
            if plan.pair(a) == plan.pair(b) {
                return false;
            }
            if plan.ul_inner(a, b) != 0.0 && plan.dl_inner(a, b) != 0.0 {
                return false;
            }
        }
    }
    true
}

/// The Cartesian product of uplink and downlink pilot indices, in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPool {
    pub ul_len: usize,
    pub dl_len: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl PairPool {
    pub fn new(ul_len: usize, dl_len: usize) -> Self {
        let pairs = (0..ul_len).flat_map(|i| (0..dl_len).map(move |j| (i, j))).collect();
        Self { ul_len, dl_len, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Draws `K` distinct pairs uniformly without replacement.
pub fn baseline_assign<R: Rng + ?Sized>(pool: &PairPool, num_ues: usize, rng: &mut R) -> Result<PilotPlan> {
    if pool.len() < num_ues {
        return Err(Error::PilotPoolTooSmall { pairs: pool.len(), ues: num_ues });
    }
    let picks: Vec<_> = sample(rng, pool.len(), num_ues).into_iter().map(|r| pool.pairs[r]).collect();
    Ok(PilotPlan::new(pool.ul_len, pool.dl_len, &picks))
}

/// How power coefficients follow a candidate pilot plan while assigning.
#[derive(Debug, Clone)]
pub enum PowerRule {
    /// Hold the given coefficients fixed for every candidate.
    Fixed(PowerCoefficients),
    /// Recompute channel-dependent full power from the candidate's estimates.
    CdFpt,
}

/// Everything the greedy searches need to score a pilot plan.
#[derive(Debug, Clone)]
pub struct AssignmentContext<'a> {
    pub beta: &'a DMatrix<f64>,
    pub rho_up: f64,
    pub rho_d: f64,
    pub rho_dp: f64,
    pub power: PowerRule,
}

/// Estimation quality, power and closed-form rates under one plan.
#[derive(Debug, Clone)]
pub struct PlanEvaluation {
    pub gamma: DMatrix<f64>,
    pub eta: PowerCoefficients,
    pub rates: Vec<f64>,
}

impl PlanEvaluation {
    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Lowest-index UE among those with the minimum rate.
    pub fn worst_ue(&self) -> usize {
        let min = self.min_rate();
        self.rates.iter().position(|&r| r == min).unwrap_or(0)
    }
}

impl AssignmentContext<'_> {
    pub fn evaluate(&self, plan: &PilotPlan) -> Result<PlanEvaluation> {
        let (_, gamma) = mmse_uplink(self.beta, plan, self.rho_up);
        let eta = match &self.power {
            PowerRule::Fixed(eta) => eta.clone(),
            PowerRule::CdFpt => cd_fpt(&gamma)?,
        };
        let rates = rate_cf(&RateInputs {
            beta: self.beta,
            gamma: &gamma,
            eta: &eta,
            plan,
            rho_d: self.rho_d,
            rho_dp: self.rho_dp,
            rho_up: self.rho_up,
        })?;
        Ok(PlanEvaluation { gamma, eta, rates })
    }
}

/// Contamination seen by UE `k`: uplink co-pilot gains plus the downlink
/// pilot leakage weighted by power and estimate quality, summed over APs.
pub fn contamination_utility(
    k: usize,
    plan: &PilotPlan,
    beta: &DMatrix<f64>,
    eta: &PowerCoefficients,
    gamma: &DMatrix<f64>,
) -> f64 {
    let mut total = 0.0;
    for kp in (0..plan.num_ues()).filter(|&kp| kp != k) {
        let ul = plan.ul_inner(k, kp).powi(2);
        let dl = plan.dl_inner(k, kp).powi(2);
        if ul == 0.0 && dl == 0.0 {
            continue;
        }
        for m in 0..beta.nrows() {
            total += beta[(m, kp)] * ul + eta.eta[(m, kp)] * beta[(m, k)] * gamma[(m, kp)] * dl;
        }
    }
    total
}

/// Moves `ue` to `pair`, swapping with the current holder of `pair` if any.
pub fn swap_into(plan: &PilotPlan, ue: usize, pair: (usize, usize)) -> PilotPlan {
    let mut next = plan.clone();
    if let Some(holder) = plan.holder_of(pair) {
        next.set_pair(holder, plan.pair(ue));
    }
    next.set_pair(ue, pair);
    next
}

enum Utility {
    Contamination,
    MinRate,
}

fn greedy_search(plan0: &PilotPlan, ctx: &AssignmentContext<'_>, iters: usize, utility: Utility) -> Result<PilotPlan> {
    if !validate_plan(plan0) {
        return Err(Error::InvalidPilotPlan);
    }
    let pool = PairPool::new(plan0.ul_len(), plan0.dl_len());
    let start = ctx.evaluate(plan0)?;
    let mut plan = plan0.clone();
    let mut current = start.clone();
    for _ in 0..iters {
        let worst = current.worst_ue();
        let mut best: Option<(f64, PilotPlan)> = None;
        for &pair in &pool.pairs {
            let candidate = swap_into(&plan, worst, pair);
            if !validate_plan(&candidate) {
                continue;
            }
            let score = match utility {
                Utility::Contamination => {
                    contamination_utility(worst, &candidate, ctx.beta, &current.eta, &current.gamma)
                }
                Utility::MinRate => -ctx.evaluate(&candidate)?.min_rate(),
            };
            // strict comparison keeps the lexicographically first minimizer
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, candidate));
            }
        }
        if let Some((_, next)) = best {
            plan = next;
            current = ctx.evaluate(&plan)?;
        }
    }
    Ok(if current.min_rate() >= start.min_rate() { plan } else { plan0.clone() })
}

/// Repeatedly re-pairs the worst UE with the pilot pair that minimizes its
/// contamination; returns the input plan if the minimum rate did not improve.
pub fn greedy_assign(plan0: &PilotPlan, ctx: &AssignmentContext<'_>, iters: usize) -> Result<PilotPlan> {
    greedy_search(plan0, ctx, iters, Utility::Contamination)
}

/// As [`greedy_assign`] but each worst-UE move maximizes the minimum rate.
pub fn advanced_greedy_assign(plan0: &PilotPlan, ctx: &AssignmentContext<'_>, iters: usize) -> Result<PilotPlan> {
    greedy_search(plan0, ctx, iters, Utility::MinRate)
}
