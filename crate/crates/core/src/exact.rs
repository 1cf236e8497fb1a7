//! Exact evaluators.
//!
//! Discrete demand: the distribution of end-of-period stock is propagated on
//! the integer grid.
//!
//! Single-rate phase-type demand (mixed Erlang, shifted exponential): a
//! stock amount `x` covers a Poisson(`μx`) number of phase completions, so
//! the number of available phases evolves as an integer chain
//! `B = (A − K)⁺`, `A' = B + Poisson(μQ)` with `K` the phases demanded per
//! period. Both engines are exact up to truncating Poisson tails at 1e-12.

use crate::distributions::{DemandDistribution, DiscretePmf};
use crate::error::{check_quantity, EvalError};
use crate::phase::{poisson_pmfs, poisson_upper_bound};
use crate::state::PipelineState;

/// Largest number of phases the phase engine will track.
pub const DEFAULT_PHASE_CAP: usize = 20_000;
/// Largest inventory support the discrete engine will track.
pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;

const POISSON_TAIL: f64 = 1e-12;

fn as_index(x: f64) -> Result<usize, EvalError> {
    check_quantity(x)?;
    if x.fract() != 0.0 {
        return Err(EvalError::NonIntegral);
    }
    Ok(x as usize)
}

/// `(X + Q − D)⁺` on the integer grid.
fn discrete_step(x: &[f64], q: usize, demand: &[f64], tail_from: &[f64]) -> Vec<f64> {
    let top = x.len() - 1 + q;
    let mut out = vec![0.0; top + 1];
    for (i, &px) in x.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let avail = i + q;
        // y = avail − d for d < avail, zero otherwise.
        for (d, &pd) in demand.iter().enumerate().take(avail) {
            out[avail - d] += px * pd;
        }
        out[0] += px * tail_from.get(avail).copied().unwrap_or(0.0);
    }
    out
}

/// Distribution of `Ĩ_{t+L−1}` for discrete demand, prepared once per epoch.
#[derive(Debug, Clone)]
pub struct DiscreteEvaluator {
    inventory: Vec<f64>,
    demand_cdf: Vec<f64>,
}

impl DiscreteEvaluator {
    pub fn new(state: &PipelineState, pmf: &DiscretePmf) -> Result<Self, EvalError> {
        Self::with_cap(state, pmf, DEFAULT_SUPPORT_CAP)
    }

    pub fn with_cap(state: &PipelineState, pmf: &DiscretePmf, cap: usize) -> Result<Self, EvalError> {
        let on_hand = as_index(state.on_hand)?;
        let orders = state.outstanding.iter().map(|&q| as_index(q)).collect::<Result<Vec<_>, _>>()?;
        let needed = on_hand + orders.iter().sum::<usize>() + 1;
        if needed > cap {
            return Err(EvalError::SupportOverflow { needed, cap });
        }
        let demand = pmf.probs();
        // tail_from[j] = P{D ≥ j}
        let mut tail_from = vec![0.0; demand.len() + 1];
        for j in (0..demand.len()).rev() {
            tail_from[j] = tail_from[j + 1] + demand[j];
        }
        let mut inventory = discrete_step(&[1.0], on_hand, demand, &tail_from);
        for &q in &orders {
            inventory = discrete_step(&inventory, q, demand, &tail_from);
        }
        let mut cum = 0.0;
        let demand_cdf = demand
            .iter()
            .map(|p| {
                cum += p;
                cum.min(1.0)
            })
            .collect();
        Ok(DiscreteEvaluator { inventory, demand_cdf })
    }

    /// `P{Ĩ_{t+L−1} = x}` for `x = 0, 1, …`.
    pub fn inventory_pmf(&self) -> &[f64] {
        &self.inventory
    }

    pub fn expected_inventory(&self) -> f64 {
        self.inventory.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }

    fn cdf(&self, x: usize) -> f64 {
        *self.demand_cdf.get(x).unwrap_or(&1.0)
    }

    /// `P{Ĩ_{t+L} > 0}` when ordering `q` units: `Σ_x P{Ĩ = x}·P{D ≤ x + q − 1}`.
    pub fn p3(&self, q: usize) -> f64 {
        self.inventory
            .iter()
            .enumerate()
            .filter(|(x, _)| x + q >= 1)
            .map(|(x, &p)| p * self.cdf(x + q - 1))
            .sum::<f64>()
            .min(1.0)
    }

    /// Smallest `q` with `p3(q) ≥ target`, searching up to `limit`.
    pub fn smallest_order_reaching(&self, target: f64, limit: usize) -> Option<usize> {
        if self.p3(0) >= target {
            return Some(0);
        }
        if self.p3(limit) < target {
            return None;
        }
        let (mut lo, mut hi) = (0, limit);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.p3(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Exact `P{Ĩ_{t+L} > 0}` for discrete demand and integer quantities.
pub fn exact_discrete_p3(state: &PipelineState, q: f64, pmf: &DiscretePmf) -> Result<f64, EvalError> {
    let q = as_index(q)?;
    Ok(DiscreteEvaluator::new(state, pmf)?.p3(q))
}

/// Exact `E[Ĩ_{t+L−1}]` for discrete demand and integer quantities.
pub fn exact_discrete_expected_inventory(state: &PipelineState, pmf: &DiscretePmf) -> Result<f64, EvalError> {
    Ok(DiscreteEvaluator::new(state, pmf)?.expected_inventory())
}

/// Demand expressed in exponential phases of a single rate, after removing a
/// deterministic per-period minimum `shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDemand {
    /// `(phase count, probability)`.
    pub phase_counts: Vec<(usize, f64)>,
    pub rate: f64,
    pub shift: f64,
}

impl PhaseDemand {
    fn mean_phases(&self) -> f64 {
        self.phase_counts.iter().map(|&(k, p)| k as f64 * p).sum()
    }
}

pub fn to_phase_demand(d: &DemandDistribution) -> Result<PhaseDemand, EvalError> {
    let (phase_counts, rate, shift) = match *d {
        DemandDistribution::ShiftedExponential { shift, rate } => (vec![(1, 1.0)], rate, shift),
        DemandDistribution::MixedErlangKm1K { k, q, rate } => {
            (vec![(k as usize - 1, q), (k as usize, 1.0 - q)], rate, 0.0)
        }
        DemandDistribution::MixedErlang1K { k, q, rate } => (vec![(1, q), (k as usize, 1.0 - q)], rate, 0.0),
        DemandDistribution::Hyperexponential { .. } => return Err(EvalError::UnsupportedFamily),
        DemandDistribution::Discrete(_) => return Err(EvalError::DiscreteDemand),
    };
    let phase_counts = phase_counts.into_iter().filter(|&(_, p)| p > 0.0).collect();
    Ok(PhaseDemand { phase_counts, rate, shift })
}

/// Poisson(`lambda`) truncated where the upper tail drops below 1e-12, renormalized.
fn poisson_truncated(lambda: f64, cap: usize) -> Result<Vec<f64>, EvalError> {
    let n = poisson_upper_bound(lambda, POISSON_TAIL);
    if n + 1 > cap {
        return Err(EvalError::PhaseOverflow { needed: n + 1, cap });
    }
    let mut p = poisson_pmfs(lambda, n);
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// State of the phase chain prepared once per decision epoch.
#[derive(Debug, Clone)]
pub struct PhaseEvaluator {
    demand: PhaseDemand,
    /// Distribution of phases left at the end of period `t+L−1`, as
    /// `survival[j] = P{B ≥ j}`.
    survival: Vec<f64>,
    expected_inventory: f64,
    cap: usize,
}

impl PhaseEvaluator {
    pub fn new(state: &PipelineState, pd: &PhaseDemand) -> Result<Self, EvalError> {
        Self::with_cap(state, pd, DEFAULT_PHASE_CAP)
    }

    pub fn with_cap(state: &PipelineState, pd: &PhaseDemand, cap: usize) -> Result<Self, EvalError> {
        check_quantity(state.on_hand)?;
        for &q in &state.outstanding {
            check_quantity(q)?;
            if q < pd.shift {
                return Err(EvalError::ShiftInfeasible { quantity: q, shift: pd.shift });
            }
        }
        let mu = pd.rate;
        // Stock below one period's minimum demand is gone by period end.
        let start = (state.on_hand - pd.shift).max(0.0);

        let mut a = poisson_truncated(mu * start, cap)?;
        let mut inventory = start;
        let mut b = Self::consume(&a, pd, &mut inventory);
        for &q in &state.outstanding {
            let q = q - pd.shift;
            let arrivals = poisson_truncated(mu * q, cap)?;
            if b.len() + arrivals.len() - 1 > cap {
                return Err(EvalError::PhaseOverflow { needed: b.len() + arrivals.len() - 1, cap });
            }
            a = convolve(&b, &arrivals);
            inventory += q;
            b = Self::consume(&a, pd, &mut inventory);
        }
        let mut survival = vec![0.0; b.len() + 1];
        for j in (0..b.len()).rev() {
            survival[j] = survival[j + 1] + b[j];
        }
        Ok(PhaseEvaluator {
            demand: pd.clone(),
            survival,
            expected_inventory: inventory.max(0.0),
            cap,
        })
    }

    /// `B = (A − K)⁺`; updates the running `E[Ĩ]` by the balance
    /// `E[Ĩ] += −E[K]/μ + E[(K − A)⁺]/μ` (the arrival is added by the caller).
    fn consume(a: &[f64], pd: &PhaseDemand, inventory: &mut f64) -> Vec<f64> {
        let mut b = vec![0.0; a.len()];
        let mut shortfall = 0.0;
        let mut top = 0;
        for &(k, pk) in &pd.phase_counts {
            for (j, &pa) in a.iter().enumerate() {
                if j >= k {
                    b[j - k] += pk * pa;
                    top = top.max(j - k);
                } else {
                    b[0] += pk * pa;
                    shortfall += pk * pa * (k - j) as f64;
                }
            }
        }
        b.truncate(top + 1);
        *inventory += (shortfall - pd.mean_phases()) / pd.rate;
        b
    }

    fn survival(&self, j: usize) -> f64 {
        *self.survival.get(j).unwrap_or(&0.0)
    }

    /// Exact `E[Ĩ_{t+L−1}]`.
    pub fn expected_inventory(&self) -> f64 {
        self.expected_inventory
    }

    /// Exact `P{Ĩ_{t+L} > 0}` when ordering `q`.
    pub fn p3(&self, q: f64) -> Result<f64, EvalError> {
        check_quantity(q)?;
        let pd = &self.demand;
        if q < pd.shift {
            return Err(EvalError::ShiftInfeasible { quantity: q, shift: pd.shift });
        }
        let arrivals = poisson_truncated(pd.rate * (q - pd.shift), self.cap)?;
        // P{B + N ≥ k} = Σ_n P{N = n}·P{B ≥ k − n}
        let mut p = 0.0;
        for &(k, pk) in &pd.phase_counts {
            let mut s = 0.0;
            for (n, &pn) in arrivals.iter().enumerate() {
                s += pn * if n >= k { 1.0 } else { self.survival(k - n) };
            }
            p += pk * s;
        }
        Ok(p.clamp(0.0, 1.0))
    }

    /// Largest phase index with positive mass plus one.
    pub fn support_len(&self) -> usize {
        self.survival.len() - 1
    }
}

/// Exact `P{Ĩ_{t+L} > 0}` for single-rate phase-type demand.
pub fn exact_phase_p3(state: &PipelineState, q: f64, pd: &PhaseDemand) -> Result<f64, EvalError> {
    PhaseEvaluator::new(state, pd)?.p3(q)
}

/// Exact `E[Ĩ_{t+L−1}]` for single-rate phase-type demand.
pub fn exact_phase_expected_inventory(state: &PipelineState, pd: &PhaseDemand) -> Result<f64, EvalError> {
    Ok(PhaseEvaluator::new(state, pd)?.expected_inventory())
}
