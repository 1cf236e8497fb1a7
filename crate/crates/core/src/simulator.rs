//! Period-by-period simulation of the lost-sales system.
//!
//! Each period: the oldest pipeline order arrives, the policy orders, demand
//! is drawn, `Ĩ = (I − D)⁺` is carried over and `h·Ĩ + p·(D − I)⁺` is
//! charged. Demand comes from a path generated up front from the seed, so
//! every policy simulated with the same configuration sees the same demand.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DemandDistribution, DemandSampler};
use crate::policies::{order_quantity, CostParams, Policy, PolicyError};
use crate::state::PipelineState;

/// Relative drift of the running mean cost over the last tenth of the run
/// above which a run is flagged as possibly non-stationary.
pub const STATIONARITY_DRIFT: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("period {period}: {source}")]
    Policy { period: usize, source: PolicyError },
    #[error("need at least two stockouts, got {0}")]
    InsufficientStockouts(usize),
}

/// Warm-up used when none is given: 2,000 periods up to `L = 16`, 10,000 beyond.
pub fn default_warmup(lead_time: usize) -> usize {
    if lead_time <= 16 {
        2_000
    } else {
        10_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cost: CostParams,
    pub demand: DemandDistribution,
    /// Periods included in the statistics.
    pub horizon: usize,
    /// Periods simulated and discarded before `horizon`.
    pub warmup: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(cost: CostParams, demand: DemandDistribution, horizon: usize, seed: u64) -> Self {
        let warmup = default_warmup(cost.lead_time);
        SimConfig { cost, demand, horizon, warmup, seed }
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_periods(&self) -> usize {
        self.warmup + self.horizon
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be positive".into()));
        }
        if self.cost.lead_time == 0 {
            return Err(SimError::Config("lead time must be at least 1".into()));
        }
        Ok(())
    }

    /// Stock on hand before the first period: one period's mean demand.
    pub fn initial_on_hand(&self) -> f64 {
        let m = self.demand.mean();
        if self.demand.is_discrete() {
            m.round()
        } else {
            m
        }
    }
}

/// Demand for `len` periods from `seed`; a prefix of a longer path with the
/// same seed.
pub fn demand_path(d: &DemandDistribution, seed: u64, len: usize) -> Vec<f64> {
    let sampler = DemandSampler::new(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| sampler.sample(&mut rng)).collect()
}

/// Totals over the measured window, for flow-conservation checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTotals {
    /// On hand plus in transit when measurement starts.
    pub start_stock: f64,
    pub ordered: f64,
    pub demand: f64,
    pub lost: f64,
    /// On hand plus in transit when the run ends.
    pub end_stock: f64,
}

impl FlowTotals {
    /// `start + ordered − sold − end`; zero up to rounding.
    pub fn imbalance(&self) -> f64 {
        self.start_stock + self.ordered - (self.demand - self.lost) - self.end_stock
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub periods: usize,
    pub avg_cost: f64,
    pub avg_end_inventory: f64,
    pub avg_lost: f64,
    pub avg_demand: f64,
    /// Lost units over demanded units.
    pub lost_fraction: f64,
    /// Fraction of periods ending with `Ĩ > 0`.
    pub realized_p3: f64,
    pub order_mean: f64,
    pub order_cv: f64,
    /// Mean and mean square of the intervals between consecutive stockouts.
    pub t_mean: f64,
    pub t_msq: f64,
    pub n_stockouts: usize,
    pub stationarity_warning: bool,
    /// Orders computed by the backward approximation because the requested
    /// exact engine could not represent the state.
    pub fallbacks: usize,
    pub flow: FlowTotals,
}

/// Sample `E[T²]/E[T]` over the stockout intervals of a run.
pub fn optimality_ratio(stats: &SimStats) -> Result<f64, SimError> {
    if stats.n_stockouts < 2 {
        return Err(SimError::InsufficientStockouts(stats.n_stockouts));
    }
    Ok(stats.t_msq / stats.t_mean)
}

/// Per-period record of the measured window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub orders: Vec<f64>,
    pub end_inventory: Vec<f64>,
    pub lost: Vec<f64>,
}

pub fn simulate(pol: &Policy, cfg: &SimConfig) -> Result<SimStats, SimError> {
    let path = demand_path(&cfg.demand, cfg.seed, cfg.total_periods());
    simulate_on(pol, cfg, &path)
}

/// Simulates against a given demand path (its length must cover the run).
pub fn simulate_on(pol: &Policy, cfg: &SimConfig, demands: &[f64]) -> Result<SimStats, SimError> {
    run(pol, cfg, demands, None)
}

pub fn simulate_traced(pol: &Policy, cfg: &SimConfig, demands: &[f64]) -> Result<(SimStats, Trace), SimError> {
    let mut trace = Trace::default();
    let stats = run(pol, cfg, demands, Some(&mut trace))?;
    Ok((stats, trace))
}

fn run(pol: &Policy, cfg: &SimConfig, demands: &[f64], mut trace: Option<&mut Trace>) -> Result<SimStats, SimError> {
    cfg.validate()?;
    pol.validate().map_err(|source| SimError::Policy { period: 0, source })?;
    let total = cfg.total_periods();
    if demands.len() < total {
        return Err(SimError::Config(format!("demand path has {} periods, need {total}", demands.len())));
    }
    let lead = cfg.cost.lead_time;
    let (h, p) = (cfg.cost.h, cfg.cost.p);
    let discrete = cfg.demand.is_discrete();

    let mut pipeline: VecDeque<f64> = std::iter::repeat_n(0.0, lead).collect();
    let mut end_inventory = cfg.initial_on_hand();
    let mut state = PipelineState { on_hand: 0.0, outstanding: Vec::with_capacity(lead) };

    let (mut cost, mut inv, mut lost_sum, mut demand_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut positive_end = 0usize;
    let (mut order_mean, mut order_m2, mut order_sum) = (0.0, 0.0, 0.0);
    let mut fallbacks = 0usize;
    let mut last_stockout: Option<usize> = None;
    let (mut n_stockouts, mut t_sum, mut t_sq) = (0usize, 0.0, 0.0);
    let checkpoint = cfg.horizon - cfg.horizon / 10;
    let mut cost_at_checkpoint = None;
    let mut start_stock = 0.0;

    for (t, &d) in demands.iter().enumerate().take(total) {
        if t == cfg.warmup {
            start_stock = end_inventory + pipeline.iter().sum::<f64>();
        }
        let arrival = pipeline.pop_front().expect("pipeline holds L orders");
        let on_hand = end_inventory + arrival;
        state.on_hand = on_hand;
        state.outstanding.clear();
        state.outstanding.extend(pipeline.iter().copied());
        let order = order_quantity(pol, &state, &cfg.demand).map_err(|source| SimError::Policy { period: t, source })?;
        let q = order.quantity;
        pipeline.push_back(q);

        end_inventory = (on_hand - d).max(0.0);
        let lost = (d - on_hand).max(0.0);

        if t < cfg.warmup {
            continue;
        }
        let k = t - cfg.warmup;
        if k == checkpoint && k > 0 {
            cost_at_checkpoint = Some(cost / k as f64);
        }
        cost += h * end_inventory + p * lost;
        inv += end_inventory;
        lost_sum += lost;
        demand_sum += d;
        if end_inventory > 0.0 {
            positive_end += 1;
        }
        order_sum += q;
        let n = (k + 1) as f64;
        let delta = q - order_mean;
        order_mean += delta / n;
        order_m2 += delta * (q - order_mean);
        if order.fallback {
            fallbacks += 1;
        }
        let stockout = if discrete { lost > 0.0 } else { end_inventory == 0.0 };
        if stockout {
            if let Some(prev) = last_stockout {
                let gap = (k - prev) as f64;
                t_sum += gap;
                t_sq += gap * gap;
            }
            last_stockout = Some(k);
            n_stockouts += 1;
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.orders.push(q);
            tr.end_inventory.push(end_inventory);
            tr.lost.push(lost);
        }
    }

    let n = cfg.horizon as f64;
    let avg_cost = cost / n;
    let intervals = n_stockouts.saturating_sub(1) as f64;
    let order_var = if cfg.horizon > 1 { order_m2 / (n - 1.0) } else { 0.0 };
    let stationarity_warning = match cost_at_checkpoint {
        Some(c) if avg_cost > 0.0 => ((avg_cost - c) / avg_cost).abs() > STATIONARITY_DRIFT,
        _ => false,
    };
    Ok(SimStats {
        periods: cfg.horizon,
        avg_cost,
        avg_end_inventory: inv / n,
        avg_lost: lost_sum / n,
        avg_demand: demand_sum / n,
        lost_fraction: if demand_sum > 0.0 { lost_sum / demand_sum } else { 0.0 },
        realized_p3: positive_end as f64 / n,
        order_mean,
        order_cv: if order_mean > 0.0 { order_var.sqrt() / order_mean } else { 0.0 },
        t_mean: if intervals > 0.0 { t_sum / intervals } else { 0.0 },
        t_msq: if intervals > 0.0 { t_sq / intervals } else { 0.0 },
        n_stockouts,
        stationarity_warning,
        fallbacks,
        flow: FlowTotals {
            start_stock,
            ordered: order_sum,
            demand: demand_sum,
            lost: lost_sum,
            end_stock: end_inventory + pipeline.iter().sum::<f64>(),
        },
    })
}
