//! Simulation-based policy optimization under common random numbers.
//!
//! Searches run on one fixed demand path (the optimization run); the chosen
//! parameters are then re-simulated on an independent, usually longer path
//! (the evaluation run) whose statistics are reported.

use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::{co_closed_form, Evaluator, Policy};
use crate::search::golden_section;
use crate::simulator::{demand_path, optimality_ratio, simulate_on, SimConfig, SimError, SimStats};
use crate::DemandMoments;

/// Relative tolerance on `E[T²]/E[T]` against `(2p + h)/h`.
pub const RATIO_TOLERANCE: f64 = 0.02;
/// Half-width of the initial P3 bracket around the constant-order optimum.
pub const P3_BRACKET_HALF_WIDTH: f64 = 0.15;
pub const P3_MIN: f64 = 0.5;
pub const P3_MAX: f64 = 0.9999;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("stockout ratio does not cross {target} on [{lo}, {hi}] (ratios {ratio_lo}, {ratio_hi})")]
    Bracket { target: f64, lo: f64, hi: f64, ratio_lo: f64, ratio_hi: f64 },
    #[error("optimality-equation search needs continuous demand")]
    DiscreteDemand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fp3Mode {
    /// Solve `E[T²]/E[T] = (2p + h)/h` by bisection on the target.
    OptimalityEquation,
    /// Minimize simulated cost over the target.
    CostSearch,
}

/// An optimized policy with its search and evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub policy: Policy,
    /// Cost of `policy` on the optimization path.
    pub search_cost: f64,
    /// Statistics of `policy` on the evaluation path.
    pub stats: SimStats,
    /// Simulations run by the search.
    pub simulations: usize,
    /// `E[T²]/E[T]` on the optimization path, for FP3 optimality-equation runs.
    pub search_ratio: Option<f64>,
}

/// Optimizes the policies of one cell (cost parameters plus demand).
pub struct Optimizer {
    opt: SimConfig,
    eval: SimConfig,
    opt_path: OnceCell<Vec<f64>>,
    eval_path: OnceCell<Vec<f64>>,
    simulations: RefCell<usize>,
}

impl Optimizer {
    /// `opt` drives the searches; the evaluation run uses the same cell with
    /// `eval_horizon` periods from `eval_seed`.
    pub fn new(opt: SimConfig, eval_horizon: usize, eval_seed: u64) -> Self {
        let eval = opt.clone().with_horizon(eval_horizon).with_seed(eval_seed);
        Optimizer { opt, eval, opt_path: OnceCell::new(), eval_path: OnceCell::new(), simulations: RefCell::new(0) }
    }

    pub fn opt_config(&self) -> &SimConfig {
        &self.opt
    }

    pub fn eval_config(&self) -> &SimConfig {
        &self.eval
    }

    fn opt_path(&self) -> &[f64] {
        self.opt_path.get_or_init(|| demand_path(&self.opt.demand, self.opt.seed, self.opt.total_periods()))
    }

    fn eval_path(&self) -> &[f64] {
        self.eval_path.get_or_init(|| demand_path(&self.eval.demand, self.eval.seed, self.eval.total_periods()))
    }

    /// Simulates on the optimization path.
    pub fn search_run(&self, pol: &Policy) -> Result<SimStats, OptError> {
        *self.simulations.borrow_mut() += 1;
        Ok(simulate_on(pol, &self.opt, self.opt_path())?)
    }

    /// Simulates on the evaluation path.
    pub fn evaluate(&self, pol: &Policy) -> Result<SimStats, OptError> {
        Ok(simulate_on(pol, &self.eval, self.eval_path())?)
    }

    fn take_simulations(&self) -> usize {
        std::mem::take(&mut *self.simulations.borrow_mut())
    }

    fn finish(&self, policy: Policy, search_cost: f64, search_ratio: Option<f64>) -> Result<Optimum, OptError> {
        let stats = self.evaluate(&policy)?;
        Ok(Optimum { policy, search_cost, stats, simulations: self.take_simulations(), search_ratio })
    }

    fn mean(&self) -> f64 {
        self.opt.demand.mean()
    }

    fn discrete(&self) -> bool {
        self.opt.demand.is_discrete()
    }

    /// Upper end of the base-stock search range, `(L + 2)·m·(1 + 5·cv)`.
    pub fn base_stock_range(&self) -> f64 {
        let l = self.opt.cost.lead_time as f64;
        (l + 2.0) * self.mean() * (1.0 + 5.0 * self.opt.demand.cv())
    }

    /// Minimizes `cost(make(x))` over `[lo, hi]`: golden section to width
    /// `tol`, then steps of `tol` while a neighbour is cheaper. Integer
    /// problems use `tol = 1` on integer points. A tie keeps the current point,
    /// so flat stretches (a binding cap, say) are not walked step by step.
    fn minimize(
        &self,
        lo: f64,
        hi: f64,
        tol: f64,
        integer: bool,
        make: impl Fn(f64) -> Policy,
    ) -> Result<(f64, f64), OptError> {
        let memo: RefCell<HashMap<u64, f64>> = RefCell::new(HashMap::new());
        let cost = |x: f64| -> Result<f64, OptError> {
            let x = if integer { x.round() } else { x }.clamp(lo, hi);
            if let Some(&c) = memo.borrow().get(&x.to_bits()) {
                return Ok(c);
            }
            let c = self.search_run(&make(x))?.avg_cost;
            memo.borrow_mut().insert(x.to_bits(), c);
            Ok(c)
        };
        let (lo, hi) = if integer { (lo.ceil(), hi.floor().max(lo.ceil())) } else { (lo, hi) };
        let (mut x, mut fx) = if integer {
            let (x, _) = golden_section(&cost, lo, hi, 2.0)?;
            let x = x.round();
            (x, cost(x)?)
        } else {
            golden_section(&cost, lo, hi, tol)?
        };
        let step = if integer { 1.0 } else { tol };
        for _ in 0..10_000 {
            let left = (x - step).max(lo);
            let right = (x + step).min(hi);
            let (fl, fr) = (cost(left)?, cost(right)?);
            if fl < fx {
                x = left;
                fx = fl;
            } else if fr < fx {
                x = right;
                fx = fr;
            } else {
                break;
            }
        }
        Ok((x, fx))
    }

    pub fn base_stock(&self) -> Result<Optimum, OptError> {
        let (s, c) = self.minimize(0.0, self.base_stock_range(), 1e-3 * self.mean(), self.discrete(), |s| {
            Policy::BaseStock { level: s }
        })?;
        self.finish(Policy::BaseStock { level: s }, c, None)
    }

    pub fn constant_order(&self) -> Result<Optimum, OptError> {
        let m = self.mean();
        let (q, c) = self.minimize(0.0, m * (1.0 - 1e-9), 1e-3 * m, false, |q| Policy::ConstantOrder { quantity: q })?;
        self.finish(Policy::ConstantOrder { quantity: q }, c, None)
    }

    /// Best base-stock level for a fixed cap.
    fn cbs_inner(&self, cap: f64) -> Result<(f64, f64), OptError> {
        self.minimize(0.0, self.base_stock_range(), 1e-3 * self.mean(), self.discrete(), |s| {
            Policy::CappedBaseStock { level: s, cap }
        })
    }

    /// Grid over the cap `{0.05, 0.10, …, 1.5}·m` plus an uncapped sentinel,
    /// inner search on the level, then half-step refinement around the best
    /// finite cap until the step is below `0.01·m`.
    pub fn capped_base_stock(&self) -> Result<Optimum, OptError> {
        let m = self.mean();
        let mut best = (f64::INFINITY, 0.0, f64::INFINITY);
        let mut step = 0.05 * m;
        for i in 1..=30 {
            let cap = i as f64 * step;
            let (s, c) = self.cbs_inner(cap)?;
            if c < best.2 {
                best = (cap, s, c);
            }
        }
        let (s, c) = self.cbs_inner(f64::INFINITY)?;
        if c < best.2 {
            best = (f64::INFINITY, s, c);
        }
        if best.0.is_finite() {
            while step >= 0.01 * m {
                step /= 2.0;
                let centre = best.0;
                for cap in [centre - step, centre + step] {
                    if cap <= 0.0 {
                        continue;
                    }
                    let (s, c) = self.cbs_inner(cap)?;
                    if c < best.2 {
                        best = (cap, s, c);
                    }
                }
            }
        }
        self.finish(Policy::CappedBaseStock { level: best.1, cap: best.0 }, best.2, None)
    }

    /// The target is the stock expected at the end of each period, so the
    /// optimum `x*` pays about `h·x*` in holding alone and cannot cost more
    /// than the run at `x = m`. That caps the range at `2·C(m)/h`, with
    /// slack for evaluator error, below the structural `(L + 1)·m`.
    pub fn pil(&self, evaluator: Evaluator) -> Result<Optimum, OptError> {
        let m = self.mean();
        let make = |x: f64| Policy::ProjectedInventoryLevel { target: x, evaluator };
        let at_mean = self.search_run(&make(m))?.avg_cost;
        let hi = ((self.opt.cost.lead_time as f64 + 1.0) * m).min((2.0 * at_mean / self.opt.cost.h).max(m));
        let (x, c) = self.minimize(0.0, hi, 1e-3 * m, false, make)?;
        self.finish(make(x), c, None)
    }

    pub fn fp3(&self, mode: Fp3Mode, evaluator: Evaluator) -> Result<Optimum, OptError> {
        match mode {
            Fp3Mode::OptimalityEquation => self.fp3_optimality(evaluator),
            Fp3Mode::CostSearch => self.fp3_cost_search(evaluator),
        }
    }

    fn fp3_cost_search(&self, evaluator: Evaluator) -> Result<Optimum, OptError> {
        let make = |t: f64| Policy::FixedP3 { target: t, evaluator };
        let (t, c) = self.minimize(0.3, P3_MAX, 1e-3, false, make)?;
        self.finish(make(t), c, None)
    }

    /// `E[T²]/E[T]` of the FP3 run at `target`, `+∞` when the run has fewer
    /// than two stockouts.
    ///
    /// Stockouts occur in a fraction `1 − P3` of periods, so `E[T] = 1/(1 − P3)`
    /// and `E[T²]/E[T] ≥ E[T]`. The sample ratio is raised to that bound: a
    /// sparse run whose few stockouts happen to be adjacent otherwise reports
    /// a ratio near 1 at targets close to one.
    fn ratio_at(&self, target: f64, evaluator: Evaluator) -> Result<(f64, f64), OptError> {
        let stats = self.search_run(&Policy::FixedP3 { target, evaluator })?;
        let ratio = match optimality_ratio(&stats) {
            Ok(r) => r.max(1.0 / (1.0 - stats.realized_p3)),
            Err(SimError::InsufficientStockouts(_)) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        Ok((ratio, stats.avg_cost))
    }

    /// Initial P3 bracket: the constant-order optimum ± 0.15, clipped.
    pub fn p3_bracket(&self) -> (f64, f64) {
        let cost = self.opt.cost;
        let root = (cost.h / (2.0 * cost.p + cost.h)).sqrt();
        let centre = DemandMoments::new(self.mean(), self.opt.demand.cv().min(1.0))
            .ok()
            .and_then(|m| co_closed_form(&cost, &m).ok())
            .map_or(1.0 - root, |o| o.p3);
        ((centre - P3_BRACKET_HALF_WIDTH).max(P3_MIN), (centre + P3_BRACKET_HALF_WIDTH).min(P3_MAX))
    }

    fn fp3_optimality(&self, evaluator: Evaluator) -> Result<Optimum, OptError> {
        if self.discrete() {
            return Err(OptError::DiscreteDemand);
        }
        let goal = self.opt.cost.optimality_ratio();
        let close = |r: f64| (r / goal - 1.0).abs() <= RATIO_TOLERANCE;
        let (mut lo, mut hi) = self.p3_bracket();
        let (mut r_lo, mut c_lo) = self.ratio_at(lo, evaluator)?;
        let (mut r_hi, mut c_hi) = self.ratio_at(hi, evaluator)?;
        if r_lo > goal && lo > P3_MIN {
            lo = P3_MIN;
            (r_lo, c_lo) = self.ratio_at(lo, evaluator)?;
        }
        if r_hi < goal && hi < P3_MAX {
            hi = P3_MAX;
            (r_hi, c_hi) = self.ratio_at(hi, evaluator)?;
        }
        let make = |t: f64| Policy::FixedP3 { target: t, evaluator };
        if close(r_lo) {
            return self.finish(make(lo), c_lo, Some(r_lo));
        }
        if close(r_hi) {
            return self.finish(make(hi), c_hi, Some(r_hi));
        }
        if r_lo > goal || r_hi < goal {
            return Err(OptError::Bracket { target: goal, lo, hi, ratio_lo: r_lo, ratio_hi: r_hi });
        }
        // Closest point seen, by relative ratio error.
        let score = |r: f64| (r / goal - 1.0).abs();
        let mut best = if score(r_lo) <= score(r_hi) { (lo, r_lo, c_lo) } else { (hi, r_hi, c_hi) };
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let (r, c) = self.ratio_at(mid, evaluator)?;
            if score(r) < score(best.1) {
                best = (mid, r, c);
            }
            if close(r) || hi - lo < 1e-5 {
                break;
            }
            if r < goal {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.finish(make(best.0), best.2, Some(best.1))
    }

    /// P3 realized by the cheaper of the optimized base-stock and
    /// constant-order policies (ties go to base stock).
    pub fn fp3_heuristic_target(&self) -> Result<(f64, Optimum, Optimum), OptError> {
        let bs = self.base_stock()?;
        let co = self.constant_order()?;
        let target = if co.stats.avg_cost < bs.stats.avg_cost { co.stats.realized_p3 } else { bs.stats.realized_p3 };
        Ok((target, bs, co))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::CostParams;
    use crate::{DemandDistribution, DiscretePmf};

    #[test]
    fn deterministic_demand_base_stock() {
        let d = DemandDistribution::Discrete(DiscretePmf::constant(1));
        let cfg = SimConfig::new(CostParams::new(1.0, 9.0, 1).unwrap(), d, 200, 1).with_warmup(10);
        let opt = Optimizer::new(cfg, 200, 2);
        let bs = opt.base_stock().unwrap();
        assert_eq!(bs.policy, Policy::BaseStock { level: 2.0 });
        assert_eq!(bs.stats.avg_cost, 0.0);
    }

    #[test]
    fn p3_bracket_is_clipped() {
        let d = DemandDistribution::exponential(1.0).unwrap();
        let opt = Optimizer::new(SimConfig::new(CostParams::new(1.0, 199.0, 1).unwrap(), d, 100, 1), 100, 2);
        let (lo, hi) = opt.p3_bracket();
        assert!(lo >= P3_MIN && hi <= P3_MAX && lo < hi);
    }
}
