//! Replenishment rules and the constant-order closed forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DemandDistribution, DemandMoments};
use crate::error::EvalError;
use crate::exact::{to_phase_demand, DiscreteEvaluator, PhaseEvaluator};
use crate::p3_recursion::{backward_p3, pil_expected_inventory, ForwardEvaluator};
use crate::search::increasing_root;
use crate::state::PipelineState;

/// Stop the order search once `|P3 − target|` is this small.
pub const P3_TOLERANCE: f64 = 1e-6;
/// ... or once the bracket is narrower than this fraction of mean demand.
pub const ORDER_WIDTH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Backward,
    Forward,
    ExactDiscrete,
    ExactPhase,
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Backward => "backward",
            Evaluator::Forward => "forward",
            Evaluator::ExactDiscrete => "exact_discrete",
            Evaluator::ExactPhase => "exact_phase",
        }
    }

    pub fn parse(s: &str) -> Option<Evaluator> {
        match s {
            "backward" => Some(Evaluator::Backward),
            "forward" => Some(Evaluator::Forward),
            "exact_discrete" | "discrete" => Some(Evaluator::ExactDiscrete),
            "exact_phase" | "phase" => Some(Evaluator::ExactPhase),
            _ => None,
        }
    }

    /// The exact engine when one applies, the backward scheme otherwise.
    pub fn default_for(d: &DemandDistribution) -> Evaluator {
        match d {
            DemandDistribution::Discrete(_) => Evaluator::ExactDiscrete,
            DemandDistribution::Hyperexponential { .. } => Evaluator::Backward,
            _ => Evaluator::ExactPhase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    BaseStock { level: f64 },
    ConstantOrder { quantity: f64 },
    CappedBaseStock { level: f64, cap: f64 },
    FixedP3 { target: f64, evaluator: Evaluator },
    ProjectedInventoryLevel { target: f64, evaluator: Evaluator },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(String),
    #[error("evaluator {evaluator:?} cannot be used with this demand")]
    EvaluatorMismatch { evaluator: Evaluator },
    #[error("no order reaches P3 target {0}")]
    Unreachable(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Policy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |what: &str, x: f64| Err(PolicyError::InvalidParameter(format!("{what} = {x}")));
        match *self {
            Policy::BaseStock { level } if !(level >= 0.0) => bad("base stock level", level),
            Policy::ConstantOrder { quantity } if !(quantity >= 0.0 && quantity.is_finite()) => {
                bad("order quantity", quantity)
            }
            Policy::CappedBaseStock { level, .. } if !(level >= 0.0) => bad("base stock level", level),
            Policy::CappedBaseStock { cap, .. } if !(cap >= 0.0) => bad("order cap", cap),
            Policy::FixedP3 { target, .. } if !(target > 0.0 && target < 1.0) => bad("P3 target", target),
            Policy::ProjectedInventoryLevel { target, .. } if !(target >= 0.0 && target.is_finite()) => {
                bad("inventory target", target)
            }
            _ => Ok(()),
        }
    }

    /// Short label used in tables.
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::BaseStock { .. } => "bs",
            Policy::ConstantOrder { .. } => "co",
            Policy::CappedBaseStock { .. } => "cbs",
            Policy::FixedP3 { .. } => "fp3",
            Policy::ProjectedInventoryLevel { .. } => "pil",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub h: f64,
    pub p: f64,
    pub lead_time: usize,
}

impl CostParams {
    pub fn new(h: f64, p: f64, lead_time: usize) -> Result<Self, PolicyError> {
        if !(h > 0.0) || !(p >= 0.0) || lead_time == 0 {
            return Err(PolicyError::InvalidParameter(format!("h = {h}, p = {p}, L = {lead_time}")));
        }
        Ok(CostParams { h, p, lead_time })
    }

    /// `(2p + h)/h`, the stockout-interval moment ratio at the optimum.
    pub fn optimality_ratio(&self) -> f64 {
        (2.0 * self.p + self.h) / self.h
    }
}

/// An order and whether it had to fall back from the requested exact engine
/// to the backward approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    pub quantity: f64,
    pub fallback: bool,
}

impl Order {
    fn plain(quantity: f64) -> Self {
        Order { quantity, fallback: false }
    }
}

fn base_stock_order(level: f64, state: &PipelineState) -> f64 {
    (level - state.inventory_position()).max(0.0)
}

fn mismatch(evaluator: Evaluator) -> PolicyError {
    PolicyError::EvaluatorMismatch { evaluator }
}

/// The order placed by `pol` in `state`.
pub fn order_quantity(pol: &Policy, state: &PipelineState, d: &DemandDistribution) -> Result<Order, PolicyError> {
    match *pol {
        Policy::BaseStock { level } => Ok(Order::plain(base_stock_order(level, state))),
        Policy::ConstantOrder { quantity } => Ok(Order::plain(quantity)),
        Policy::CappedBaseStock { level, cap } => Ok(Order::plain(base_stock_order(level, state).min(cap))),
        Policy::FixedP3 { target, evaluator } => fp3_order(target, evaluator, state, d),
        Policy::ProjectedInventoryLevel { target, evaluator } => {
            let (projected, fallback) = projected_inventory(evaluator, state, d)?;
            let mut q = (target - projected).max(0.0);
            if d.is_discrete() {
                q = q.round();
            }
            Ok(Order { quantity: q, fallback })
        }
    }
}

fn check_evaluator(evaluator: Evaluator, d: &DemandDistribution) -> Result<(), PolicyError> {
    let ok = match evaluator {
        Evaluator::Backward | Evaluator::Forward => !d.is_discrete(),
        Evaluator::ExactDiscrete => d.is_discrete(),
        Evaluator::ExactPhase => to_phase_demand(d).is_ok(),
    };
    if ok {
        Ok(())
    } else {
        Err(mismatch(evaluator))
    }
}

/// `E[Ĩ_{t+L−1}]` under the requested evaluator.
pub fn projected_inventory(
    evaluator: Evaluator,
    state: &PipelineState,
    d: &DemandDistribution,
) -> Result<(f64, bool), PolicyError> {
    check_evaluator(evaluator, d)?;
    match evaluator {
        Evaluator::Backward => Ok((pil_expected_inventory(state, d)?, false)),
        Evaluator::Forward => Ok((ForwardEvaluator::new(state, d)?.expected_inventory(), false)),
        Evaluator::ExactDiscrete => {
            let DemandDistribution::Discrete(pmf) = d else { unreachable!() };
            Ok((DiscreteEvaluator::new(state, pmf)?.expected_inventory(), false))
        }
        Evaluator::ExactPhase => {
            let pd = to_phase_demand(d)?;
            match PhaseEvaluator::new(state, &pd) {
                Ok(ev) => Ok((ev.expected_inventory(), false)),
                Err(EvalError::ShiftInfeasible { .. } | EvalError::PhaseOverflow { .. }) => {
                    Ok((pil_expected_inventory(state, d)?, true))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn solve_continuous(
    target: f64,
    mean: f64,
    f: impl FnMut(f64) -> Result<f64, EvalError>,
) -> Result<f64, PolicyError> {
    increasing_root(f, target, mean, P3_TOLERANCE, ORDER_WIDTH_TOLERANCE * mean)?
        .ok_or(PolicyError::Unreachable(target))
}

fn fp3_order(
    target: f64,
    evaluator: Evaluator,
    state: &PipelineState,
    d: &DemandDistribution,
) -> Result<Order, PolicyError> {
    check_evaluator(evaluator, d)?;
    let mean = d.mean();
    match evaluator {
        Evaluator::Backward => Ok(Order::plain(solve_continuous(target, mean, |q| backward_p3(state, q, d))?)),
        Evaluator::Forward => {
            let ev = ForwardEvaluator::new(state, d)?;
            Ok(Order::plain(solve_continuous(target, mean, |q| ev.p3(q))?))
        }
        Evaluator::ExactDiscrete => {
            let DemandDistribution::Discrete(pmf) = d else { unreachable!() };
            let ev = DiscreteEvaluator::new(state, pmf)?;
            let mut limit = (pmf.max_value() + 1).max(8);
            loop {
                if let Some(q) = ev.smallest_order_reaching(target, limit) {
                    return Ok(Order::plain(q as f64));
                }
                if limit > 1 << 24 {
                    return Err(PolicyError::Unreachable(target));
                }
                limit *= 2;
            }
        }
        Evaluator::ExactPhase => {
            let pd = to_phase_demand(d)?;
            let backward = || -> Result<Order, PolicyError> {
                let q = solve_continuous(target, mean, |q| backward_p3(state, q, d))?;
                Ok(Order { quantity: q, fallback: true })
            };
            let ev = match PhaseEvaluator::new(state, &pd) {
                Ok(ev) => ev,
                Err(EvalError::ShiftInfeasible { .. } | EvalError::PhaseOverflow { .. }) => return backward(),
                Err(e) => return Err(e.into()),
            };
            // Orders below the minimum demand cannot be represented in phases.
            let shift = pd.shift;
            match ev.p3(shift) {
                Ok(p) if p >= target && shift > 0.0 => return backward(),
                Ok(_) => {}
                Err(EvalError::PhaseOverflow { .. }) => return backward(),
                Err(e) => return Err(e.into()),
            }
            let solved = solve_continuous(target, mean, |x| ev.p3(shift + x).map(|p| p.max(0.0)));
            match solved {
                Ok(x) => Ok(Order::plain(shift + x)),
                Err(PolicyError::Eval(EvalError::PhaseOverflow { .. })) => backward(),
                Err(e) => Err(e),
            }
        }
    }
}

/// Constant-order optimum under shifted-exponential demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantOrderOptimum {
    pub quantity: f64,
    pub cost: f64,
    pub p3: f64,
}

/// `Q* = m(1 − c√(h/(2p+h)))`, its long-run cost, and `P3* = 1 − √(h/(2p+h))`.
pub fn co_closed_form(cp: &CostParams, m: &DemandMoments) -> Result<ConstantOrderOptimum, PolicyError> {
    if m.cv > 1.0 {
        return Err(PolicyError::InvalidParameter(format!("closed form needs cv ≤ 1, got {}", m.cv)));
    }
    let root = (cp.h / (2.0 * cp.p + cp.h)).sqrt();
    let mean = m.mean;
    let sigma = m.cv * mean;
    let quantity = mean * (1.0 - m.cv * root);
    let gap = mean - quantity;
    let cost = cp.h * (quantity - (mean - sigma)).powi(2) / (2.0 * gap) + cp.p * gap;
    Ok(ConstantOrderOptimum { quantity, cost, p3: 1.0 - root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn base_stock_arithmetic() {
        let s = PipelineState::new(3.0, vec![1.0, 3.0]).unwrap();
        let d = DemandDistribution::exponential(1.0).unwrap();
        let q = order_quantity(&Policy::BaseStock { level: 10.0 }, &s, &d).unwrap();
        assert_eq!(q.quantity, 3.0);
        let q = order_quantity(&Policy::CappedBaseStock { level: 10.0, cap: 2.0 }, &s, &d).unwrap();
        assert_eq!(q.quantity, 2.0);
        let q = order_quantity(&Policy::BaseStock { level: 5.0 }, &s, &d).unwrap();
        assert_eq!(q.quantity, 0.0);
    }

    #[test]
    fn fp3_with_huge_stock_orders_nothing() {
        let s = PipelineState::new(1e3, vec![]).unwrap();
        let d = DemandDistribution::exponential(1.0).unwrap();
        for ev in [Evaluator::Backward, Evaluator::Forward] {
            let q = order_quantity(&Policy::FixedP3 { target: 0.9, evaluator: ev }, &s, &d).unwrap();
            assert_eq!(q.quantity, 0.0);
        }
    }

    #[test]
    fn fp3_inverts_single_period_cdf() {
        let d = DemandDistribution::exponential(4.0).unwrap();
        let s = PipelineState::empty(1);
        let qbar = 6.3;
        let target = d.cdf(qbar);
        for ev in [Evaluator::Backward, Evaluator::Forward, Evaluator::ExactPhase] {
            let q = order_quantity(&Policy::FixedP3 { target, evaluator: ev }, &s, &d).unwrap();
            assert!((q.quantity - qbar).abs() < 1e-4, "{ev:?}: {}", q.quantity);
        }
    }

    #[test]
    fn evaluator_mismatches_are_errors() {
        let hy = DemandDistribution::Hyperexponential { q: 0.5, rate1: 1.0, rate2: 2.0 };
        let s = PipelineState::empty(1);
        let pol = Policy::FixedP3 { target: 0.9, evaluator: Evaluator::ExactPhase };
        assert_eq!(
            order_quantity(&pol, &s, &hy),
            Err(PolicyError::EvaluatorMismatch { evaluator: Evaluator::ExactPhase })
        );
        let pmf = DemandDistribution::Discrete(crate::DiscretePmf::constant(1));
        let pol = Policy::FixedP3 { target: 0.9, evaluator: Evaluator::Backward };
        assert!(matches!(order_quantity(&pol, &s, &pmf), Err(PolicyError::EvaluatorMismatch { .. })));
    }

    #[test]
    fn co_closed_form_examples() {
        let cp = CostParams::new(1.0, 9.0, 1).unwrap();
        let m = DemandMoments::new(10.0, 0.5).unwrap();
        let opt = co_closed_form(&cp, &m).unwrap();
        assert_relative_eq!(opt.quantity, 8.85292, epsilon = 1e-5);
        assert_relative_eq!(opt.cost, 16.7945, epsilon = 1e-4);
        assert_relative_eq!(opt.p3, 0.770584, epsilon = 1e-6);

        let free = co_closed_form(&CostParams::new(1.0, 0.0, 1).unwrap(), &m).unwrap();
        assert_eq!(free.p3, 0.0);

        let a = co_closed_form(&cp, &DemandMoments::new(10.0, 0.25).unwrap()).unwrap();
        let b = co_closed_form(&cp, &DemandMoments::new(10.0, 0.75).unwrap()).unwrap();
        assert_eq!(a.p3, b.p3);
        assert!(co_closed_form(&cp, &DemandMoments::new(10.0, 1.5).unwrap()).is_err());
    }

    #[test]
    fn pil_orders_are_nonnegative_and_zero_at_zero_target() {
        let d = DemandDistribution::exponential(1.0).unwrap();
        let s = PipelineState::new(2.0, vec![1.0]).unwrap();
        for ev in [Evaluator::Backward, Evaluator::Forward, Evaluator::ExactPhase] {
            let pol = Policy::ProjectedInventoryLevel { target: 0.0, evaluator: ev };
            assert_eq!(order_quantity(&pol, &s, &d).unwrap().quantity, 0.0);
            let pol = Policy::ProjectedInventoryLevel { target: 3.0, evaluator: ev };
            assert!(order_quantity(&pol, &s, &d).unwrap().quantity > 0.0);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(Policy::FixedP3 { target: 1.0, evaluator: Evaluator::Backward }.validate().is_err());
        assert!(Policy::ConstantOrder { quantity: -1.0 }.validate().is_err());
        assert!(Policy::CappedBaseStock { level: 5.0, cap: f64::INFINITY }.validate().is_ok());
        assert!(Policy::BaseStock { level: f64::INFINITY }.validate().is_ok());
    }
}
