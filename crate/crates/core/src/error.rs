use thiserror::Error;

use crate::distributions::DistError;
use crate::state::StateError;

/// Failure of a service-level or expected-inventory evaluator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("this evaluator needs continuous demand")]
    DiscreteDemand,
    #[error("this evaluator needs discrete demand")]
    ContinuousDemand,
    #[error("the phase engine supports single-rate families only")]
    UnsupportedFamily,
    #[error("discrete evaluation needs integer state and order quantities")]
    NonIntegral,
    #[error("quantity {quantity} is below the per-period minimum demand {shift}")]
    ShiftInfeasible { quantity: f64, shift: f64 },
    #[error("phase state space needs {needed} phases, cap is {cap}")]
    PhaseOverflow { needed: usize, cap: usize },
    #[error("inventory support needs {needed} points, cap is {cap}")]
    SupportOverflow { needed: usize, cap: usize },
    #[error("quantity must be finite and nonnegative, got {0}")]
    InvalidQuantity(f64),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

pub(crate) fn check_quantity(q: f64) -> Result<(), EvalError> {
    if q >= 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(EvalError::InvalidQuantity(q))
    }
}
