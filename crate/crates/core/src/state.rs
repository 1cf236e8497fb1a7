use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state entries must be finite and nonnegative")]
    Negative,
    #[error("lead time {lead_time} needs {expected} outstanding orders, got {got}")]
    Length { lead_time: usize, expected: usize, got: usize },
}

/// On-hand stock at an ordering epoch plus the orders still in transit.
///
/// `outstanding` holds the `L − 1` orders placed before this period and not
/// yet received, oldest first. The oldest arrives next period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub on_hand: f64,
    pub outstanding: Vec<f64>,
}

impl PipelineState {
    pub fn new(on_hand: f64, outstanding: Vec<f64>) -> Result<Self, StateError> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !ok(on_hand) || !outstanding.iter().all(|&x| ok(x)) {
            return Err(StateError::Negative);
        }
        Ok(PipelineState { on_hand, outstanding })
    }

    /// Zero stock, nothing in transit.
    pub fn empty(lead_time: usize) -> Self {
        PipelineState { on_hand: 0.0, outstanding: vec![0.0; lead_time.saturating_sub(1)] }
    }

    pub fn lead_time(&self) -> usize {
        self.outstanding.len() + 1
    }

    pub fn check_lead_time(&self, lead_time: usize) -> Result<(), StateError> {
        let expected = lead_time.saturating_sub(1);
        if self.outstanding.len() == expected {
            Ok(())
        } else {
            Err(StateError::Length { lead_time, expected, got: self.outstanding.len() })
        }
    }

    /// On-hand plus everything in transit.
    pub fn inventory_position(&self) -> f64 {
        self.on_hand + self.outstanding.iter().sum::<f64>()
    }

    pub fn is_integral(&self) -> bool {
        std::iter::once(&self.on_hand).chain(&self.outstanding).all(|x| x.fract() == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_and_position() {
        let s = PipelineState::new(3.0, vec![1.0, 3.0]).unwrap();
        assert_eq!(s.lead_time(), 3);
        assert_eq!(s.inventory_position(), 7.0);
        assert!(s.is_integral());
        assert!(s.check_lead_time(3).is_ok());
        assert!(s.check_lead_time(2).is_err());
        assert_eq!(PipelineState::new(-1.0, vec![]), Err(StateError::Negative));
        assert_eq!(PipelineState::empty(1).outstanding.len(), 0);
    }
}
