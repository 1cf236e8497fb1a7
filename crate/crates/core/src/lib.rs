//! Lost-sales inventory control with fixed-P3 ordering.
//!
//! Demand distributions and their phase-type refits, backward and forward
//! P3 recursions, exact engines for discrete and phase-type demand, the
//! ordering policies, a period-by-period simulator and simulation-based
//! policy optimizers.

pub mod distributions;
pub mod error;
pub mod exact;
pub mod optimizer;
pub mod p3_recursion;
mod phase;
pub mod policies;
mod search;
pub mod simulator;
pub mod state;

pub use distributions::{DemandDistribution, DemandMoments, DiscretePmf, DistError, Family, Overshoot};
pub use state::PipelineState;
