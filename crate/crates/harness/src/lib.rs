//! Experiment runner for the fixed-P3 lost-sales study.
//!
//! Suites of cells are optimized and evaluated policy by policy; results go
//! to a resumable CSV (one row per cell and policy) with a JSON manifest
//! alongside. The `fp3` binary is a thin command-line layer over this crate.

pub mod analysis;
pub mod cells;
pub mod config;
pub mod output;
pub mod run;
pub mod table;

use fp3_core::optimizer::OptError;
use fp3_core::policies::PolicyError;
use fp3_core::simulator::SimError;
use fp3_core::DistError;
use thiserror::Error;

pub use cells::{Cell, DemandSpec, Scale};
pub use output::{run_suite, SuiteReport};
pub use run::{run_cell, PolicyKind, Row, RunOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot parse {0}")]
    Parse(String),
    #[error("{0}")]
    Cell(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Optimization(#[from] OptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Zipkin,
    Xin,
    Grid,
    Sensitivity,
}

impl std::str::FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zipkin" => Ok(Suite::Zipkin),
            "xin" => Ok(Suite::Xin),
            "grid" => Ok(Suite::Grid),
            "sensitivity" => Ok(Suite::Sensitivity),
            _ => Err(HarnessError::Parse(format!("suite `{s}` (zipkin, xin, grid, sensitivity)"))),
        }
    }
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Zipkin => "zipkin",
            Suite::Xin => "xin",
            Suite::Grid => "grid",
            Suite::Sensitivity => "sensitivity",
        }
    }

    pub fn cells(&self, scale: Scale) -> Vec<Cell> {
        match self {
            Suite::Zipkin => cells::zipkin(),
            Suite::Xin => cells::xin(),
            Suite::Grid => cells::grid(scale),
            Suite::Sensitivity => cells::sensitivity(),
        }
    }

    /// Default policy set. The discrete suites have no FP3 heuristic; the
    /// sensitivity suite compares FP3 and PIL across families.
    pub fn policies(&self) -> Vec<PolicyKind> {
        use PolicyKind::*;
        match self {
            Suite::Zipkin | Suite::Xin => vec![Fp3, Pil, Bs, Co, Cbs],
            Suite::Grid => vec![Fp3, Fp3Heuristic, Pil, Bs, Co, Cbs],
            Suite::Sensitivity => vec![Fp3, Pil],
        }
    }
}

/// Evaluation run length: 10⁵ periods at desk scale, 10⁶ at full scale.
pub fn default_eval_horizon(scale: Scale) -> usize {
    match scale {
        Scale::Desk => 100_000,
        Scale::Full => 1_000_000,
    }
}

pub const DEFAULT_OPT_HORIZON: usize = 10_000;
