//! Run settings from a TOML key-value file. Command-line flags override it.
//!
//! ```toml
//! seed = 7
//! horizon = 100000          # evaluation periods
//! opt_horizon = 10000       # optimization periods
//! warmup = 2000             # omitted: 2000 for L <= 16, 10000 above
//! scale = "desk"            # or "full"
//! policies = "fp3,pil,bs,co,cbs"
//! evaluator = "backward"    # backward, forward, exact_discrete, exact_phase
//! fp3_mode = "cost_search"  # or "optimality_equation"
//! out = "results/grid.csv"
//! jobs = 4
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub opt_horizon: Option<usize>,
    pub warmup: Option<usize>,
    pub scale: Option<String>,
    pub policies: Option<String>,
    pub evaluator: Option<String>,
    pub fp3_mode: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }
}
