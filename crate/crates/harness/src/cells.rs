//! Experiment cells and the suites built from them.

use std::fmt;
use std::str::FromStr;

use fp3_core::policies::CostParams;
use fp3_core::{DemandDistribution, DemandMoments, DiscretePmf, Family};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Demand as written on the command line and in output files:
/// `poisson:5`, `geometric:5`, or `<family>:<mean>:<cv>` with family one of
/// `se`, `me`, `me1k`, `hy`, or `fit` for the default family at that cv.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DemandSpec {
    Poisson { mean: f64 },
    Geometric { mean: f64 },
    Fitted { mean: f64, cv: f64, family: Family },
}

impl DemandSpec {
    pub fn fitted(mean: f64, cv: f64) -> Self {
        DemandSpec::Fitted { mean, cv, family: Family::default_for(cv) }
    }

    pub fn build(&self) -> Result<DemandDistribution, HarnessError> {
        let d = match *self {
            DemandSpec::Poisson { mean } => DemandDistribution::Discrete(DiscretePmf::poisson(mean)?),
            DemandSpec::Geometric { mean } => DemandDistribution::Discrete(DiscretePmf::geometric(mean)?),
            DemandSpec::Fitted { mean, cv, family } => DemandDistribution::fit(DemandMoments::new(mean, cv)?, Some(family))?,
        };
        Ok(d)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DemandSpec::Poisson { mean } | DemandSpec::Geometric { mean } | DemandSpec::Fitted { mean, .. } => mean,
        }
    }

    pub fn cv(&self) -> f64 {
        match *self {
            DemandSpec::Poisson { mean } => 1.0 / mean.sqrt(),
            // Geometric on {0, 1, …} with mean m: variance m(1 + m).
            DemandSpec::Geometric { mean } => ((1.0 + mean) / mean).sqrt(),
            DemandSpec::Fitted { cv, .. } => cv,
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, DemandSpec::Fitted { .. })
    }
}

impl fmt::Display for DemandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DemandSpec::Poisson { mean } => write!(f, "poisson:{mean}"),
            DemandSpec::Geometric { mean } => write!(f, "geometric:{mean}"),
            DemandSpec::Fitted { mean, cv, family } => write!(f, "{}:{mean}:{cv}", family.short_name()),
        }
    }
}

impl FromStr for DemandSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Parse(format!("demand `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).and_then(|x| x.parse::<f64>().ok()).ok_or_else(bad);
        match (parts[0], parts.len()) {
            ("poisson", 2) => Ok(DemandSpec::Poisson { mean: num(1)? }),
            ("geometric", 2) => Ok(DemandSpec::Geometric { mean: num(1)? }),
            ("fit", 3) => Ok(DemandSpec::fitted(num(1)?, num(2)?)),
            (name, 3) => {
                let family = Family::parse(name).ok_or_else(bad)?;
                Ok(DemandSpec::Fitted { mean: num(1)?, cv: num(2)?, family })
            }
            _ => Err(bad()),
        }
    }
}

/// One experimental setting: demand, costs and lead time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub suite: String,
    pub id: String,
    pub demand: DemandSpec,
    pub h: f64,
    pub p: f64,
    pub lead_time: usize,
}

impl Cell {
    pub fn new(suite: &str, demand: DemandSpec, p: f64, lead_time: usize) -> Self {
        let id = format!("{demand}/p{p}/L{lead_time}");
        Cell { suite: suite.to_string(), id, demand, h: 1.0, p, lead_time }
    }

    pub fn cost(&self) -> Result<CostParams, HarnessError> {
        Ok(CostParams::new(self.h, self.p, self.lead_time)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err(HarnessError::Parse(format!("scale `{s}` (desk or full)"))),
        }
    }
}

fn discrete_cells(suite: &str, leads: &[usize]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for demand in [DemandSpec::Poisson { mean: 5.0 }, DemandSpec::Geometric { mean: 5.0 }] {
        for p in [4.0, 9.0, 19.0, 39.0] {
            for &l in leads {
                cells.push(Cell::new(suite, demand, p, l));
            }
        }
    }
    cells
}

/// Poisson and geometric demand with mean 5, p ∈ {4, 9, 19, 39}, L ∈ 1..=4.
pub fn zipkin() -> Vec<Cell> {
    discrete_cells("zipkin", &[1, 2, 3, 4])
}

/// The Zipkin demand and cost settings at L ∈ {6, 8, 10}.
pub fn xin() -> Vec<Cell> {
    discrete_cells("xin", &[6, 8, 10])
}

pub const FULL_GRID_P: [f64; 6] = [4.0, 9.0, 19.0, 49.0, 99.0, 199.0];
pub const FULL_GRID_L: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
pub const FULL_GRID_CV: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
pub const DESK_GRID_P: [f64; 3] = [4.0, 19.0, 199.0];
pub const DESK_GRID_L: [usize; 4] = [1, 4, 16, 64];
pub const DESK_GRID_CV: [f64; 4] = [0.25, 1.0, 1.5, 2.0];

/// Continuous demand with mean 10: mixed Erlang for cv ≤ 1, hyperexponential
/// above. Full scale is 336 cells, desk scale 48.
pub fn grid(scale: Scale) -> Vec<Cell> {
    let (ps, ls, cvs): (&[f64], &[usize], &[f64]) = match scale {
        Scale::Full => (&FULL_GRID_P, &FULL_GRID_L, &FULL_GRID_CV),
        Scale::Desk => (&DESK_GRID_P, &DESK_GRID_L, &DESK_GRID_CV),
    };
    let mut cells = Vec::new();
    for &cv in cvs {
        for &p in ps {
            for &l in ls {
                cells.push(Cell::new("grid", DemandSpec::fitted(10.0, cv), p, l));
            }
        }
    }
    cells
}

/// Families compared at matched moments: shifted exponential and mixed
/// Erlang for cv ≤ 1, hyperexponential and exponential/Erlang-k above.
pub fn sensitivity_families(cv: f64) -> [Family; 2] {
    if cv < 1.0 {
        [Family::ShiftedExponential, Family::MixedErlangKm1K]
    } else {
        [Family::Hyperexponential, Family::MixedErlang1K]
    }
}

/// cv ∈ {0.5, 1, 1.5, 2} × p ∈ {4, 19, 99} × L ∈ {1, 2, 4}, each under two
/// families with mean 10. Includes cv = 2, p = 19, L = 2.
pub fn sensitivity() -> Vec<Cell> {
    let mut cells = Vec::new();
    for cv in [0.5, 1.0, 1.5, 2.0] {
        for p in [4.0, 19.0, 99.0] {
            for l in [1, 2, 4] {
                for family in sensitivity_families(cv) {
                    cells.push(Cell::new("sensitivity", DemandSpec::Fitted { mean: 10.0, cv, family }, p, l));
                }
            }
        }
    }
    cells
}

/// Lookup-table cells: shifted exponential for cv ≤ 1, hyperexponential above.
pub fn lookup(cvs: &[f64], ps: &[f64], leads: &[usize]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &cv in cvs {
        let family = if cv <= 1.0 { Family::ShiftedExponential } else { Family::Hyperexponential };
        for &p in ps {
            for &l in leads {
                cells.push(Cell::new("table", DemandSpec::Fitted { mean: 10.0, cv, family }, p, l));
            }
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_sizes() {
        assert_eq!(zipkin().len(), 32);
        assert_eq!(xin().len(), 24);
        assert_eq!(grid(Scale::Desk).len(), 48);
        assert_eq!(grid(Scale::Full).len(), 336);
        assert_eq!(sensitivity().len(), 72);
    }

    #[test]
    fn demand_round_trip() {
        for s in ["poisson:5", "geometric:5", "se:10:0.5", "me:10:0.25", "hy:10:2", "me1k:10:1.5"] {
            let d: DemandSpec = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
            d.build().unwrap();
        }
        assert_eq!("fit:10:2".parse::<DemandSpec>().unwrap().to_string(), "hy:10:2");
        assert!("gamma:1:2".parse::<DemandSpec>().is_err());
        assert!("poisson".parse::<DemandSpec>().is_err());
    }

    #[test]
    fn discrete_moments() {
        let d = DemandSpec::Geometric { mean: 5.0 }.build().unwrap();
        assert!((d.cv() - DemandSpec::Geometric { mean: 5.0 }.cv()).abs() < 1e-6);
    }
}
