//! Optimizing and evaluating the policies of one cell.

use std::fmt;
use std::str::FromStr;

use fp3_core::optimizer::{Fp3Mode, Optimizer, Optimum};
use fp3_core::policies::{Evaluator, Policy};
use fp3_core::simulator::{default_warmup, optimality_ratio, SimConfig, SimStats};
use fp3_core::DemandDistribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cells::Cell;
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// The policies a suite can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fp3,
    /// FP3 at the P3 realized by the better of optimized BS and CO.
    Fp3Heuristic,
    Pil,
    Bs,
    Co,
    Cbs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] =
        [PolicyKind::Fp3, PolicyKind::Fp3Heuristic, PolicyKind::Pil, PolicyKind::Bs, PolicyKind::Co, PolicyKind::Cbs];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Fp3 => "fp3",
            PolicyKind::Fp3Heuristic => "fp3h",
            PolicyKind::Pil => "pil",
            PolicyKind::Bs => "bs",
            PolicyKind::Co => "co",
            PolicyKind::Cbs => "cbs",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Parse(format!("policy `{s}` (fp3, fp3h, pil, bs, co, cbs)")))
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policy_kinds(s: &str) -> Result<Vec<PolicyKind>, HarnessError> {
    s.split(',').map(|p| p.trim().parse()).collect()
}

/// Parses a fixed policy: `bs:S`, `co:Q`, `cbs:S:Qmax`, `fp3:target` or
/// `pil:target`, with an optional trailing `@evaluator` on the last two.
pub fn parse_policy(s: &str, d: &DemandDistribution) -> Result<Policy, HarnessError> {
    let bad = || HarnessError::Parse(format!("policy `{s}`"));
    let (body, evaluator) = match s.split_once('@') {
        Some((b, e)) => (b, Some(Evaluator::parse(e).ok_or_else(bad)?)),
        None => (s, None),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let num = |i: usize| -> Result<f64, HarnessError> {
        match parts.get(i) {
            Some(&"inf") => Ok(f64::INFINITY),
            Some(x) => x.parse().map_err(|_| bad()),
            None => Err(bad()),
        }
    };
    let evaluator = evaluator.unwrap_or_else(|| Evaluator::default_for(d));
    let pol = match (parts[0], parts.len()) {
        ("bs", 2) => Policy::BaseStock { level: num(1)? },
        ("co", 2) => Policy::ConstantOrder { quantity: num(1)? },
        ("cbs", 3) => Policy::CappedBaseStock { level: num(1)?, cap: num(2)? },
        ("fp3", 2) => Policy::FixedP3 { target: num(1)?, evaluator },
        ("pil", 2) => Policy::ProjectedInventoryLevel { target: num(1)?, evaluator },
        _ => return Err(bad()),
    };
    pol.validate()?;
    Ok(pol)
}

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub opt_horizon: usize,
    pub eval_horizon: usize,
    /// `None` uses the simulator's lead-time dependent default.
    pub warmup: Option<usize>,
    pub policies: Vec<PolicyKind>,
    /// Overrides the per-demand evaluator choice for FP3 and PIL.
    pub evaluator: Option<Evaluator>,
    /// Overrides the FP3 search mode (optimality equation for continuous
    /// demand, cost search for discrete demand).
    pub fp3_mode: Option<Fp3Mode>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 1,
            opt_horizon: 10_000,
            eval_horizon: 100_000,
            warmup: None,
            policies: PolicyKind::ALL.to_vec(),
            evaluator: None,
            fp3_mode: None,
        }
    }
}

impl RunOptions {
    fn fp3_evaluator(&self, d: &DemandDistribution) -> Evaluator {
        self.evaluator.unwrap_or(if d.is_discrete() { Evaluator::ExactDiscrete } else { Evaluator::Backward })
    }

    /// PIL uses the forward scheme on continuous demand: the backward
    /// expected-inventory evaluator costs O(L²) recursions per order.
    fn pil_evaluator(&self, d: &DemandDistribution) -> Evaluator {
        self.evaluator.unwrap_or(if d.is_discrete() { Evaluator::ExactDiscrete } else { Evaluator::Forward })
    }

    fn fp3_mode(&self, d: &DemandDistribution) -> Fp3Mode {
        self.fp3_mode.unwrap_or(if d.is_discrete() { Fp3Mode::CostSearch } else { Fp3Mode::OptimalityEquation })
    }
}

/// 64-bit seed from SHA-256 of the global seed, cell id and stream name.
pub fn derive_seed(global: u64, cell_id: &str, stream: &str) -> u64 {
    let digest = Sha256::digest(format!("{global}/{cell_id}/{stream}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Identifies a cell together with everything that determines its results.
pub fn cell_hash(cell: &Cell, opts: &RunOptions) -> String {
    let key = serde_json::json!({
        "schema": SCHEMA_VERSION,
        "cell": cell,
        "seed": opts.seed,
        "opt_horizon": opts.opt_horizon,
        "eval_horizon": opts.eval_horizon,
        "warmup": opts.warmup,
        "evaluator": opts.evaluator,
        "fp3_mode": opts.fp3_mode,
    });
    hex::encode(&Sha256::digest(key.to_string().as_bytes())[..8])
}

/// One output row: a policy optimized and evaluated in a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub schema_version: u32,
    pub suite: String,
    pub cell_id: String,
    pub cell_hash: String,
    pub demand: String,
    pub mean: f64,
    pub cv: f64,
    pub h: f64,
    pub p: f64,
    pub lead_time: usize,
    pub policy: String,
    pub evaluator: String,
    /// S for BS and CBS, Q for CO, the target for FP3 and PIL.
    pub param_1: f64,
    /// The cap for CBS.
    pub param_2: f64,
    pub search_cost: f64,
    pub avg_cost: f64,
    /// `avg_cost / best avg_cost in the cell − 1`.
    pub gap_vs_best: f64,
    pub winner: bool,
    pub avg_end_inventory: f64,
    pub avg_lost: f64,
    pub lost_fraction: f64,
    pub realized_p3: f64,
    pub order_mean: f64,
    pub order_cv: f64,
    /// Sample `E[T²]/E[T]` on the evaluation run.
    pub t_ratio: f64,
    pub n_stockouts: usize,
    pub fallbacks: usize,
    pub stationarity_warning: bool,
    pub simulations: usize,
    pub opt_horizon: usize,
    pub eval_horizon: usize,
    pub warmup: usize,
    pub opt_seed: u64,
    pub eval_seed: u64,
    pub error: String,
}

impl Row {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

fn policy_params(pol: &Policy) -> (f64, f64, String) {
    match *pol {
        Policy::BaseStock { level } => (level, f64::NAN, String::new()),
        Policy::ConstantOrder { quantity } => (quantity, f64::NAN, String::new()),
        Policy::CappedBaseStock { level, cap } => (level, cap, String::new()),
        Policy::FixedP3 { target, evaluator } | Policy::ProjectedInventoryLevel { target, evaluator } => {
            (target, f64::NAN, evaluator.name().to_string())
        }
    }
}

struct CellContext<'a> {
    cell: &'a Cell,
    hash: String,
    opt_horizon: usize,
    eval_horizon: usize,
    warmup: usize,
    opt_seed: u64,
    eval_seed: u64,
}

impl<'a> CellContext<'a> {
    fn new(cell: &'a Cell, opts: &RunOptions) -> Self {
        CellContext {
            cell,
            hash: cell_hash(cell, opts),
            opt_horizon: opts.opt_horizon,
            eval_horizon: opts.eval_horizon,
            warmup: opts.warmup.unwrap_or_else(|| default_warmup(cell.lead_time)),
            opt_seed: derive_seed(opts.seed, &cell.id, "opt"),
            eval_seed: derive_seed(opts.seed, &cell.id, "eval"),
        }
    }
}

impl CellContext<'_> {
    fn row(&self, kind: PolicyKind, result: Result<(Policy, f64, SimStats, usize), HarnessError>) -> Row {
        let cell = self.cell;
        let mut row = Row {
            schema_version: SCHEMA_VERSION,
            suite: cell.suite.clone(),
            cell_id: cell.id.clone(),
            cell_hash: self.hash.clone(),
            demand: cell.demand.to_string(),
            mean: cell.demand.mean(),
            cv: cell.demand.cv(),
            h: cell.h,
            p: cell.p,
            lead_time: cell.lead_time,
            policy: kind.name().to_string(),
            evaluator: String::new(),
            param_1: f64::NAN,
            param_2: f64::NAN,
            search_cost: f64::NAN,
            avg_cost: f64::NAN,
            gap_vs_best: f64::NAN,
            winner: false,
            avg_end_inventory: f64::NAN,
            avg_lost: f64::NAN,
            lost_fraction: f64::NAN,
            realized_p3: f64::NAN,
            order_mean: f64::NAN,
            order_cv: f64::NAN,
            t_ratio: f64::NAN,
            n_stockouts: 0,
            fallbacks: 0,
            stationarity_warning: false,
            simulations: 0,
            opt_horizon: self.opt_horizon,
            eval_horizon: self.eval_horizon,
            warmup: self.warmup,
            opt_seed: self.opt_seed,
            eval_seed: self.eval_seed,
            error: String::new(),
        };
        match result {
            Ok((pol, search_cost, s, simulations)) => {
                let (a, b, ev) = policy_params(&pol);
                row.param_1 = a;
                row.param_2 = b;
                row.evaluator = ev;
                row.search_cost = search_cost;
                row.avg_cost = s.avg_cost;
                row.avg_end_inventory = s.avg_end_inventory;
                row.avg_lost = s.avg_lost;
                row.lost_fraction = s.lost_fraction;
                row.realized_p3 = s.realized_p3;
                row.order_mean = s.order_mean;
                row.order_cv = s.order_cv;
                row.t_ratio = optimality_ratio(&s).unwrap_or(f64::NAN);
                row.n_stockouts = s.n_stockouts;
                row.fallbacks = s.fallbacks;
                row.stationarity_warning = s.stationarity_warning;
                row.simulations = simulations;
            }
            Err(e) => row.error = e.to_string(),
        }
        row
    }
}

type Outcome = Result<(Policy, f64, SimStats, usize), HarnessError>;

fn from_optimum(o: &Optimum) -> Outcome {
    Ok((o.policy, o.search_cost, o.stats.clone(), o.simulations))
}

/// Optimizes and evaluates every requested policy in `cell`. Failures are
/// recorded in the row's `error` column; the other policies still run.
pub fn run_cell(cell: &Cell, opts: &RunOptions) -> Vec<Row> {
    let ctx = CellContext::new(cell, opts);
    let (d, cost) = match cell.demand.build().and_then(|d| Ok((d, cell.cost()?))) {
        Ok(x) => x,
        Err(e) => {
            let msg = e.to_string();
            return opts.policies.iter().map(|&k| ctx.row(k, Err(HarnessError::Cell(msg.clone())))).collect();
        }
    };
    let opt_cfg = SimConfig::new(cost, d.clone(), opts.opt_horizon, ctx.opt_seed).with_warmup(ctx.warmup);
    let optimizer = Optimizer::new(opt_cfg, opts.eval_horizon, ctx.eval_seed);

    let needs_base = opts.policies.iter().any(|k| matches!(k, PolicyKind::Bs | PolicyKind::Fp3Heuristic));
    let needs_co = opts.policies.iter().any(|k| matches!(k, PolicyKind::Co | PolicyKind::Fp3Heuristic));
    let bs = needs_base.then(|| optimizer.base_stock());
    let co = needs_co.then(|| optimizer.constant_order());

    let mut rows: Vec<Row> = opts
        .policies
        .iter()
        .map(|&kind| {
            let outcome: Outcome = match kind {
                PolicyKind::Bs => bs.as_ref().expect("computed").as_ref().map_err(|e| e.clone().into()).and_then(from_optimum),
                PolicyKind::Co => co.as_ref().expect("computed").as_ref().map_err(|e| e.clone().into()).and_then(from_optimum),
                PolicyKind::Cbs => optimizer.capped_base_stock().map_err(Into::into).and_then(|o| from_optimum(&o)),
                PolicyKind::Pil => {
                    optimizer.pil(opts.pil_evaluator(&d)).map_err(Into::into).and_then(|o| from_optimum(&o))
                }
                PolicyKind::Fp3 => optimizer
                    .fp3(opts.fp3_mode(&d), opts.fp3_evaluator(&d))
                    .map_err(Into::into)
                    .and_then(|o| from_optimum(&o)),
                PolicyKind::Fp3Heuristic => heuristic(&optimizer, &bs, &co, opts.fp3_evaluator(&d)),
            };
            ctx.row(kind, outcome)
        })
        .collect();
    mark_winners(&mut rows);
    rows
}

fn heuristic(
    optimizer: &Optimizer,
    bs: &Option<Result<Optimum, fp3_core::optimizer::OptError>>,
    co: &Option<Result<Optimum, fp3_core::optimizer::OptError>>,
    evaluator: Evaluator,
) -> Outcome {
    let bs = bs.as_ref().expect("computed").as_ref().map_err(|e| HarnessError::from(e.clone()))?;
    let co = co.as_ref().expect("computed").as_ref().map_err(|e| HarnessError::from(e.clone()))?;
    let pick = if co.stats.avg_cost < bs.stats.avg_cost { co } else { bs };
    let target = pick.stats.realized_p3.clamp(1e-6, 1.0 - 1e-6);
    let pol = Policy::FixedP3 { target, evaluator };
    let search = optimizer.search_run(&pol)?;
    let stats = optimizer.evaluate(&pol)?;
    Ok((pol, search.avg_cost, stats, 1))
}

/// Fills `gap_vs_best` and `winner` from the successful rows.
pub fn mark_winners(rows: &mut [Row]) {
    let best = rows.iter().filter(|r| r.ok()).map(|r| r.avg_cost).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return;
    }
    for r in rows.iter_mut().filter(|r| r.ok()) {
        r.gap_vs_best = if best > 0.0 { r.avg_cost / best - 1.0 } else if r.avg_cost == 0.0 { 0.0 } else { f64::INFINITY };
        r.winner = r.avg_cost == best;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::DemandSpec;

    #[test]
    fn seeds_depend_on_cell_and_stream() {
        let a = derive_seed(1, "x", "opt");
        assert_eq!(a, derive_seed(1, "x", "opt"));
        assert_ne!(a, derive_seed(1, "x", "eval"));
        assert_ne!(a, derive_seed(2, "x", "opt"));
        assert_ne!(a, derive_seed(1, "y", "opt"));
    }

    #[test]
    fn policy_strings() {
        let d = DemandDistribution::exponential(1.0).unwrap();
        assert_eq!(parse_policy("bs:3.5", &d).unwrap(), Policy::BaseStock { level: 3.5 });
        assert_eq!(parse_policy("cbs:10:inf", &d).unwrap(), Policy::CappedBaseStock { level: 10.0, cap: f64::INFINITY });
        assert_eq!(
            parse_policy("fp3:0.9@backward", &d).unwrap(),
            Policy::FixedP3 { target: 0.9, evaluator: Evaluator::Backward }
        );
        assert!(parse_policy("fp3:1.5", &d).is_err());
        assert!(parse_policy("xx:1", &d).is_err());
        assert_eq!(parse_policy_kinds("fp3, bs").unwrap(), vec![PolicyKind::Fp3, PolicyKind::Bs]);
    }

    #[test]
    fn hash_tracks_options() {
        let cell = Cell::new("t", DemandSpec::Poisson { mean: 5.0 }, 9.0, 1);
        let opts = RunOptions::default();
        let h = cell_hash(&cell, &opts);
        assert_eq!(h.len(), 16);
        assert_eq!(h, cell_hash(&cell, &opts));
        assert_ne!(h, cell_hash(&cell, &RunOptions { seed: 2, ..opts.clone() }));
    }

    #[test]
    fn small_cell_runs_every_policy() {
        let cell = Cell::new("t", DemandSpec::Poisson { mean: 5.0 }, 9.0, 1);
        let opts = RunOptions { opt_horizon: 500, eval_horizon: 500, warmup: Some(50), ..RunOptions::default() };
        let rows = run_cell(&cell, &opts);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.ok()), "{rows:?}");
        assert_eq!(rows.iter().filter(|r| r.winner).count().min(1), 1);
        assert!(rows.iter().all(|r| r.gap_vs_best >= 0.0));
    }
}
