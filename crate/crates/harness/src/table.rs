//! Lookup table of optimal P3 targets.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cells::{self, Cell};
use crate::output::{fmt_float, run_suite};
use crate::run::{cell_hash, PolicyKind, Row, RunOptions};
use crate::HarnessError;

pub const TABLE_HEADER: [&str; 9] =
    ["c_d", "p", "lead_time", "p3_star", "avg_cost", "order_cv", "seed", "opt_horizon", "eval_horizon"];

pub const DEFAULT_CVS: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
pub const DEFAULT_PS: [f64; 5] = [4.0, 9.0, 19.0, 49.0, 99.0];
pub const DEFAULT_LEADS: [usize; 4] = [1, 2, 4, 8];

/// Table rows, one per cell in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub cv: f64,
    pub p: f64,
    pub lead_time: usize,
    pub p3_star: f64,
    pub avg_cost: f64,
    pub order_cv: f64,
}

/// Where the per-cell optimization rows behind `out` are kept.
pub fn runs_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "table".into());
    out.with_file_name(format!("{stem}.runs.csv"))
}

/// Optimizes FP3 in every (cv, p, L) cell and writes the table to `out`.
/// Shifted-exponential demand for cv ≤ 1 and hyperexponential above, mean 10.
/// Optimization rows are kept in [`runs_path`] so reruns resume.
pub fn generate_lookup_table(
    cvs: &[f64],
    ps: &[f64],
    leads: &[usize],
    opts: &RunOptions,
    out: &Path,
) -> Result<(Vec<TableRow>, usize), HarnessError> {
    let opts = RunOptions { policies: vec![PolicyKind::Fp3], ..opts.clone() };
    let cells = cells::lookup(cvs, ps, leads);
    let report = run_suite("table", &cells, &opts, &runs_path(out))?;
    let rows = table_rows(&cells, &report.rows, &opts);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER)?;
    for r in rows.iter().flatten() {
        w.write_record([
            fmt_float(r.cv),
            fmt_float(r.p),
            r.lead_time.to_string(),
            fmt_float(r.p3_star),
            fmt_float(r.avg_cost),
            fmt_float(r.order_cv),
            opts.seed.to_string(),
            opts.opt_horizon.to_string(),
            opts.eval_horizon.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, bytes)?;
    Ok((rows.into_iter().flatten().collect(), report.errors))
}

fn table_rows(cells: &[Cell], rows: &[Row], opts: &RunOptions) -> Vec<Option<TableRow>> {
    cells
        .iter()
        .map(|c| {
            let hash = cell_hash(c, opts);
            rows.iter().find(|r| r.cell_hash == hash && r.policy == "fp3" && r.ok()).map(|r| TableRow {
                cv: c.demand.cv(),
                p: c.p,
                lead_time: c.lead_time,
                p3_star: r.param_1,
                avg_cost: r.avg_cost,
                order_cv: r.order_cv,
            })
        })
        .collect()
}
