//! CSV rows, resumption, the JSON manifest and regression baselines.

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cells::Cell;
use crate::run::{cell_hash, run_cell, Row, RunOptions, SCHEMA_VERSION};
use crate::HarnessError;

/// Formats with 10 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{x:.9e}");
    }
    let decimals = (9 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_float(s: &str) -> f64 {
    match s {
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => s.parse().unwrap_or(f64::NAN),
    }
}

pub const HEADER: [&str; 35] = [
    "schema_version",
    "suite",
    "cell_id",
    "cell_hash",
    "demand",
    "mean",
    "cv",
    "h",
    "p",
    "lead_time",
    "policy",
    "evaluator",
    "param_1",
    "param_2",
    "search_cost",
    "avg_cost",
    "gap_vs_best",
    "winner",
    "avg_end_inventory",
    "avg_lost",
    "lost_fraction",
    "realized_p3",
    "order_mean",
    "order_cv",
    "t_ratio",
    "n_stockouts",
    "fallbacks",
    "stationarity_warning",
    "simulations",
    "opt_horizon",
    "eval_horizon",
    "warmup",
    "opt_seed",
    "eval_seed",
    "error",
];

/// Columns printed by `fp3 eval`.
pub const EVAL_HEADER: [&str; 11] = [
    "policy",
    "avg_cost",
    "avg_end_inventory",
    "avg_lost",
    "realized_p3",
    "order_mean",
    "order_cv",
    "t_ratio",
    "n_stockouts",
    "fallbacks",
    "stationarity_warning",
];

fn header() -> &'static [&'static str] {
    &HEADER
}

impl Row {
    pub fn record(&self) -> Vec<String> {
        let f = fmt_float;
        vec![
            self.schema_version.to_string(),
            self.suite.clone(),
            self.cell_id.clone(),
            self.cell_hash.clone(),
            self.demand.clone(),
            f(self.mean),
            f(self.cv),
            f(self.h),
            f(self.p),
            self.lead_time.to_string(),
            self.policy.clone(),
            self.evaluator.clone(),
            f(self.param_1),
            f(self.param_2),
            f(self.search_cost),
            f(self.avg_cost),
            f(self.gap_vs_best),
            self.winner.to_string(),
            f(self.avg_end_inventory),
            f(self.avg_lost),
            f(self.lost_fraction),
            f(self.realized_p3),
            f(self.order_mean),
            f(self.order_cv),
            f(self.t_ratio),
            self.n_stockouts.to_string(),
            self.fallbacks.to_string(),
            self.stationarity_warning.to_string(),
            self.simulations.to_string(),
            self.opt_horizon.to_string(),
            self.eval_horizon.to_string(),
            self.warmup.to_string(),
            self.opt_seed.to_string(),
            self.eval_seed.to_string(),
            self.error.clone(),
        ]
    }

    pub fn from_record(r: &csv::StringRecord) -> Result<Row, HarnessError> {
        let get = |i: usize| r.get(i).ok_or_else(|| HarnessError::Parse(format!("short row: {r:?}")));
        let num = |i: usize| get(i).map(parse_float);
        let int = |i: usize| -> Result<u64, HarnessError> {
            get(i)?.parse().map_err(|_| HarnessError::Parse(format!("column {} in {r:?}", header()[i])))
        };
        let flag = |i: usize| get(i).map(|s| s == "true");
        Ok(Row {
            schema_version: int(0)? as u32,
            suite: get(1)?.into(),
            cell_id: get(2)?.into(),
            cell_hash: get(3)?.into(),
            demand: get(4)?.into(),
            mean: num(5)?,
            cv: num(6)?,
            h: num(7)?,
            p: num(8)?,
            lead_time: int(9)? as usize,
            policy: get(10)?.into(),
            evaluator: get(11)?.into(),
            param_1: num(12)?,
            param_2: num(13)?,
            search_cost: num(14)?,
            avg_cost: num(15)?,
            gap_vs_best: num(16)?,
            winner: flag(17)?,
            avg_end_inventory: num(18)?,
            avg_lost: num(19)?,
            lost_fraction: num(20)?,
            realized_p3: num(21)?,
            order_mean: num(22)?,
            order_cv: num(23)?,
            t_ratio: num(24)?,
            n_stockouts: int(25)? as usize,
            fallbacks: int(26)? as usize,
            stationarity_warning: flag(27)?,
            simulations: int(28)? as usize,
            opt_horizon: int(29)? as usize,
            eval_horizon: int(30)? as usize,
            warmup: int(31)? as usize,
            opt_seed: int(32)?,
            eval_seed: int(33)?,
            error: get(34)?.into(),
        })
    }
}

/// Reads a results file written by [`run_suite`].
pub fn read_rows(path: &Path) -> Result<Vec<Row>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let found: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if found != header() {
        return Err(HarnessError::Parse(format!("{}: unexpected header (schema {SCHEMA_VERSION})", path.display())));
    }
    reader.records().map(|r| Row::from_record(&r?)).collect()
}

/// The latest row per (cell hash, policy), in file order.
pub fn latest_rows(rows: Vec<Row>) -> Vec<Row> {
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut out: Vec<Row> = Vec::new();
    for r in rows {
        let key = (r.cell_hash.clone(), r.policy.clone());
        match index.get(&key) {
            Some(&i) => out[i] = r,
            None => {
                index.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSeeds {
    pub cell_id: String,
    pub cell_hash: String,
    pub opt_seed: u64,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub suite: String,
    pub options: RunOptions,
    pub cells: usize,
    pub seeds: Vec<CellSeeds>,
    /// SHA-256 over the cell list and options.
    pub input_hash: String,
    pub rows_written: usize,
    pub cells_skipped: usize,
    pub errors: usize,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn input_hash(cells: &[Cell], opts: &RunOptions) -> String {
    let key = serde_json::json!({ "schema": SCHEMA_VERSION, "cells": cells, "options": opts });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

/// Result of a suite run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// Latest rows of every cell in the suite, including resumed ones.
    pub rows: Vec<Row>,
    pub rows_written: usize,
    pub cells_skipped: usize,
    pub errors: usize,
}

/// Runs every cell not already completed in `out`, appending rows as cells
/// finish, then writes the manifest next to `out`. Cells run on the rayon
/// pool; a single locked writer serializes output.
pub fn run_suite(suite: &str, cells: &[Cell], opts: &RunOptions, out: &Path) -> Result<SuiteReport, HarnessError> {
    let existing = if out.exists() { latest_rows(read_rows(out)?) } else { Vec::new() };
    let done: HashSet<&str> = {
        let mut by_hash: HashMap<&str, Vec<&Row>> = HashMap::new();
        for r in &existing {
            by_hash.entry(r.cell_hash.as_str()).or_default().push(r);
        }
        by_hash
            .into_iter()
            .filter(|(_, rows)| {
                rows.iter().all(|r| r.ok()) && opts.policies.iter().all(|k| rows.iter().any(|r| r.policy == k.name()))
            })
            .map(|(h, _)| h)
            .collect()
    };
    let todo: Vec<&Cell> = cells.iter().filter(|c| !done.contains(cell_hash(c, opts).as_str())).collect();
    let cells_skipped = cells.len() - todo.len();

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let fresh = !out.exists() || fs::metadata(out)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(out)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        writer.write_record(header())?;
        writer.flush()?;
    }
    let writer = Mutex::new(writer);
    let results: Vec<Result<Vec<Row>, HarnessError>> = todo
        .par_iter()
        .map(|cell| {
            let rows = run_cell(cell, opts);
            let mut w = writer.lock().expect("writer lock");
            for r in &rows {
                w.write_record(r.record())?;
            }
            w.flush()?;
            Ok(rows)
        })
        .collect();
    // Reported rows carry the written precision, so a resumed run reports
    // exactly what a fresh one did.
    let mut new_rows = Vec::new();
    for r in results {
        for row in r? {
            new_rows.push(Row::from_record(&csv::StringRecord::from(row.record()))?);
        }
    }
    let rows_written = new_rows.len();

    let hashes: HashSet<String> = cells.iter().map(|c| cell_hash(c, opts)).collect();
    let mut rows: Vec<Row> = existing.into_iter().filter(|r| hashes.contains(&r.cell_hash)).collect();
    rows.extend(new_rows);
    let rows = latest_rows(rows);
    let errors = rows.iter().filter(|r| !r.ok()).count();

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        suite: suite.to_string(),
        options: opts.clone(),
        cells: cells.len(),
        seeds: cells
            .iter()
            .map(|c| CellSeeds {
                cell_id: c.id.clone(),
                cell_hash: cell_hash(c, opts),
                opt_seed: crate::run::derive_seed(opts.seed, &c.id, "opt"),
                eval_seed: crate::run::derive_seed(opts.seed, &c.id, "eval"),
            })
            .collect(),
        input_hash: input_hash(cells, opts),
        rows_written,
        cells_skipped,
        errors,
    };
    fs::write(manifest_path(out), serde_json::to_string_pretty(&manifest)?)?;
    Ok(SuiteReport { rows, rows_written, cells_skipped, errors })
}

/// Stored per-row costs used to detect drift between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub schema_version: u32,
    /// `cell_id/policy` → average cost.
    pub costs: std::collections::BTreeMap<String, f64>,
}

impl Baseline {
    pub fn from_rows(rows: &[Row]) -> Self {
        let costs = rows.iter().filter(|r| r.ok()).map(|r| (format!("{}/{}", r.cell_id, r.policy), r.avg_cost)).collect();
        Baseline { schema_version: SCHEMA_VERSION, costs }
    }
}

/// A row whose cost moved by more than the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub key: String,
    pub baseline: f64,
    pub current: f64,
}

/// Writes `rows` as the baseline when `path` does not exist; otherwise
/// compares against it with relative tolerance `tol`.
pub fn check_baseline(path: &Path, rows: &[Row], tol: f64) -> Result<Option<Vec<Drift>>, HarnessError> {
    let current = Baseline::from_rows(rows);
    if !path.exists() {
        fs::write(path, serde_json::to_string_pretty(&current)?)?;
        return Ok(None);
    }
    let stored: Baseline = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut drifts = Vec::new();
    for (key, &now) in &current.costs {
        if let Some(&then) = stored.costs.get(key) {
            if (now - then).abs() > tol * then.abs().max(1e-12) {
                drifts.push(Drift { key: key.clone(), baseline: then, current: now });
            }
        }
    }
    Ok(Some(drifts))
}
