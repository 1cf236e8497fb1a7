//! Cross-policy comparisons over suite results.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::run::Row;

/// Rows grouped by cell, in first-appearance order.
pub fn by_cell(rows: &[Row]) -> Vec<(String, Vec<&Row>)> {
    let mut order: Vec<(String, Vec<&Row>)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for r in rows {
        match index.get(r.cell_hash.as_str()) {
            Some(&i) => order[i].1.push(r),
            None => {
                index.insert(&r.cell_hash, order.len());
                order.push((r.cell_id.clone(), vec![r]));
            }
        }
    }
    order
}

pub fn find<'a>(rows: &[&'a Row], policy: &str) -> Option<&'a Row> {
    rows.iter().copied().find(|r| r.policy == policy && r.ok())
}

/// `cost(subject) / min cost(competitors) − 1`, when all of them ran.
pub fn gap_vs(rows: &[&Row], subject: &str, competitors: &[&str]) -> Option<f64> {
    let own = find(rows, subject)?.avg_cost;
    let mut best = f64::INFINITY;
    for c in competitors {
        best = best.min(find(rows, c)?.avg_cost);
    }
    Some(own / best - 1.0)
}

/// Policies with the lowest cost in the cell (several on a tie).
pub fn winners(rows: &[&Row]) -> Vec<String> {
    let best = rows.iter().filter(|r| r.ok()).map(|r| r.avg_cost).fold(f64::INFINITY, f64::min);
    rows.iter().filter(|r| r.ok() && r.avg_cost == best).map(|r| r.policy.clone()).collect()
}

/// Plain-text summary: wins per policy and the FP3 gap to the best other policy.
pub fn summarize(rows: &[Row]) -> String {
    let cells = by_cell(rows);
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    let mut gaps = Vec::new();
    for (_, rs) in &cells {
        for w in winners(rs) {
            *wins.entry(w).or_default() += 1;
        }
        let others: Vec<&str> = rs.iter().filter(|r| r.policy != "fp3" && r.ok()).map(|r| r.policy.as_str()).collect();
        if let Some(g) = gap_vs(rs, "fp3", &others) {
            gaps.push(g);
        }
    }
    let mut out = String::new();
    let errors = rows.iter().filter(|r| !r.ok()).count();
    let _ = writeln!(out, "cells: {}  rows: {}  errors: {errors}", cells.len(), rows.len());
    for (p, n) in &wins {
        let _ = writeln!(out, "  best {p:<5} {n}");
    }
    if !gaps.is_empty() {
        let within = gaps.iter().filter(|&&g| g <= 0.004).count();
        let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "  fp3 within 0.4% of the best other policy in {within}/{} cells, worst gap {:.3}%",
            gaps.len(),
            100.0 * worst
        );
    }
    out
}
