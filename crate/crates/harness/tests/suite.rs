use std::fs;

use fp3_harness::output::{check_baseline, manifest_path, read_rows, Manifest};
use fp3_harness::run::cell_hash;
use fp3_harness::table::{generate_lookup_table, runs_path, TABLE_HEADER};
use fp3_harness::{run_suite, Cell, DemandSpec, PolicyKind, RunOptions};

fn quick() -> RunOptions {
    RunOptions {
        opt_horizon: 400,
        eval_horizon: 1_000,
        warmup: Some(50),
        policies: vec![PolicyKind::Fp3, PolicyKind::Bs, PolicyKind::Co],
        ..RunOptions::default()
    }
}

fn cells() -> Vec<Cell> {
    vec![
        Cell::new("t", DemandSpec::Poisson { mean: 3.0 }, 9.0, 1),
        Cell::new("t", DemandSpec::Geometric { mean: 2.0 }, 4.0, 2),
    ]
}

/// Rows as written, in cell and policy order.
fn sorted(rows: Vec<fp3_harness::Row>) -> Vec<Vec<String>> {
    let mut recs: Vec<Vec<String>> = rows.iter().map(|r| r.record()).collect();
    recs.sort_by(|a, b| (&a[2], &a[10]).cmp(&(&b[2], &b[10])));
    recs
}

#[test]
fn rerun_skips_completed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let first = run_suite("t", &cells(), &quick(), &out).unwrap();
    assert_eq!(first.rows_written, 6);
    assert_eq!(first.cells_skipped, 0);
    assert_eq!(first.errors, 0);
    let bytes = fs::read(&out).unwrap();

    let second = run_suite("t", &cells(), &quick(), &out).unwrap();
    assert_eq!(second.rows_written, 0);
    assert_eq!(second.cells_skipped, 2);
    assert_eq!(fs::read(&out).unwrap(), bytes);
    assert_eq!(sorted(first.rows), sorted(second.rows));
}

#[test]
fn changed_options_rerun_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    run_suite("t", &cells(), &quick(), &out).unwrap();
    let again = run_suite("t", &cells(), &RunOptions { seed: 9, ..quick() }, &out).unwrap();
    assert_eq!(again.cells_skipped, 0);
    assert_eq!(again.rows.len(), 6);
    assert_eq!(read_rows(&out).unwrap().len(), 12);
}

#[test]
fn failed_cells_are_recorded_and_retried() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let mut bad = cells();
    bad[1].p = -1.0;
    let r = run_suite("t", &bad, &quick(), &out).unwrap();
    assert_eq!(r.errors, 3);
    assert!(r.rows.iter().filter(|x| x.cell_id == bad[1].id).all(|x| !x.ok()));

    let r = run_suite("t", &bad, &quick(), &out).unwrap();
    assert_eq!(r.cells_skipped, 1);
    assert_eq!(r.rows_written, 3);
    assert_eq!(r.rows.len(), 6);
}

#[test]
fn same_seed_same_numbers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_suite("t", &cells(), &quick(), &a.path().join("r.csv")).unwrap();
    let rb = run_suite("t", &cells(), &quick(), &b.path().join("r.csv")).unwrap();
    assert_eq!(sorted(ra.rows), sorted(rb.rows));
}

#[test]
fn manifest_lists_seeds_and_options() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let opts = quick();
    run_suite("t", &cells(), &opts, &out).unwrap();
    let m: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
    assert_eq!(m.suite, "t");
    assert_eq!(m.cells, 2);
    assert_eq!(m.options.seed, opts.seed);
    assert_eq!(m.options.eval_horizon, 1_000);
    assert_eq!(m.seeds.len(), 2);
    assert_eq!(m.seeds[0].cell_hash, cell_hash(&cells()[0], &opts));
    assert_ne!(m.seeds[0].opt_seed, m.seeds[0].eval_seed);
    assert_eq!(m.input_hash.len(), 64);
}

#[test]
fn rows_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let r = run_suite("t", &cells(), &quick(), &out).unwrap();
    let back = read_rows(&out).unwrap();
    assert_eq!(back.len(), 6);
    assert_eq!(sorted(r.rows), sorted(back));
}

#[test]
fn baseline_written_then_compared() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let base = dir.path().join("base.json");
    let r = run_suite("t", &cells(), &quick(), &out).unwrap();
    assert_eq!(check_baseline(&base, &r.rows, 1e-9).unwrap(), None);
    assert_eq!(check_baseline(&base, &r.rows, 1e-9).unwrap(), Some(vec![]));

    let mut moved = r.rows.clone();
    moved[0].avg_cost *= 1.01;
    let drift = check_baseline(&base, &moved, 1e-9).unwrap().unwrap();
    assert_eq!(drift.len(), 1);
    assert_eq!(drift[0].key, format!("{}/{}", moved[0].cell_id, moved[0].policy));
    assert_eq!(check_baseline(&base, &moved, 0.02).unwrap(), Some(vec![]));
}

#[test]
fn lookup_table_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lookup.csv");
    let opts = RunOptions { opt_horizon: 300, eval_horizon: 600, ..quick() };
    let (rows, errors) = generate_lookup_table(&[0.5, 1.5], &[9.0], &[1], &opts, &out).unwrap();
    assert_eq!(errors, 0);
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.p3_star > 0.0 && r.p3_star < 1.0);
        assert!(r.avg_cost > 0.0);
    }
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TABLE_HEADER);
    assert_eq!(reader.records().count(), 2);
    assert!(runs_path(&out).exists());

    let (again, _) = generate_lookup_table(&[0.5, 1.5], &[9.0], &[1], &opts, &out).unwrap();
    assert_eq!(again, rows);
}
