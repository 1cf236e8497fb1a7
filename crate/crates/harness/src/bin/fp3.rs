use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fp3_core::optimizer::Fp3Mode;
use fp3_core::policies::Evaluator;
use fp3_core::simulator::{optimality_ratio, simulate, SimConfig};
use fp3_harness::config::FileConfig;
use fp3_harness::output::{check_baseline, fmt_float, run_suite, EVAL_HEADER};
use fp3_harness::run::{parse_policy, parse_policy_kinds};
use fp3_harness::table::{generate_lookup_table, DEFAULT_CVS, DEFAULT_LEADS, DEFAULT_PS};
use fp3_harness::{analysis, default_eval_horizon, Cell, DemandSpec, RunOptions, Scale, Suite, DEFAULT_OPT_HORIZON};

#[derive(Parser)]
#[command(name = "fp3", version, about = "Lost-sales inventory experiments with fixed-P3 ordering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Global seed; per-cell seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation periods after warm-up.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Optimization periods after warm-up.
    #[arg(long, global = true)]
    opt_horizon: Option<usize>,
    #[arg(long, global = true)]
    warmup: Option<usize>,
    /// desk or full.
    #[arg(long, global = true)]
    scale: Option<String>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated: policy kinds (fp3,fp3h,pil,bs,co,cbs) for optimize and
    /// suite; fixed policies (bs:S,co:Q,cbs:S:Qmax,fp3:t,pil:t) for eval.
    #[arg(long, global = true)]
    policies: Option<String>,
    /// backward, forward, exact_discrete or exact_phase.
    #[arg(long, global = true)]
    evaluator: Option<String>,
    /// optimality_equation or cost_search.
    #[arg(long, global = true)]
    fp3_mode: Option<String>,
    /// TOML settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct CellArgs {
    /// poisson:M, geometric:M, se:M:CV, me:M:CV, me1k:M:CV, hy:M:CV or fit:M:CV.
    #[arg(long)]
    demand: String,
    /// Penalty cost per unit lost.
    #[arg(long)]
    p: f64,
    /// Holding cost per unit per period.
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long)]
    lead: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a demand distribution and print its parameters.
    Fit {
        #[arg(long)]
        demand: String,
    },
    /// Simulate fixed policies in one cell.
    Eval(CellArgs),
    /// Optimize and evaluate policies in one cell.
    Optimize(CellArgs),
    /// Run a suite: zipkin, xin, grid or sensitivity.
    Suite {
        name: String,
        /// Regression baseline: written on first run, compared afterwards.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Relative cost tolerance against the baseline.
        #[arg(long, default_value_t = 1e-9)]
        baseline_tol: f64,
    },
    /// Generate the lookup table of optimal P3 targets.
    Table {
        #[arg(long, value_delimiter = ',')]
        cvs: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        ps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        leads: Option<Vec<usize>>,
    },
}

/// Flags merged over the config file.
struct Settings {
    common: Common,
    scale: Scale,
}

fn settings(cli: &Cli) -> Result<Settings> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => FileConfig::default(),
    };
    let c = &cli.common;
    let common = Common {
        seed: c.seed.or(file.seed),
        horizon: c.horizon.or(file.horizon),
        opt_horizon: c.opt_horizon.or(file.opt_horizon),
        warmup: c.warmup.or(file.warmup),
        scale: c.scale.clone().or(file.scale),
        out: c.out.clone().or(file.out),
        policies: c.policies.clone().or(file.policies),
        evaluator: c.evaluator.clone().or(file.evaluator),
        fp3_mode: c.fp3_mode.clone().or(file.fp3_mode),
        config: None,
        jobs: c.jobs.or(file.jobs),
    };
    let scale = common.scale.as_deref().unwrap_or("desk").parse()?;
    Ok(Settings { common, scale })
}

fn run_options(s: &Settings, default_policies: Vec<fp3_harness::PolicyKind>) -> Result<RunOptions> {
    let c = &s.common;
    let evaluator = match &c.evaluator {
        Some(e) => Some(Evaluator::parse(e).with_context(|| format!("unknown evaluator `{e}`"))?),
        None => None,
    };
    let fp3_mode = match c.fp3_mode.as_deref() {
        None => None,
        Some("optimality_equation") => Some(Fp3Mode::OptimalityEquation),
        Some("cost_search") => Some(Fp3Mode::CostSearch),
        Some(m) => bail!("unknown fp3 mode `{m}`"),
    };
    Ok(RunOptions {
        seed: c.seed.unwrap_or(1),
        opt_horizon: c.opt_horizon.unwrap_or(DEFAULT_OPT_HORIZON),
        eval_horizon: c.horizon.unwrap_or(default_eval_horizon(s.scale)),
        warmup: c.warmup,
        policies: match &c.policies {
            Some(p) => parse_policy_kinds(p)?,
            None => default_policies,
        },
        evaluator,
        fp3_mode,
    })
}

fn cell_from(args: &CellArgs) -> Result<Cell> {
    let demand: DemandSpec = args.demand.parse()?;
    let mut cell = Cell::new("cli", demand, args.p, args.lead);
    cell.h = args.h;
    Ok(cell)
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eval(s: &Settings, args: &CellArgs) -> Result<ExitCode> {
    let cell = cell_from(args)?;
    let d = cell.demand.build()?;
    let Some(list) = &s.common.policies else { bail!("eval needs --policies, e.g. bs:30,fp3:0.9") };
    let mut cfg = SimConfig::new(
        cell.cost()?,
        d.clone(),
        s.common.horizon.unwrap_or(default_eval_horizon(s.scale)),
        s.common.seed.unwrap_or(1),
    );
    if let Some(w) = s.common.warmup {
        cfg = cfg.with_warmup(w);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_HEADER)?;
    for spec in list.split(',') {
        let pol = parse_policy(spec.trim(), &d)?;
        let st = simulate(&pol, &cfg)?;
        w.write_record([
            spec.trim().to_string(),
            fmt_float(st.avg_cost),
            fmt_float(st.avg_end_inventory),
            fmt_float(st.avg_lost),
            fmt_float(st.realized_p3),
            fmt_float(st.order_mean),
            fmt_float(st.order_cv),
            fmt_float(optimality_ratio(&st).unwrap_or(f64::NAN)),
            st.n_stockouts.to_string(),
            st.fallbacks.to_string(),
            st.stationarity_warning.to_string(),
        ])?;
    }
    write_out(s.common.out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
    Ok(ExitCode::SUCCESS)
}

fn optimize(s: &Settings, args: &CellArgs) -> Result<ExitCode> {
    let cell = cell_from(args)?;
    let default = if cell.demand.is_discrete() { Suite::Zipkin.policies() } else { Suite::Grid.policies() };
    let opts = run_options(s, default)?;
    let rows = fp3_harness::run_cell(&cell, &opts);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(fp3_harness::output::HEADER)?;
    for r in &rows {
        w.write_record(r.record())?;
    }
    write_out(s.common.out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
    for r in rows.iter().filter(|r| !r.ok()) {
        eprintln!("{} {}: {}", r.cell_id, r.policy, r.error);
    }
    Ok(if rows.iter().all(|r| r.ok()) { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn suite(s: &Settings, name: &str, baseline: Option<&Path>, tol: f64) -> Result<ExitCode> {
    let suite: Suite = name.parse()?;
    let opts = run_options(s, suite.policies())?;
    let out = s.common.out.clone().unwrap_or_else(|| PathBuf::from(format!("results/{name}.csv")));
    let cells = suite.cells(s.scale);
    eprintln!("{name}: {} cells -> {}", cells.len(), out.display());
    let report = run_suite(name, &cells, &opts, &out)?;
    eprintln!("wrote {} rows, skipped {} completed cells", report.rows_written, report.cells_skipped);
    eprint!("{}", analysis::summarize(&report.rows));
    for r in report.rows.iter().filter(|r| !r.ok()) {
        eprintln!("error {} {}: {}", r.cell_id, r.policy, r.error);
    }
    let mut drifted = false;
    if let Some(path) = baseline {
        match check_baseline(path, &report.rows, tol)? {
            None => eprintln!("baseline written to {}", path.display()),
            Some(d) if d.is_empty() => eprintln!("baseline {}: no drift", path.display()),
            Some(d) => {
                drifted = true;
                for x in d {
                    eprintln!("drift {}: {} -> {}", x.key, fmt_float(x.baseline), fmt_float(x.current));
                }
            }
        }
    }
    Ok(if report.errors > 0 || drifted { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn table(s: &Settings, cvs: &[f64], ps: &[f64], leads: &[usize]) -> Result<ExitCode> {
    let mut opts = run_options(s, vec![fp3_harness::PolicyKind::Fp3])?;
    // Lookup tables are evaluated over 10⁶ periods unless told otherwise.
    opts.eval_horizon = s.common.horizon.unwrap_or(1_000_000);
    let out = s.common.out.clone().unwrap_or_else(|| PathBuf::from("results/lookup.csv"));
    let (rows, errors) = generate_lookup_table(cvs, ps, leads, &opts, &out)?;
    eprintln!("{} table rows -> {}", rows.len(), out.display());
    Ok(if errors > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let s = settings(cli)?;
    if let Some(n) = s.common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Fit { demand } => {
            let spec: DemandSpec = demand.parse()?;
            let d = spec.build()?;
            let (mean, var) = d.moments();
            let json = serde_json::json!({ "distribution": d, "mean": mean, "cv": var.sqrt() / mean });
            write_out(s.common.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval(args) => eval(&s, args),
        Command::Optimize(args) => optimize(&s, args),
        Command::Suite { name, baseline, baseline_tol } => suite(&s, name, baseline.as_deref(), *baseline_tol),
        Command::Table { cvs, ps, leads } => table(
            &s,
            cvs.as_deref().unwrap_or(&DEFAULT_CVS),
            ps.as_deref().unwrap_or(&DEFAULT_PS),
            leads.as_deref().unwrap_or(&DEFAULT_LEADS),
        ),
    }
}
