use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use jesp_core::{Fsc, InitMode, RunConfig, SolverConfig};

use crate::commands::no_result;
use crate::io::{load_problem, write_atomic};
use crate::Failure;

/// Discount used by every benchmark unless overridden.
const BENCH_GAMMA: f64 = 0.9;
/// Per-solve wall-clock budget.
const SOLVER_BUDGET_S: u64 = 30;
const RESTART_BUDGET_S: u64 = 3600;

struct Row {
    problem: &'static str,
    file: &'static str,
    init: InitMode,
    restarts: usize,
    seed: u64,
    /// Trial budget per solve, so rows replay exactly from their config.
    solver_trials: usize,
    /// `None` marks a one-iteration smoke row.
    threshold: Option<f64>,
    reference: f64,
}

const SUITE: &[Row] = &[
    Row {
        problem: "DecTiger",
        file: "dectiger.dpomdp",
        init: InitMode::MpomdpDeterministic,
        restarts: 1,
        seed: 0,
        solver_trials: 30,
        threshold: Some(13.4),
        reference: 13.44,
    },
    Row {
        problem: "Recycling",
        file: "recycling.dpomdp",
        init: InitMode::Random,
        restarts: 100,
        seed: 1,
        solver_trials: 200,
        threshold: Some(31.0),
        reference: 31.62,
    },
    Row {
        problem: "Grid3x3",
        file: "grid3x3corners.dpomdp",
        init: InitMode::MpomdpDeterministic,
        restarts: 1,
        seed: 0,
        solver_trials: 100,
        threshold: Some(5.7),
        reference: 5.81,
    },
    Row {
        problem: "BoxPushing",
        file: "boxpushing.dpomdp",
        init: InitMode::MpomdpDeterministic,
        restarts: 1,
        seed: 0,
        solver_trials: 100,
        threshold: None,
        reference: 203.41,
    },
    Row {
        problem: "MarsRover",
        file: "mars.dpomdp",
        init: InitMode::MpomdpDeterministic,
        restarts: 1,
        seed: 0,
        solver_trials: 100,
        threshold: None,
        reference: 26.91,
    },
];

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Directory holding the benchmark `.dpomdp` files.
    #[arg(long)]
    pub suite: PathBuf,
    /// CSV report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Discount override (default 0.9).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Run only the named problems (case-insensitive), e.g. `--only dectiger`.
    #[arg(long)]
    pub only: Vec<String>,
}

/// One report line. Field order is the CSV column order.
#[derive(Serialize, Debug, Clone)]
struct Report {
    problem: String,
    init: String,
    restarts: usize,
    seed: u64,
    gamma: f64,
    solver_trials: usize,
    value: f64,
    threshold: Option<f64>,
    reference: f64,
    status: String,
    fsc_sizes: String,
    iterations: usize,
    wall_s: f64,
    elimination_ratio: Option<f64>,
    mpomdp_ub: Option<f64>,
}

fn config_for(row: &Row) -> RunConfig {
    RunConfig {
        init: row.init,
        restarts: row.restarts,
        seed: row.seed,
        restart_timeout: Duration::from_secs(RESTART_BUDGET_S),
        solver: SolverConfig {
            timeout: Duration::from_secs(SOLVER_BUDGET_S),
            max_trials: Some(row.solver_trials),
            seed: row.seed,
            ..SolverConfig::default()
        },
        max_iterations: row.threshold.is_none().then_some(1),
        ..RunConfig::default()
    }
}

fn run_row(row: &Row, path: PathBuf, gamma: f64) -> Result<Report, Failure> {
    let d = load_problem(&path, Some(gamma))?;
    let cfg = config_for(row);
    let r = jesp_core::run(&d, &cfg)?;
    if no_result(&r) {
        return Err(Failure::Timeout(format!("{}: no iteration completed", row.problem)));
    }
    let best = &r.restarts[r.best_restart].search;
    let status = match row.threshold {
        None => "smoke-ok",
        Some(t) if r.value >= t => "pass",
        Some(_) => "FAIL",
    };
    Ok(Report {
        problem: row.problem.to_string(),
        init: cfg.init.name().to_string(),
        restarts: cfg.effective_restarts(),
        seed: row.seed,
        gamma,
        solver_trials: row.solver_trials,
        value: r.value,
        threshold: row.threshold,
        reference: row.reference,
        status: status.to_string(),
        fsc_sizes: r.fscs.iter().map(|f| Fsc::len(f).to_string()).collect::<Vec<_>>().join("x"),
        iterations: best.trace.len(),
        wall_s: r.elapsed.as_secs_f64(),
        elimination_ratio: r.mean_elimination_ratio(),
        mpomdp_ub: r.mpomdp_ub,
    })
}

fn print_table(rows: &[Report]) {
    println!(
        "{:<11} {:<9} {:>4} {:>10} {:>9} {:>9} {:>9} {:>5} {:>8} {:>7}  status",
        "problem", "init", "rst", "value", "threshold", "reference", "sizes", "iters", "wall_s", "elim"
    );
    for r in rows {
        let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!(
            "{:<11} {:<9} {:>4} {:>10.4} {:>9} {:>9.2} {:>9} {:>5} {:>8.1} {:>7}  {}",
            r.problem,
            r.init,
            r.restarts,
            r.value,
            opt(r.threshold, 2),
            r.reference,
            r.fsc_sizes,
            r.iterations,
            r.wall_s,
            opt(r.elimination_ratio, 1),
            r.status
        );
    }
}

pub fn run(a: &BenchArgs) -> Result<(), Failure> {
    let selected: Vec<&Row> = SUITE
        .iter()
        .filter(|r| a.only.is_empty() || a.only.iter().any(|o| o.eq_ignore_ascii_case(r.problem)))
        .collect();
    if selected.is_empty() {
        return Err(Failure::Config(format!("no benchmark matches {:?}", a.only)));
    }
    let mut missing_required = Vec::new();
    let mut jobs = Vec::new();
    for row in selected {
        let path = a.suite.join(row.file);
        if path.is_file() {
            jobs.push((row, path));
        } else if row.threshold.is_some() {
            missing_required.push(path.display().to_string());
        } else {
            eprintln!("skipping {}: {} not found", row.problem, path.display());
        }
    }
    if !missing_required.is_empty() {
        return Err(Failure::Config(format!("missing problem files: {}", missing_required.join(", "))));
    }
    let gamma = a.gamma.unwrap_or(BENCH_GAMMA);
    let reports = jobs
        .into_par_iter()
        .map(|(row, path)| run_row(row, path, gamma))
        .collect::<Result<Vec<_>, Failure>>()?;
    print_table(&reports);
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &reports {
            w.serialize(r).map_err(|e| Failure::Other(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Other(e.to_string()))?;
        write_atomic(out, &bytes)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| r.status == "FAIL").map(|r| r.problem.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Threshold(format!("threshold missed: {}", failed.join(", "))))
    }
}
