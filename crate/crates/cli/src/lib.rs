//! Config-driven experiment runner for the `riskplan` solvers.
//!
//! A run loads a problem (named domain, file or inline JSON), dispatches one
//! solver, optionally verifies it against an oracle, and writes a policy
//! export, a CSV metrics table and the resolved config.

pub mod config;
pub mod error;
pub mod run;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use config::{ExperimentConfig, Solver, VerifySpec, DEFAULT_OUT_DIR};
use error::{CliError, Result};
use run::{reevaluate, run_cell, CellOutcome, PolicyFile, Reevaluation};

pub const CSV_HEADER: [&str; 10] =
    ["problem", "solver", "alpha", "n", "seed", "value", "oracle_value", "gap", "wall_ms", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One config, no sweep.
    Solve,
    /// One row per sweep cell.
    Sweep,
    /// Solve or sweep with verification switched on.
    Verify,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub verify: Option<VerifySpec>,
    pub jobs: usize,
    /// Record wall-clock times; otherwise `wall_ms` is 0 so output is reproducible.
    pub timings: bool,
    /// Execute cells last to first; rows keep cell order.
    pub reverse: bool,
}

#[derive(Debug)]
pub struct Report {
    pub csv: String,
    pub out_dir: PathBuf,
    pub outcomes: Vec<CellOutcome>,
    /// First failing row, in row order.
    pub failure: Option<CliError>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(0, CliError::exit_code)
    }
}

/// Applies overrides and fills every default so the config echo is complete.
pub fn resolve(mut config: ExperimentConfig, mode: Mode, opts: &RunOptions) -> Result<ExperimentConfig> {
    config.seed = Some(opts.seed.or(config.seed).unwrap_or(0));
    config.outputs.dir = Some(opts.out.clone().or(config.outputs.dir).unwrap_or_else(|| DEFAULT_OUT_DIR.into()));
    if opts.verify.is_some() {
        config.verify = opts.verify.clone();
    }
    match mode {
        Mode::Solve if config.sweep.is_some() => {
            return Err(CliError::Config("config has a `sweep`; run the `sweep` subcommand".into()))
        }
        Mode::Sweep if config.sweep.is_none() => return Err(CliError::Config("config has no `sweep`".into())),
        Mode::Verify if config.verify.is_none() => config.verify = Some(VerifySpec::default()),
        _ => {}
    }
    Ok(config)
}

/// Cells of a resolved config: itself, or its sweep expansion.
pub fn cells(config: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    match config.sweep {
        Some(_) => config.cells(config.seed.unwrap_or(0)),
        None => Ok(vec![config.clone()]),
    }
}

/// Runs cells on `jobs` threads; results come back in cell order.
pub fn run_cells(cells: &[ExperimentConfig], jobs: usize, reverse: bool) -> Result<Vec<CellOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Solver(format!("thread pool: {e}")))?;
    let order: Vec<usize> = if reverse { (0..cells.len()).rev().collect() } else { (0..cells.len()).collect() };
    let mut done: Vec<(usize, CellOutcome)> =
        pool.install(|| order.par_iter().map(|&i| (i, run_cell(&cells[i]))).collect());
    done.sort_by_key(|(i, _)| *i);
    Ok(done.into_iter().map(|(_, o)| o).collect())
}

fn float(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn status(outcome: &CellOutcome) -> String {
    match (&outcome.result, outcome.verification()) {
        (Err(e), _) => format!("error: {}: {}", e.category(), e.message()),
        (Ok(_), None) => "ok".into(),
        (Ok(_), Some(v)) if v.passed => "pass".into(),
        (Ok(_), Some(_)) => "mismatch".into(),
    }
}

/// CSV table with the fixed header and one row per outcome.
pub fn to_csv(outcomes: &[CellOutcome], timings: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for o in outcomes {
        let c = &o.config;
        let v = o.verification();
        w.write_record([
            c.problem.label(),
            c.solver.name().to_string(),
            float(c.params.alpha.filter(|_| c.solver.needs_alpha())),
            c.params.n.filter(|_| c.solver == Solver::MinimaxRegretOptions).map(|n| n.to_string()).unwrap_or_default(),
            c.seed.unwrap_or(0).to_string(),
            float(o.value()),
            float(v.map(|v| v.oracle_value)),
            float(v.map(|v| v.gap)),
            if timings { o.wall_ms.to_string() } else { "0".into() },
            status(o),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

/// Resolves, runs and writes `resolved_config.json`, `results.csv` and the
/// policy exports (`policy.json` for a single solve, `policies/cell-NNNN.json`
/// for sweeps).
pub fn execute(config: ExperimentConfig, mode: Mode, opts: &RunOptions) -> Result<Report> {
    let config = resolve(config, mode, opts)?;
    let cells = cells(&config)?;
    let outcomes = run_cells(&cells, opts.jobs, opts.reverse)?;
    let csv = to_csv(&outcomes, opts.timings);

    let out_dir = config.outputs.dir.clone().expect("resolved");
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    write_json(&out_dir.join("resolved_config.json"), &config)?;
    write(&out_dir.join("results.csv"), &csv)?;
    if config.sweep.is_some() {
        let dir = out_dir.join("policies");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        for (i, o) in outcomes.iter().enumerate() {
            if let Some(file) = o.policy_file() {
                write_json(&dir.join(format!("cell-{i:04}.json")), &file)?;
            }
        }
    } else if let Some(file) = outcomes.first().and_then(CellOutcome::policy_file) {
        write_json(&out_dir.join("policy.json"), &file)?;
    }

    let failure = outcomes.iter().find_map(CellOutcome::failure);
    Ok(Report { csv, out_dir, outcomes, failure })
}

/// Loads a policy export and recomputes its value.
pub fn eval_policy(path: &Path) -> Result<Reevaluation> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let file: PolicyFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    reevaluate(&file)
}

/// Registered domains with their parameters and defaults.
pub fn list_domains() -> String {
    let mut out = String::new();
    for d in riskplan::domains::DOMAINS {
        out.push_str(&format!("{}\n    {}\n", d.name, d.summary));
        if !d.params.is_empty() {
            let params: Vec<String> = d.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!("    params: {}\n", params.join(" ")));
        }
    }
    out
}
