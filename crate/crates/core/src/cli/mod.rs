//! Batch front end behind the `lvhba` binary: `run`, `checkgrad` and `sweep`
//! over a flat key-value config file.

pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{ConfigError, InitVector, RunConfig, SweepAxis, SweepSpec};

use crate::bench::{BenchmarkInstance, BenchmarkSpec, MetricTracker, Metrics, ACCURACY_THRESHOLD};
use crate::solver::{RunError, RunOutput, Solver, Trace};
use crate::validate::{
    check_value_gradient, sample_feasible, validate_problem, GradientCheck, ValidationReport,
};
use crate::valuefn::{OracleOptions, Proximal};
use crate::{derive_constants, BilevelProblem, IterateState, LipschitzModuli, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Tolerance on the relative gradient error in `checkgrad`.
pub const CHECKGRAD_TOL: f64 = 1e-5;
/// Saddle tolerance of the oracle values differenced by `checkgrad`.
pub const CHECKGRAD_ORACLE_TOL: f64 = 1e-12;
/// Finite-difference step of `checkgrad`.
pub const CHECKGRAD_STEP: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "lvhba",
    version,
    about = "Single-loop Hessian-free bilevel solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (must exist).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override solver.max_iters.
    #[arg(long, global = true, value_name = "K")]
    pub iters: Option<usize>,
    /// Override the seed (also the strongly convex data seed).
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
    /// Write convergence.svg.
    #[arg(long, global = true, overrides_with = "no_svg")]
    pub svg: bool,
    /// Do not write convergence.svg.
    #[arg(long = "no-svg", global = true)]
    pub no_svg: bool,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solver on one configuration.
    Run { config: PathBuf },
    /// Check the value-function gradient and the problem oracles.
    Checkgrad { config: PathBuf },
    /// Run a grid over one axis and write a summary table.
    Sweep { config: PathBuf },
}

impl Cli {
    fn apply(&self, rc: &mut RunConfig) {
        if let Some(dir) = &self.out {
            rc.out_dir = dir.clone();
        }
        if let Some(k) = self.iters {
            rc.solver.max_iters = k;
        }
        if let Some(s) = self.seed {
            rc.seed = s;
            if let BenchmarkSpec::StronglyConvex { seed, .. } = &mut rc.benchmark {
                *seed = s;
            }
        }
        if self.svg {
            rc.svg = true;
        }
        if self.no_svg {
            rc.svg = false;
        }
    }
}

/// Parses `args` (including the program name) and executes the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let path = match &cli.command {
        Command::Run { config } | Command::Checkgrad { config } | Command::Sweep { config } => {
            config.clone()
        }
    };
    let mut rc = match load_config(&path) {
        Ok(rc) => rc,
        Err(msg) => {
            eprintln!("{}: {msg}", path.display());
            return EXIT_CONFIG;
        }
    };
    cli.apply(&mut rc);
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { .. } => cmd_run(&rc, quiet),
        Command::Checkgrad { .. } => cmd_checkgrad(&rc, quiet),
        Command::Sweep { .. } => cmd_sweep(&rc, quiet),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config: {e}"))?;
    RunConfig::parse(&text).map_err(|e| e.to_string())
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn check_out_dir(dir: &Path) -> Result<(), String> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(format!("output directory {} does not exist", dir.display()))
    }
}

fn build(rc: &RunConfig) -> Result<BenchmarkInstance, String> {
    rc.benchmark
        .build()
        .map_err(|e| format!("cannot build benchmark: {e}"))
}

fn initial_state(
    rc: &RunConfig,
    problem: &dyn BilevelProblem,
    solver: &Solver<'_>,
) -> Result<IterateState, String> {
    let x = rc
        .init_x
        .materialize(problem.dim_x())
        .map_err(|e| format!("init.x: {e}"))?;
    let y = rc
        .init_y
        .materialize(problem.dim_y())
        .map_err(|e| format!("init.y: {e}"))?;
    Ok(solver.init_state(x, y))
}

/// Result of one solver run on a benchmark together with sampled metrics.
pub struct TrackedRun {
    pub result: Result<RunOutput, RunError>,
    pub samples: Vec<crate::bench::MetricSample>,
    pub first_hit: Option<usize>,
    pub final_metrics: Option<Metrics>,
    pub wall_seconds: f64,
}

/// Runs `config` on `instance` from `init`, sampling metrics at the
/// diagnostic cadence.
pub fn tracked_run(
    instance: &BenchmarkInstance,
    config: &SolverConfig,
    init: &IterateState,
    solver: &Solver<'_>,
    stop_at_threshold: bool,
) -> TrackedRun {
    let mut tracker = MetricTracker::new(instance, config.residual_every);
    if stop_at_threshold && instance.known_x_star.is_some() {
        tracker = tracker.stop_at_threshold();
    }
    let start = Instant::now();
    let result = solver.run(init, &mut tracker);
    let wall_seconds = start.elapsed().as_secs_f64();
    let final_metrics = match &result {
        Ok(out) => Some(instance.metrics(&out.final_state.x, &out.final_state.y)),
        Err(e) => e.last_state.as_ref().map(|s| instance.metrics(&s.x, &s.y)),
    };
    TrackedRun {
        result,
        first_hit: tracker.first_hit,
        samples: tracker.samples,
        final_metrics,
        wall_seconds,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// `lvhba run`: writes `trace.csv`, `trace.json`, `metadata.json` and
/// optionally `convergence.svg` into the output directory.
pub fn cmd_run(rc: &RunConfig, quiet: bool) -> i32 {
    if let Err(e) = check_out_dir(&rc.out_dir) {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    let instance = match build(rc) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let problem = instance.problem.as_ref();
    let solver = match Solver::new(problem, rc.solver.clone(), &instance.moduli) {
        Ok(s) => s.with_label(instance.name.clone(), Some(rc.seed)),
        Err(e) => {
            eprintln!("invalid solver configuration: {e}");
            return EXIT_CONFIG;
        }
    };
    let init = match initial_state(rc, problem, &solver) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    info!(
        "running {} for {} iterations",
        instance.name, rc.solver.max_iters
    );
    let run = tracked_run(&instance, &rc.solver, &init, &solver, false);
    let (trace, status, err_text) = match &run.result {
        Ok(out) => (&out.trace, "ok", None),
        Err(e) => (&e.trace, "aborted", Some(e.to_string())),
    };

    let dir = &rc.out_dir;
    let mut outcome = write_text(&dir.join("trace.csv"), &trace.to_csv())
        .and_then(|_| write_text(&dir.join("trace.json"), &trace.to_json()));
    let metadata = run_metadata(
        rc,
        &instance,
        &solver,
        trace,
        &run,
        status,
        err_text.as_deref(),
    );
    outcome = outcome.and_then(|_| write_text(&dir.join("metadata.json"), &metadata));
    if rc.svg && outcome.is_ok() {
        if let Some(svg) = convergence_svg(&instance.name, trace, &run.samples) {
            outcome = write_text(&dir.join("convergence.svg"), &svg);
        }
    }
    if let Err(e) = outcome {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }

    if let Some(e) = err_text {
        error!("{e}");
        eprintln!("solver aborted: {e}");
        return EXIT_SOLVER;
    }
    let last = trace.last();
    say(
        quiet,
        format!(
            "{}: {} iterations, F = {:.6e}, f = {:.6e}",
            instance.name,
            trace.metadata.iterations,
            last.map_or(f64::NAN, |r| r.upper),
            last.map_or(f64::NAN, |r| r.lower)
        ),
    );
    if let Some(m) = &run.final_metrics {
        if let Some(v) = m.rel_x_err {
            say(quiet, format!("rel_x_err = {v:.6e}"));
        }
        if let Some(v) = m.ll_err {
            say(quiet, format!("ll_err = {v:.6e}"));
        }
        if let Some(v) = m.hyper {
            say(quiet, format!("hyper = {v:.6e}"));
        }
    }
    if let Some(k) = run.first_hit {
        say(
            quiet,
            format!("rel_x_err <= {ACCURACY_THRESHOLD:e} first at k = {k}"),
        );
    }
    say(quiet, format!("wrote {}", dir.display()));
    EXIT_OK
}

fn run_metadata(
    rc: &RunConfig,
    instance: &BenchmarkInstance,
    solver: &Solver<'_>,
    trace: &Trace,
    run: &TrackedRun,
    status: &str,
    error: Option<&str>,
) -> String {
    let m = &trace.metadata;
    let value = json!({
        "config_text": rc.to_config_text(),
        "benchmark": rc.benchmark,
        "problem": instance.name,
        "seed": rc.seed,
        "solver": rc.solver,
        "init_x": rc.init_x,
        "init_y": rc.init_y,
        "moduli": instance.moduli,
        "constants": solver.constants(),
        "alpha0": m.alpha0,
        "beta0": m.beta0,
        "eta0": m.eta0,
        "eta_guard": m.eta_guard,
        "upper_floor": m.upper_floor,
        "iterations": m.iterations,
        "stop_reason": m.stop_reason,
        "status": status,
        "error": error,
        "final_metrics": run.final_metrics,
        "threshold": ACCURACY_THRESHOLD,
        "iterations_to_threshold": run.first_hit,
        "version": env!("CARGO_PKG_VERSION"),
    });
    serde_json::to_string_pretty(&value).expect("metadata serializes")
}

fn convergence_svg(
    title: &str,
    trace: &Trace,
    samples: &[crate::bench::MetricSample],
) -> Option<String> {
    let from_trace = |name: &str, f: fn(&crate::solver::TraceRecord) -> Option<f64>| svg::Series {
        name: name.into(),
        points: trace
            .records
            .iter()
            .filter_map(|r| f(r).map(|v| (r.k as f64, v)))
            .collect(),
    };
    let from_samples =
        |name: &str, f: fn(&crate::bench::MetricSample) -> Option<f64>| svg::Series {
            name: name.into(),
            points: samples
                .iter()
                .filter_map(|s| f(s).map(|v| (s.k as f64, v)))
                .collect(),
        };
    svg::render(
        title,
        &[
            from_samples("rel_x_err", |s| s.rel_x_err),
            from_samples("ll_err", |s| s.ll_err),
            from_trace("gap", |r| r.gap),
            from_trace("residual", |r| r.residual),
            from_trace("merit", |r| r.merit),
        ],
    )
}

/// Gradient and oracle checks on one problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckgradReport {
    pub gradient: GradientCheck,
    pub validation: ValidationReport,
}

impl CheckgradReport {
    pub fn passed(&self) -> bool {
        self.gradient.passed(CHECKGRAD_TOL) && self.validation.passed()
    }
}

/// Runs the value-gradient check at `points` sampled feasible points and the
/// problem validation with `samples` probes.
pub fn checkgrad(
    problem: &dyn BilevelProblem,
    config: &SolverConfig,
    moduli: &LipschitzModuli,
    points: usize,
    samples: usize,
    seed: u64,
) -> crate::Result<CheckgradReport> {
    let constants = derive_constants(problem, config, moduli)?;
    let prox = Proximal::from_config(config);
    let sample = sample_feasible(problem, prox, points, 1.0, seed)?;
    let opts = OracleOptions::with_tol(CHECKGRAD_ORACLE_TOL);
    let gradient = check_value_gradient(problem, prox, &constants, &opts, &sample, CHECKGRAD_STEP)?;
    let validation = validate_problem(problem, samples.max(1), seed)?;
    Ok(CheckgradReport {
        gradient,
        validation,
    })
}

/// `lvhba checkgrad`: exit 0 iff every check passes.
pub fn cmd_checkgrad(rc: &RunConfig, quiet: bool) -> i32 {
    let instance = match build(rc) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let report = match checkgrad(
        instance.problem.as_ref(),
        &rc.solver,
        &instance.moduli,
        rc.checkgrad_points,
        rc.validate_samples,
        rc.seed,
    ) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("check failed to run: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    let g = &report.gradient;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    say(
        quiet,
        format!(
            "{} grad_v: max relative error {:.3e} over {} points (tol {CHECKGRAD_TOL:e})",
            verdict(g.passed(CHECKGRAD_TOL)),
            g.max_rel_error,
            g.points
        ),
    );
    for c in &report.validation.checks {
        say(
            quiet,
            format!("{} {}: worst {:.3e}", verdict(c.passed), c.name, c.worst),
        );
    }
    if !report.passed() {
        if let Some(w) = &g.worst_point {
            if !g.passed(CHECKGRAD_TOL) {
                eprintln!("grad_v witness (x, y, z) = {:?}", w.as_slice());
            }
        }
        for c in report.validation.failures() {
            if let Some(w) = &c.witness {
                eprintln!(
                    "{} witness: x = {:?}, y = {:?}, y' = {:?}, value = {:e}",
                    c.name,
                    w.x.as_slice(),
                    w.y.as_slice(),
                    w.y_other.as_ref().map(|v| v.as_slice().to_vec()),
                    w.value
                );
            }
        }
        return EXIT_CHECK_FAILED;
    }
    EXIT_OK
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub status: String,
    pub iters_to_threshold: Option<usize>,
    pub wall_sec: f64,
    pub iterations: usize,
    pub rel_x_err: Option<f64>,
    pub ll_err: Option<f64>,
    pub hyper: Option<f64>,
    pub gap: Option<f64>,
    pub residual: Option<f64>,
    pub message: String,
}

/// Applies one grid value to a copy of `rc`.
pub fn sweep_cell(rc: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig, String> {
    let mut cell = rc.clone();
    let whole = |v: f64| -> Result<u64, String> {
        if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
            Ok(v as u64)
        } else {
            Err(format!(
                "{} value {v} is not a nonnegative integer",
                axis.name()
            ))
        }
    };
    match axis {
        SweepAxis::PExp => cell.solver.p_exp = value,
        SweepAxis::StepScale => {
            if !(value > 0.0) {
                return Err(format!("step_scale value {value} must be positive"));
            }
            cell.solver.alpha = cell.solver.alpha.scaled(value);
            cell.solver.beta = cell.solver.beta.scaled(value);
        }
        SweepAxis::N => {
            let n = whole(value)? as usize;
            match &mut cell.benchmark {
                BenchmarkSpec::MerelyConvex { n: m }
                | BenchmarkSpec::StronglyConvex { n: m, .. } => *m = n,
                BenchmarkSpec::Scalar { .. } => {
                    return Err("the scalar benchmark has no dimension".into())
                }
            }
        }
        SweepAxis::Seed => {
            let s = whole(value)?;
            cell.seed = s;
            if let BenchmarkSpec::StronglyConvex { seed, .. } = &mut cell.benchmark {
                *seed = s;
            }
        }
    }
    cell.solver.validate().map_err(|e| e.to_string())?;
    Ok(cell)
}

fn run_cell(rc: &RunConfig, spec: &SweepSpec, index: usize, value: f64) -> SweepRow {
    let mut row = SweepRow {
        axis: spec.axis.name().into(),
        value,
        status: "failed".into(),
        iters_to_threshold: None,
        wall_sec: 0.0,
        iterations: 0,
        rel_x_err: None,
        ll_err: None,
        hyper: None,
        gap: None,
        residual: None,
        message: String::new(),
    };
    let cell = match sweep_cell(rc, spec.axis, value) {
        Ok(c) => c,
        Err(e) => {
            row.message = e;
            return row;
        }
    };
    let instance = match build(&cell) {
        Ok(i) => i,
        Err(e) => {
            row.message = e;
            return row;
        }
    };
    let problem = instance.problem.as_ref();
    let solver = match Solver::new(problem, cell.solver.clone(), &instance.moduli) {
        Ok(s) => s.with_label(instance.name.clone(), Some(cell.seed)),
        Err(e) => {
            row.message = e.to_string();
            return row;
        }
    };
    let init = match initial_state(&cell, problem, &solver) {
        Ok(s) => s,
        Err(e) => {
            row.message = e;
            return row;
        }
    };
    let run = tracked_run(
        &instance,
        &cell.solver,
        &init,
        &solver,
        spec.stop_at_threshold,
    );
    row.wall_sec = run.wall_seconds;
    row.iters_to_threshold = run.first_hit;
    if let Some(m) = &run.final_metrics {
        row.rel_x_err = m.rel_x_err;
        row.ll_err = m.ll_err;
        row.hyper = m.hyper;
    }
    let trace = match &run.result {
        Ok(out) => {
            row.status = "ok".into();
            &out.trace
        }
        Err(e) => {
            row.message = e.to_string();
            &e.trace
        }
    };
    row.iterations = trace.metadata.iterations;
    if let Some(r) = trace
        .records
        .iter()
        .rev()
        .find(|r| r.gap.is_some() || r.residual.is_some())
    {
        row.gap = r.gap;
        row.residual = r.residual;
    }
    let path = cell.out_dir.join(format!("sweep_{index:03}_trace.csv"));
    if let Err(e) = write_text(&path, &trace.to_csv()) {
        row.message = e;
        row.status = "failed".into();
    }
    row
}

/// Worker count for sweeps: `LVHBA_THREADS` if set to a positive integer.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("LVHBA_THREADS")
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
}

/// Runs every grid cell (in parallel) and returns the rows in grid order.
pub fn run_sweep(rc: &RunConfig, spec: &SweepSpec) -> Vec<SweepRow> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads() {
        builder = builder.num_threads(n);
    }
    let cells = |rc: &RunConfig| -> Vec<SweepRow> {
        spec.values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| run_cell(rc, spec, i, v))
            .collect()
    };
    match builder.build() {
        Ok(pool) => pool.install(|| cells(rc)),
        Err(_) => cells(rc),
    }
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "axis",
        "value",
        "status",
        "iters_to_threshold",
        "wall_sec",
        "iterations",
        "rel_x_err",
        "ll_err",
        "hyper",
        "gap",
        "residual",
        "message",
    ]);
    for r in rows {
        let _ = w.write_record([
            r.axis.clone(),
            format!("{:?}", r.value),
            r.status.clone(),
            r.iters_to_threshold
                .map(|k| k.to_string())
                .unwrap_or_default(),
            format!("{:.6}", r.wall_sec),
            r.iterations.to_string(),
            fmt(r.rel_x_err),
            fmt(r.ll_err),
            fmt(r.hyper),
            fmt(r.gap),
            fmt(r.residual),
            r.message.clone(),
        ]);
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// `lvhba sweep`: writes `summary.csv`; exit 0 if at least one cell ran.
pub fn cmd_sweep(rc: &RunConfig, quiet: bool) -> i32 {
    let Some(spec) = rc.sweep.as_ref() else {
        eprintln!("config: sweep.axis is required for sweep");
        return EXIT_CONFIG;
    };
    if spec.values.is_empty() {
        eprintln!("config: sweep.values is empty");
        return EXIT_CONFIG;
    }
    if let Err(e) = check_out_dir(&rc.out_dir) {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    let rows = run_sweep(rc, spec);
    if let Err(e) = write_text(&rc.out_dir.join("summary.csv"), &summary_csv(&rows)) {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    for r in &rows {
        say(
            quiet,
            format!(
                "{} = {:<8} {:<6} iters_to_1e-2 = {:<8} wall = {:.3}s {}",
                r.axis,
                r.value,
                r.status,
                r.iters_to_threshold
                    .map_or("-".to_string(), |k| k.to_string()),
                r.wall_sec,
                r.message
            ),
        );
    }
    if rows.iter().any(|r| r.status == "ok") {
        EXIT_OK
    } else {
        EXIT_SOLVER
    }
}
