//! Flat `key = value` run configuration.
//!
//! ```text
//! # merely convex run
//! benchmark = merely_convex
//! benchmark.n = 100
//! solver.alpha = 0.002
//! solver.eta.exponent = -0.1     # eta_k = eta (k + 1)^-0.1
//! init = 10*ones
//! output.dir = out
//! ```
//!
//! Every error carries the 1-based line it refers to.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::BenchmarkSpec;
use crate::config::{Diagnostics, EarlyStop};
use crate::{Schedule, SolverConfig, StepMode, Vector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, 0 when the error is not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Initial value of `x` or `y`: a multiple of the all-ones vector or an
/// explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitVector {
    Uniform(f64),
    Explicit(Vec<f64>),
}

impl InitVector {
    pub fn materialize(&self, dim: usize) -> Result<Vector, String> {
        match self {
            InitVector::Uniform(s) => Ok(Vector::from_element(dim, *s)),
            InitVector::Explicit(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
            InitVector::Explicit(v) => Err(format!(
                "initial vector has {} entries, expected {dim}",
                v.len()
            )),
        }
    }

    fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        if let Some(scale) = t.strip_suffix("*ones") {
            return parse_f64(scale).map(InitVector::Uniform);
        }
        if t == "ones" {
            return Some(InitVector::Uniform(1.0));
        }
        if t == "zeros" {
            return Some(InitVector::Uniform(0.0));
        }
        if t.starts_with('[') && t.ends_with(']') {
            let inner = &t[1..t.len() - 1];
            if inner.trim().is_empty() {
                return Some(InitVector::Explicit(Vec::new()));
            }
            return inner
                .split(',')
                .map(parse_f64)
                .collect::<Option<Vec<_>>>()
                .map(InitVector::Explicit);
        }
        None
    }

    fn canonical(&self) -> String {
        match self {
            InitVector::Uniform(s) => format!("{s:?}*ones"),
            InitVector::Explicit(v) => {
                let items: Vec<String> = v.iter().map(|e| format!("{e:?}")).collect();
                format!("[{}]", items.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PExp,
    N,
    Seed,
    StepScale,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PExp => "p_exp",
            SweepAxis::N => "n",
            SweepAxis::Seed => "seed",
            SweepAxis::StepScale => "step_scale",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "p_exp" => SweepAxis::PExp,
            "n" => SweepAxis::N,
            "seed" => SweepAxis::Seed,
            "step_scale" => SweepAxis::StepScale,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// End each cell once `rel_x_err <= 1e-2` (when `x*` is known).
    pub stop_at_threshold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmark: BenchmarkSpec,
    pub solver: SolverConfig,
    pub init_x: InitVector,
    pub init_y: InitVector,
    pub out_dir: PathBuf,
    pub svg: bool,
    pub seed: u64,
    pub sweep: Option<SweepSpec>,
    pub checkgrad_points: usize,
    pub validate_samples: usize,
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

fn fmt_schedule(out: &mut String, name: &str, s: &Schedule) {
    match *s {
        Schedule::Constant(v) => {
            let _ = writeln!(out, "solver.{name} = {v:?}");
        }
        Schedule::Polynomial { scale, exponent } => {
            let _ = writeln!(out, "solver.{name} = {scale:?}");
            let _ = writeln!(out, "solver.{name}.exponent = {exponent:?}");
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

impl RunConfig {
    /// Parses a config file. A JSON document is accepted too when it carries
    /// a `config_text` field (the layout of `metadata.json`).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| err(e.line(), format!("invalid json: {e}")))?;
            let inner = v
                .get("config_text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| err(0, "json input lacks a config_text string"))?;
            return Self::parse(inner);
        }

        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(
                    line,
                    format!("expected key = value, found {content:?}"),
                ));
            };
            let key = key.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(err(line, format!("invalid key {key:?}")));
            }
            if let Some(prev) = entries.get(key) {
                return Err(err(
                    line,
                    format!("duplicate key {key:?} (first set on line {})", prev.line),
                ));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Resolver { entries }.resolve()
    }

    /// Canonical text listing every effective parameter; parsing it yields
    /// an equal config.
    pub fn to_config_text(&self) -> String {
        let mut o = String::new();
        match self.benchmark {
            BenchmarkSpec::Scalar {
                upper_scale,
                constrained,
            } => {
                let _ = writeln!(o, "benchmark = scalar");
                let _ = writeln!(o, "benchmark.upper_scale = {upper_scale:?}");
                let _ = writeln!(o, "benchmark.constrained = {constrained}");
            }
            BenchmarkSpec::MerelyConvex { n } => {
                let _ = writeln!(o, "benchmark = merely_convex");
                let _ = writeln!(o, "benchmark.n = {n}");
            }
            BenchmarkSpec::StronglyConvex { n, seed } => {
                let _ = writeln!(o, "benchmark = strongly_convex");
                let _ = writeln!(o, "benchmark.n = {n}");
                let _ = writeln!(o, "benchmark.seed = {seed}");
            }
        }
        let s = &self.solver;
        let _ = writeln!(o, "seed = {}", self.seed);
        let _ = writeln!(o, "solver.gamma1 = {:?}", s.gamma1);
        let _ = writeln!(o, "solver.gamma2 = {:?}", s.gamma2);
        let _ = writeln!(o, "solver.radius = {:?}", s.radius);
        fmt_schedule(&mut o, "alpha", &s.alpha);
        fmt_schedule(&mut o, "beta", &s.beta);
        fmt_schedule(&mut o, "eta", &s.eta);
        let _ = writeln!(o, "solver.c_bar = {:?}", s.c_bar);
        let _ = writeln!(o, "solver.p_exp = {:?}", s.p_exp);
        let _ = writeln!(o, "solver.max_iters = {}", s.max_iters);
        let _ = writeln!(o, "solver.saddle_tol = {:?}", s.saddle_tol);
        let _ = writeln!(o, "solver.residual_every = {}", s.residual_every);
        let mode = match s.mode {
            StepMode::Practice => "practice",
            StepMode::Theory => "theory",
        };
        let _ = writeln!(o, "solver.mode = {mode}");
        let _ = writeln!(o, "solver.gap = {}", s.diagnostics.gap);
        let _ = writeln!(o, "solver.residual = {}", s.diagnostics.residual);
        let _ = writeln!(o, "solver.merit = {}", s.diagnostics.merit);
        if let Some(f) = s.upper_floor {
            let _ = writeln!(o, "solver.upper_floor = {f:?}");
        }
        if let Some(e) = s.early_stop {
            let _ = writeln!(o, "solver.early_stop.rtol = {:?}", e.rtol);
            let _ = writeln!(o, "solver.early_stop.gtol = {:?}", e.gtol);
        }
        let _ = writeln!(o, "solver.record_time = {}", s.record_time);
        let _ = writeln!(o, "init.x = {}", self.init_x.canonical());
        let _ = writeln!(o, "init.y = {}", self.init_y.canonical());
        let _ = writeln!(o, "output.dir = {}", self.out_dir.display());
        let _ = writeln!(o, "output.svg = {}", self.svg);
        let _ = writeln!(o, "checkgrad.points = {}", self.checkgrad_points);
        let _ = writeln!(o, "checkgrad.samples = {}", self.validate_samples);
        if let Some(sw) = &self.sweep {
            let vals: Vec<String> = sw.values.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(o, "sweep.axis = {}", sw.axis.name());
            let _ = writeln!(o, "sweep.values = {}", vals.join(", "));
            let _ = writeln!(o, "sweep.stop_at_threshold = {}", sw.stop_at_threshold);
        }
        o
    }
}

struct Resolver {
    entries: BTreeMap<String, Entry>,
}

impl Resolver {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.take(key)
            .map(|e| {
                parse_f64(&e.value).ok_or_else(|| {
                    err(
                        e.line,
                        format!("{key}: expected a number, found {:?}", e.value),
                    )
                })
            })
            .transpose()
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        match self.f64(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(err(line, format!("{key} must be positive, found {v}")))
            }
            other => Ok(other),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.take(key)
            .map(|e| {
                e.value.parse::<u64>().map_err(|_| {
                    err(
                        e.line,
                        format!("{key}: expected a nonnegative integer, found {:?}", e.value),
                    )
                })
            })
            .transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        self.u64(key)?
            .map(|v| usize::try_from(v).map_err(|_| err(line, format!("{key} is too large"))))
            .transpose()
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.take(key)
            .map(|e| match e.value.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(err(
                    e.line,
                    format!("{key}: expected true or false, found {other:?}"),
                )),
            })
            .transpose()
    }

    fn schedule(&mut self, name: &str, current: Schedule) -> Result<Schedule, ConfigError> {
        let base = self.positive(&format!("solver.{name}"))?;
        let exponent = self.f64(&format!("solver.{name}.exponent"))?;
        let scale = base.unwrap_or(match current {
            Schedule::Constant(v) => v,
            Schedule::Polynomial { scale, .. } => scale,
        });
        Ok(match (exponent, current) {
            (Some(e), _) => Schedule::Polynomial { scale, exponent: e },
            (None, Schedule::Polynomial { exponent, .. }) if base.is_none() => {
                Schedule::Polynomial { scale, exponent }
            }
            (None, _) => Schedule::Constant(scale),
        })
    }

    fn resolve(mut self) -> Result<RunConfig, ConfigError> {
        if let Some(e) = self.take("problem.module") {
            return Err(err(
                e.line,
                "external problem modules are not supported; select a shipped benchmark",
            ));
        }
        let seed = self.u64("seed")?.unwrap_or(0);
        let kind = self
            .take("benchmark")
            .ok_or_else(|| err(0, "missing required key \"benchmark\""))?;
        let n_line = self
            .entries
            .get("benchmark.n")
            .map_or(kind.line, |e| e.line);
        let benchmark = match kind.value.as_str() {
            "merely_convex" => {
                let n = self.usize("benchmark.n")?.unwrap_or(100);
                if n == 0 {
                    return Err(err(n_line, "benchmark.n must be at least 1"));
                }
                BenchmarkSpec::MerelyConvex { n }
            }
            "strongly_convex" => {
                let n = self.usize("benchmark.n")?.unwrap_or(100);
                if n < 2 {
                    return Err(err(n_line, "benchmark.n must be at least 2"));
                }
                let s = self.u64("benchmark.seed")?.unwrap_or(seed);
                BenchmarkSpec::StronglyConvex { n, seed: s }
            }
            "scalar" => BenchmarkSpec::Scalar {
                upper_scale: self.f64("benchmark.upper_scale")?.unwrap_or(1.0),
                constrained: self.bool("benchmark.constrained")?.unwrap_or(true),
            },
            other => {
                return Err(err(
                    kind.line,
                    format!("unknown benchmark {other:?} (expected merely_convex, strongly_convex or scalar)"),
                ))
            }
        };
        let mut s = default_solver(&benchmark);

        if let Some(v) = self.positive("solver.gamma1")? {
            s.gamma1 = v;
        }
        if let Some(v) = self.positive("solver.gamma2")? {
            s.gamma2 = v;
        }
        if let Some(v) = self.positive("solver.radius")? {
            s.radius = v;
        }
        s.alpha = self.schedule("alpha", s.alpha)?;
        s.beta = self.schedule("beta", s.beta)?;
        s.eta = self.schedule("eta", s.eta)?;
        if let Some(v) = self.positive("solver.c_bar")? {
            s.c_bar = v;
        }
        let p_line = self.entries.get("solver.p_exp").map_or(0, |e| e.line);
        if let Some(v) = self.f64("solver.p_exp")? {
            if !(v > 0.0 && v < 0.5) {
                return Err(err(
                    p_line,
                    format!("solver.p_exp must lie in (0, 0.5), found {v}"),
                ));
            }
            s.p_exp = v;
        }
        if let Some(v) = self.usize("solver.max_iters")? {
            s.max_iters = v;
        }
        if let Some(v) = self.positive("solver.saddle_tol")? {
            s.saddle_tol = v;
        }
        let every_line = self
            .entries
            .get("solver.residual_every")
            .map_or(0, |e| e.line);
        if let Some(v) = self.usize("solver.residual_every")? {
            if v == 0 {
                return Err(err(every_line, "solver.residual_every must be positive"));
            }
            s.residual_every = v;
        }
        if let Some(e) = self.take("solver.mode") {
            s.mode = match e.value.as_str() {
                "practice" => StepMode::Practice,
                "theory" => StepMode::Theory,
                other => {
                    return Err(err(
                        e.line,
                        format!("solver.mode: expected practice or theory, found {other:?}"),
                    ))
                }
            };
        }
        let d = Diagnostics {
            gap: self.bool("solver.gap")?.unwrap_or(s.diagnostics.gap),
            residual: self
                .bool("solver.residual")?
                .unwrap_or(s.diagnostics.residual),
            merit: self.bool("solver.merit")?.unwrap_or(s.diagnostics.merit),
        };
        s.diagnostics = d;
        if let Some(v) = self.f64("solver.upper_floor")? {
            s.upper_floor = Some(v);
        }
        let rtol = self.f64("solver.early_stop.rtol")?;
        let gtol = self.f64("solver.early_stop.gtol")?;
        if rtol.is_some() || gtol.is_some() {
            s.early_stop = Some(EarlyStop {
                rtol: rtol.unwrap_or(f64::INFINITY),
                gtol: gtol.unwrap_or(f64::INFINITY),
            });
        }
        if let Some(v) = self.bool("solver.record_time")? {
            s.record_time = v;
        }
        s.validate().map_err(|e| err(0, e.to_string()))?;

        let both = self.init("init")?;
        let init_x = self
            .init("init.x")?
            .or_else(|| both.clone())
            .unwrap_or(InitVector::Uniform(default_init(&benchmark)));
        let init_y = self
            .init("init.y")?
            .or(both)
            .unwrap_or(InitVector::Uniform(default_init(&benchmark)));

        let out_dir = self
            .take("output.dir")
            .map_or_else(|| PathBuf::from("."), |e| PathBuf::from(e.value));
        let svg = self.bool("output.svg")?.unwrap_or(true);
        let checkgrad_points = self.usize("checkgrad.points")?.unwrap_or(20);
        let validate_samples = self.usize("checkgrad.samples")?.unwrap_or(20);

        let sweep = match self.take("sweep.axis") {
            None => None,
            Some(e) => {
                let axis = SweepAxis::parse(&e.value).ok_or_else(|| {
                    err(
                        e.line,
                        format!(
                            "sweep.axis: expected p_exp, n, seed or step_scale, found {:?}",
                            e.value
                        ),
                    )
                })?;
                let values = match self.take("sweep.values") {
                    None => Vec::new(),
                    Some(v) if v.value.is_empty() => Vec::new(),
                    Some(v) => v
                        .value
                        .split(',')
                        .map(parse_f64)
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| {
                            err(
                                v.line,
                                format!("sweep.values: expected numbers, found {:?}", v.value),
                            )
                        })?,
                };
                Some(SweepSpec {
                    axis,
                    values,
                    stop_at_threshold: self.bool("sweep.stop_at_threshold")?.unwrap_or(true),
                })
            }
        };

        if let Some((key, e)) = self.entries.iter().min_by_key(|(_, e)| e.line) {
            return Err(err(e.line, format!("unknown key {key:?}")));
        }
        Ok(RunConfig {
            benchmark,
            solver: s,
            init_x,
            init_y,
            out_dir,
            svg,
            seed,
            sweep,
            checkgrad_points,
            validate_samples,
        })
    }

    fn init(&mut self, key: &str) -> Result<Option<InitVector>, ConfigError> {
        self.take(key)
            .map(|e| {
                InitVector::parse(&e.value).ok_or_else(|| {
                    err(
                        e.line,
                        format!(
                            "{key}: expected <number>*ones, ones, zeros or [a, b, ...], found {:?}",
                            e.value
                        ),
                    )
                })
            })
            .transpose()
    }
}

fn default_init(b: &BenchmarkSpec) -> f64 {
    match b {
        BenchmarkSpec::MerelyConvex { .. } => 10.0,
        BenchmarkSpec::StronglyConvex { .. } => 5.0,
        BenchmarkSpec::Scalar { .. } => 0.0,
    }
}

/// The benchmark's default solver settings, without building the problem.
fn default_solver(b: &BenchmarkSpec) -> SolverConfig {
    match *b {
        BenchmarkSpec::Scalar {
            upper_scale,
            constrained,
        } => crate::bench::build_scalar(upper_scale, constrained).default_config,
        BenchmarkSpec::MerelyConvex { n } => crate::bench::build_merely_convex(n).default_config,
        BenchmarkSpec::StronglyConvex { .. } => crate::bench::strongly_convex_defaults(),
    }
}
