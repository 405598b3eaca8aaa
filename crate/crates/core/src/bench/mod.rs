//! Synthetic benchmark problems with analytic references and the metrics
//! reported on them.

mod merely_convex;
mod scalar;
mod strongly_convex;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use merely_convex::MerelyConvex;
pub use scalar::ScalarTestbed;
pub use strongly_convex::StronglyConvex;

use crate::solver::{Control, Observer, TraceRecord};
use crate::{
    BilevelProblem, IterateState, LipschitzModuli, Result, Schedule, SolverConfig, Vector,
};

/// Relative accuracy at which a run counts as converged.
pub const ACCURACY_THRESHOLD: f64 = 1e-2;

/// Serializable selector for the shipped benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkSpec {
    Scalar { upper_scale: f64, constrained: bool },
    MerelyConvex { n: usize },
    StronglyConvex { n: usize, seed: u64 },
}

impl BenchmarkSpec {
    pub fn build(&self) -> Result<BenchmarkInstance> {
        match *self {
            BenchmarkSpec::Scalar {
                upper_scale,
                constrained,
            } => Ok(build_scalar(upper_scale, constrained)),
            BenchmarkSpec::MerelyConvex { n } => Ok(build_merely_convex(n)),
            BenchmarkSpec::StronglyConvex { n, seed } => build_strongly_convex(n, seed),
        }
    }
}

type SolutionMap = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub struct BenchmarkInstance {
    pub name: String,
    pub spec: BenchmarkSpec,
    pub problem: Arc<dyn BilevelProblem>,
    pub known_x_star: Option<Vector>,
    pub known_y_star: Option<Vector>,
    /// Lower-level multiplier at the reference solution.
    pub known_z_star: Option<Vector>,
    pub default_config: SolverConfig,
    pub moduli: LipschitzModuli,
    ll_solution: Option<SolutionMap>,
}

impl fmt::Debug for BenchmarkInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkInstance")
            .field("name", &self.name)
            .field("spec", &self.spec)
            .field("known_x_star", &self.known_x_star.is_some())
            .field("ll_solution", &self.ll_solution.is_some())
            .finish()
    }
}

/// Scalar testbed with `F = s((x-1)^2 + (y-1)^2)/2`.
pub fn build_scalar(upper_scale: f64, constrained: bool) -> BenchmarkInstance {
    let p = if constrained {
        ScalarTestbed::new(upper_scale)
    } else {
        ScalarTestbed::unconstrained(upper_scale)
    };
    let moduli = p.moduli();
    let map_p = p.clone();
    BenchmarkInstance {
        name: "scalar".into(),
        spec: BenchmarkSpec::Scalar {
            upper_scale,
            constrained,
        },
        problem: Arc::new(p),
        known_x_star: None,
        known_y_star: None,
        known_z_star: None,
        default_config: SolverConfig {
            alpha: Schedule::Constant(0.01),
            beta: Schedule::Constant(0.01),
            eta: Schedule::Constant(0.1),
            residual_every: 10,
            ..SolverConfig::default()
        },
        moduli,
        ll_solution: Some(Arc::new(move |x: &Vector| {
            Vector::from_element(1, map_p.ll_solution(x[0]))
        })),
    }
}

pub fn build_merely_convex(n: usize) -> BenchmarkInstance {
    let p = MerelyConvex::new(n);
    BenchmarkInstance {
        name: format!("merely_convex(n={n})"),
        spec: BenchmarkSpec::MerelyConvex { n },
        known_x_star: Some(p.x_star()),
        known_y_star: Some(p.y_star()),
        known_z_star: Some(p.multiplier_star()),
        moduli: p.moduli(),
        default_config: SolverConfig {
            gamma1: 2.0,
            gamma2: 0.05,
            radius: 10.0,
            alpha: Schedule::Constant(0.002),
            beta: Schedule::Constant(0.002),
            eta: Schedule::Constant(0.03),
            c_bar: 1.0,
            p_exp: 0.3,
            max_iters: 200_000,
            residual_every: 1000,
            ..SolverConfig::default()
        },
        problem: Arc::new(p),
        // The lower-level solution set is not a singleton in y2.
        ll_solution: None,
    }
}

pub fn build_strongly_convex(n: usize, seed: u64) -> Result<BenchmarkInstance> {
    Ok(strongly_convex_instance(
        StronglyConvex::new(n, seed)?,
        seed,
    ))
}

/// Wraps explicit strongly convex data as a benchmark instance.
pub fn strongly_convex_instance(p: StronglyConvex, seed: u64) -> BenchmarkInstance {
    let n = p.n();
    let shared = Arc::new(p);
    let map_p = Arc::clone(&shared);
    BenchmarkInstance {
        name: format!("strongly_convex(n={n}, seed={seed})"),
        spec: BenchmarkSpec::StronglyConvex { n, seed },
        known_x_star: None,
        known_y_star: None,
        known_z_star: None,
        moduli: shared.moduli(),
        default_config: strongly_convex_defaults(),
        problem: shared,
        ll_solution: Some(Arc::new(move |x: &Vector| map_p.ll_solution(x))),
    }
}

/// Default settings of the strongly convex benchmark.
pub fn strongly_convex_defaults() -> SolverConfig {
    SolverConfig {
        gamma1: 1.0,
        gamma2: 1.0,
        radius: 10.0,
        alpha: Schedule::Constant(0.01),
        beta: Schedule::Constant(0.01),
        eta: Schedule::Constant(0.05),
        c_bar: 100.0,
        p_exp: 0.3,
        max_iters: 10_000,
        residual_every: 100,
        ..SolverConfig::default()
    }
}

impl BenchmarkInstance {
    /// `y*(x)` when the lower-level solution is unique and known.
    pub fn ll_solution(&self, x: &Vector) -> Option<Vector> {
        self.ll_solution.as_ref().map(|m| m(x))
    }

    /// `F(x, y*(x))`.
    pub fn hyperobjective(&self, x: &Vector) -> Option<f64> {
        self.ll_solution(x).map(|y| self.problem.upper(x, &y))
    }

    /// Starting point `(s 1, s 1)` before projection.
    pub fn uniform_init(&self, scale: f64) -> (Vector, Vector) {
        (
            Vector::from_element(self.problem.dim_x(), scale),
            Vector::from_element(self.problem.dim_y(), scale),
        )
    }

    pub fn metrics(&self, x: &Vector, y: &Vector) -> Metrics {
        let mut m = Metrics::default();
        match &self.known_x_star {
            Some(xs) => m.rel_x_err = Some((x - xs).norm() / xs.norm()),
            None => m.omitted.push("rel_x_err".into()),
        }
        match self.ll_solution(x) {
            Some(ys) => {
                m.ll_err = Some((y - &ys).norm());
                m.hyper = Some(self.problem.upper(x, &ys));
            }
            None => {
                m.omitted.push("ll_err".into());
                m.omitted.push("hyper".into());
            }
        }
        m
    }
}

/// Metrics available for an instance; those lacking a reference are listed
/// in `omitted`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rel_x_err: Option<f64>,
    pub ll_err: Option<f64>,
    pub hyper: Option<f64>,
    pub omitted: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub k: usize,
    pub rel_x_err: Option<f64>,
    pub ll_err: Option<f64>,
    pub hyper: Option<f64>,
}

/// Observer that samples metrics along a run and records the first
/// iteration at which `rel_x_err <= ACCURACY_THRESHOLD`.
#[derive(Debug)]
pub struct MetricTracker<'a> {
    instance: &'a BenchmarkInstance,
    every: usize,
    stop_at_threshold: bool,
    pub samples: Vec<MetricSample>,
    pub first_hit: Option<usize>,
}

impl<'a> MetricTracker<'a> {
    pub fn new(instance: &'a BenchmarkInstance, every: usize) -> Self {
        Self {
            instance,
            every: every.max(1),
            stop_at_threshold: false,
            samples: Vec::new(),
            first_hit: None,
        }
    }

    /// Ends the run as soon as the accuracy threshold is reached.
    pub fn stop_at_threshold(mut self) -> Self {
        self.stop_at_threshold = true;
        self
    }

    pub fn last(&self) -> Option<&MetricSample> {
        self.samples.last()
    }
}

impl Observer for MetricTracker<'_> {
    fn observe(&mut self, state: &IterateState, _record: Option<&TraceRecord>) -> Control {
        if self.first_hit.is_none() {
            if let Some(xs) = &self.instance.known_x_star {
                if (&state.x - xs).norm() <= ACCURACY_THRESHOLD * xs.norm() {
                    self.first_hit = Some(state.k);
                }
            }
        }
        if state.k.is_multiple_of(self.every) {
            let m = self.instance.metrics(&state.x, &state.y);
            self.samples.push(MetricSample {
                k: state.k,
                rel_x_err: m.rel_x_err,
                ll_err: m.ll_err,
                hyper: m.hyper,
            });
        }
        if self.stop_at_threshold && self.first_hit.is_some() {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}
