//! The single-loop iteration.
//!
//! Per iteration: one projected GDA step on the inner pair `(theta, lambda)`
//! anchored at the current `(x, y, z)`, then one projected step on `(x, y)`
//! and `z` along directions evaluated at the new inner pair. The saddle-point
//! oracle is only used by the diagnostics.

mod diagnostics;
pub mod trace;

use std::fmt;
use std::time::Instant;

use log::{debug, warn};

pub use diagnostics::{merit_vk, residual_rk, Diagnosis};
pub use trace::{Trace, TraceMetadata, TraceRecord};

use crate::problem::{join, split};
use crate::valuefn::{gda_step, OracleOptions, Proximal};
use crate::{
    derive_constants, BilevelProblem, Error, IterateState, LipschitzModuli, Result, SolverConfig,
    StepMode, TheoryConstants, Vector,
};

/// Outer directions `(d_x, d_y, d_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterDirections {
    pub d_x: Vector,
    pub d_y: Vector,
    pub d_z: Vector,
}

/// `d_x = grad_x F / c_k + grad_x f(x, y) - grad_x f(x, theta+) - lambda+' grad_x g(x, theta+)`,
/// `d_y = grad_y F / c_k + grad_y f(x, y) - (y - theta+) / gamma1`,
/// `d_z = -(lambda+ - z) / gamma2`.
pub fn outer_directions(
    problem: &dyn BilevelProblem,
    state: &IterateState,
    theta_next: &Vector,
    lambda_next: &Vector,
    c_k: f64,
    prox: Proximal,
) -> OuterDirections {
    let (x, y, z) = (&state.x, &state.y, &state.z);
    let (ux, uy) = problem.upper_grad(x, y);
    let (fx, fy) = problem.lower_grad(x, y);
    let (fx_inner, _) = problem.lower_grad(x, theta_next);
    let (gx_inner, _) = problem.constraints_vjp(x, theta_next, lambda_next);
    OuterDirections {
        d_x: ux / c_k + fx - fx_inner - gx_inner,
        d_y: uy / c_k + fy - (y - theta_next) / prox.gamma1,
        d_z: -(lambda_next - z) / prox.gamma2,
    }
}

/// Step sizes and penalty for one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub c_k: f64,
    pub prox: Proximal,
}

/// Norms of the three blocks of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepNorms {
    pub dxy: f64,
    pub dz: f64,
    pub dtl: f64,
}

/// One iteration from `state`; increments `k`.
pub fn lv_hba_step(
    problem: &dyn BilevelProblem,
    state: &IterateState,
    params: &StepParams,
) -> Result<(IterateState, StepNorms)> {
    let prox = params.prox;
    let (theta, lambda) = gda_step(
        problem,
        state.anchor(),
        &state.theta,
        &state.lambda,
        params.eta,
        prox,
    )?;
    let dir = outer_directions(problem, state, &theta, &lambda, params.c_k, prox);
    let moved = join(
        &(&state.x - dir.d_x * params.alpha),
        &(&state.y - dir.d_y * params.alpha),
    );
    let projected = problem.feasible_set().project(&moved)?;
    let (x, y) = split(&projected, problem.dim_x());
    let z = prox.clamp(&state.z - dir.d_z * params.beta);

    let norms = StepNorms {
        dxy: ((&x - &state.x).norm_squared() + (&y - &state.y).norm_squared()).sqrt(),
        dz: (&z - &state.z).norm(),
        dtl: ((&theta - &state.theta).norm_squared() + (&lambda - &state.lambda).norm_squared())
            .sqrt(),
    };
    let next = IterateState {
        x,
        y,
        z,
        theta,
        lambda,
        k: state.k + 1,
    };
    Ok((next, norms))
}

/// Whether a run continues after an observer callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called synchronously with every iterate (including the initial one) and
/// the trace record written for it, if any.
pub trait Observer {
    fn observe(&mut self, state: &IterateState, record: Option<&TraceRecord>) -> Control;
}

impl Observer for () {
    fn observe(&mut self, _: &IterateState, _: Option<&TraceRecord>) -> Control {
        Control::Continue
    }
}

impl<F> Observer for F
where
    F: FnMut(&IterateState, Option<&TraceRecord>) -> Control,
{
    fn observe(&mut self, state: &IterateState, record: Option<&TraceRecord>) -> Control {
        self(state, record)
    }
}

/// A failed run: the error and the trace recorded up to the failure.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub trace: Trace,
    pub last_state: Option<IterateState>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run aborted after {} records: {}",
            self.trace.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Output of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub final_state: IterateState,
}

pub struct Solver<'p> {
    problem: &'p dyn BilevelProblem,
    config: SolverConfig,
    constants: TheoryConstants,
    prox: Proximal,
    oracle: OracleOptions,
    theory_steps: Option<(f64, f64, f64)>,
    label: String,
    seed: Option<u64>,
}

impl<'p> Solver<'p> {
    /// Validates `config` against `problem` and derives the constants.
    pub fn new(
        problem: &'p dyn BilevelProblem,
        config: SolverConfig,
        moduli: &LipschitzModuli,
    ) -> Result<Self> {
        config.validate()?;
        let constants = derive_constants(problem, &config, moduli)?;
        let theory_steps = match config.mode {
            StepMode::Practice => None,
            StepMode::Theory => {
                let eta = constants.oracle_step();
                let (a, b) = constants.theory_steps(eta, config.penalty(0));
                Some((a, b, eta))
            }
        };
        if theory_steps.is_none() {
            let guard = constants.eta_guard();
            for k in [0, config.max_iters] {
                let eta = config.eta.at(k);
                if eta >= guard {
                    warn!("eta_{k} = {eta:e} lies outside the contraction guard (0, {guard:e})");
                }
            }
        }
        Ok(Self {
            problem,
            oracle: OracleOptions::with_tol(config.saddle_tol),
            prox: Proximal::from_config(&config),
            config,
            constants,
            theory_steps,
            label: String::from("problem"),
            seed: None,
        })
    }

    /// Name and seed stored in the trace metadata.
    pub fn with_label(mut self, label: impl Into<String>, seed: Option<u64>) -> Self {
        self.label = label.into();
        self.seed = seed;
        self
    }

    pub fn with_oracle(mut self, oracle: OracleOptions) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn constants(&self) -> &TheoryConstants {
        &self.constants
    }

    pub fn prox(&self) -> Proximal {
        self.prox
    }

    pub fn oracle(&self) -> &OracleOptions {
        &self.oracle
    }

    pub fn step_params(&self, k: usize) -> StepParams {
        let (alpha, beta, eta) = self.theory_steps.unwrap_or_else(|| {
            (
                self.config.alpha.at(k),
                self.config.beta.at(k),
                self.config.eta.at(k),
            )
        });
        StepParams {
            alpha,
            beta,
            eta,
            c_k: self.config.penalty(k),
            prox: self.prox,
        }
    }

    /// Default initial state from `(x, y)`: `z = 0`, `theta = y`, `lambda = 0`.
    /// [`Solver::run`] projects it.
    pub fn init_state(&self, x: Vector, y: Vector) -> IterateState {
        let p = self.problem.dim_g();
        IterateState {
            theta: y.clone(),
            x,
            y,
            z: Vector::zeros(p),
            lambda: Vector::zeros(p),
            k: 0,
        }
    }

    /// Projects a user-supplied initial state onto `C`, `Z`, `Y` and `Z`.
    pub fn project_init(&self, init: &IterateState) -> Result<IterateState> {
        let p = self.problem;
        for (what, expected, actual) in [
            ("x", p.dim_x(), init.x.len()),
            ("y", p.dim_y(), init.y.len()),
            ("theta", p.dim_y(), init.theta.len()),
            ("z", p.dim_g(), init.z.len()),
            ("lambda", p.dim_g(), init.lambda.len()),
        ] {
            if expected != actual {
                debug!("initial {what} has the wrong length");
                return Err(Error::DimensionMismatch { expected, actual });
            }
        }
        let w = p.feasible_set().project(&join(&init.x, &init.y))?;
        let (x, y) = split(&w, p.dim_x());
        Ok(IterateState {
            x,
            y,
            z: self.prox.clamp(init.z.clone()),
            theta: p.set_y().project(&init.theta)?,
            lambda: self.prox.clamp(init.lambda.clone()),
            k: init.k,
        })
    }

    pub fn step(&self, state: &IterateState) -> Result<(IterateState, StepNorms)> {
        lv_hba_step(self.problem, state, &self.step_params(state.k))
    }

    /// Runs `max_iters` iterations from `init` or until `observer` or the
    /// early-stop rule ends the run.
    // The error keeps the last state for inspection, so it stays unboxed.
    #[allow(clippy::result_large_err)]
    pub fn run(
        &self,
        init: &IterateState,
        observer: &mut dyn Observer,
    ) -> std::result::Result<RunOutput, RunError> {
        let params0 = self.step_params(0);
        let mut trace = Trace {
            metadata: TraceMetadata {
                problem: self.label.clone(),
                seed: self.seed,
                config: self.config.clone(),
                alpha0: params0.alpha,
                beta0: params0.beta,
                eta0: params0.eta,
                eta_guard: self.constants.eta_guard(),
                upper_floor: None,
                iterations: 0,
                stop_reason: String::new(),
            },
            records: Vec::new(),
        };
        let abort = |error: Error, mut trace: Trace, last: Option<IterateState>, reason: &str| {
            trace.metadata.stop_reason = format!("{reason}: {error}");
            RunError {
                error,
                trace,
                last_state: last,
            }
        };

        let mut state = match self.project_init(init) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, trace, None, "invalid initial state")),
        };
        let start = Instant::now();
        let mut floor = self
            .config
            .upper_floor
            .or_else(|| self.problem.upper_floor());
        let mut last = StepNorms::default();
        let mut reason = String::from("max_iters reached");
        let first_k = state.k;

        loop {
            let done = state.k - first_k >= self.config.max_iters;
            let cadenced = state.k % self.config.residual_every == 0;
            let mut record = None;
            if cadenced || done {
                match self.record(&state, last, cadenced, &mut floor, start) {
                    Ok(r) => record = Some(r),
                    Err(e) => return Err(abort(e, trace, Some(state), "diagnostics failed")),
                }
            }
            let early = record.as_ref().is_some_and(|r| self.early_stop(r));
            if let Some(r) = record.as_ref() {
                trace.records.push(r.clone());
            }
            let control = observer.observe(&state, record.as_ref());
            if done {
                break;
            }
            if early || control == Control::Stop {
                reason = if early {
                    "early stop".into()
                } else {
                    "stopped by observer".into()
                };
                if record.is_none() {
                    match self.record(&state, last, false, &mut floor, start) {
                        Ok(r) => trace.records.push(r),
                        Err(e) => return Err(abort(e, trace, Some(state), "diagnostics failed")),
                    }
                }
                break;
            }
            match self.step(&state) {
                Ok((next, norms)) if next.is_finite() => {
                    state = next;
                    last = norms;
                }
                Ok((next, _)) => {
                    let k = next.k;
                    return Err(abort(
                        Error::NonFinite(k),
                        trace,
                        Some(state),
                        "step failed",
                    ));
                }
                Err(e) => return Err(abort(e, trace, Some(state), "step failed")),
            }
        }
        trace.metadata.iterations = state.k - first_k;
        trace.metadata.upper_floor = floor;
        trace.metadata.stop_reason = reason;
        Ok(RunOutput {
            trace,
            final_state: state,
        })
    }

    fn early_stop(&self, r: &TraceRecord) -> bool {
        match (self.config.early_stop, r.residual, r.gap) {
            (Some(rule), Some(res), Some(gap)) => res / r.c_k <= rule.rtol && gap <= rule.gtol,
            _ => false,
        }
    }

    fn record(
        &self,
        state: &IterateState,
        norms: StepNorms,
        cadenced: bool,
        floor: &mut Option<f64>,
        start: Instant,
    ) -> Result<TraceRecord> {
        let p = self.problem;
        let c_k = self.config.penalty(state.k);
        let upper = p.upper(&state.x, &state.y);
        let lower = p.lower(&state.x, &state.y);
        let flags = self.config.diagnostics;
        let (mut gap, mut residual, mut merit) = (None, None, None);
        if cadenced && (flags.gap || flags.residual || flags.merit) {
            let d = diagnostics::diagnose(
                p,
                state.anchor(),
                c_k,
                self.prox,
                &self.constants,
                &self.oracle,
                Some((&state.theta, &state.lambda)),
            )?;
            gap = flags.gap.then_some(d.gap);
            residual = flags.residual.then_some(d.residual);
            if flags.merit {
                let f_lower = *floor.get_or_insert(upper);
                merit = Some(diagnostics::merit_from_saddle(
                    p,
                    state,
                    c_k,
                    &self.constants,
                    f_lower,
                    &d.saddle,
                ));
            }
        }
        Ok(TraceRecord {
            k: state.k,
            c_k,
            upper,
            lower,
            gap,
            residual,
            merit,
            dxy: norms.dxy,
            dz: norms.dz,
            dtl: norms.dtl,
            sec: if self.config.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })
    }
}
