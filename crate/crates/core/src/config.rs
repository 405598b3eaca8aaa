//! Solver configuration and step-size schedules.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A positive sequence indexed by the iteration counter `k >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant(f64),
    /// `scale * (k + 1)^exponent`
    Polynomial {
        scale: f64,
        exponent: f64,
    },
}

impl Schedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::Polynomial { scale, exponent } => scale * ((k + 1) as f64).powf(exponent),
        }
    }

    pub fn scaled(&self, factor: f64) -> Schedule {
        match *self {
            Schedule::Constant(v) => Schedule::Constant(v * factor),
            Schedule::Polynomial { scale, exponent } => Schedule::Polynomial {
                scale: scale * factor,
                exponent,
            },
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Schedule::Constant(v) => v > 0.0 && v.is_finite(),
            Schedule::Polynomial { scale, exponent } => {
                scale > 0.0 && scale.is_finite() && exponent.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "schedule {name} must be strictly positive"
            )))
        }
    }
}

/// How the step sizes `alpha_k, beta_k, eta_k` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Use the configured schedules as given.
    #[default]
    Practice,
    /// Replace the schedules by the guarded constants derived from the
    /// Lipschitz moduli (see [`crate::TheoryConstants::theory_steps`]).
    Theory,
}

/// Which cadenced diagnostics the solver records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gap: bool,
    pub residual: bool,
    pub merit: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            gap: true,
            residual: true,
            merit: false,
        }
    }
}

/// Optional early termination: stop once `R_k / c_k <= rtol` and the value
/// gap is at most `gtol`. Both are checked at diagnostic cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub rtol: f64,
    pub gtol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Truncation radius `r` of the multiplier box `Z = [0, r]^p`.
    pub radius: f64,
    pub alpha: Schedule,
    pub beta: Schedule,
    pub eta: Schedule,
    /// Penalty schedule `c_k = c_bar (k + 1)^p_exp`.
    pub c_bar: f64,
    pub p_exp: f64,
    pub max_iters: usize,
    pub saddle_tol: f64,
    pub residual_every: usize,
    pub mode: StepMode,
    pub diagnostics: Diagnostics,
    /// Lower bound of `F` used by the merit function. Falls back to the
    /// problem's bound, then to the first observed value of `F`.
    pub upper_floor: Option<f64>,
    pub early_stop: Option<EarlyStop>,
    /// Record wall-clock seconds in traces. Off by default so traces are
    /// reproducible byte for byte.
    pub record_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
            radius: 10.0,
            alpha: Schedule::Constant(0.002),
            beta: Schedule::Constant(0.002),
            eta: Schedule::Constant(0.03),
            c_bar: 1.0,
            p_exp: 0.3,
            max_iters: 1000,
            saddle_tol: 1e-10,
            residual_every: 100,
            mode: StepMode::Practice,
            diagnostics: Diagnostics::default(),
            upper_floor: None,
            early_stop: None,
            record_time: false,
        }
    }
}

impl SolverConfig {
    pub fn penalty(&self, k: usize) -> f64 {
        self.c_bar * ((k + 1) as f64).powf(self.p_exp)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive(self.gamma1, "gamma1")?;
        positive(self.gamma2, "gamma2")?;
        positive(self.radius, "radius")?;
        positive(self.c_bar, "c_bar")?;
        positive(self.saddle_tol, "saddle_tol")?;
        if !(self.p_exp > 0.0 && self.p_exp < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "p_exp must lie in (0, 1/2), got {}",
                self.p_exp
            )));
        }
        if self.residual_every == 0 {
            return Err(Error::InvalidConfig(
                "residual_every must be positive".into(),
            ));
        }
        self.alpha.validate("alpha")?;
        self.beta.validate("beta")?;
        self.eta.validate("eta")?;
        Ok(())
    }
}
