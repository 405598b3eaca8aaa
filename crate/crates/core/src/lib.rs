//! Single-loop, Hessian-free first-order solver for bilevel optimization
//! problems whose lower-level constraints couple both levels.
//!
//! The lower-level problem is handled through a truncated proximal Lagrangian
//! value function `v(x, y, z)`, defined by a strongly-convex/strongly-concave
//! min-max problem over `(theta, lambda)`. The solver ([`solver`]) advances the
//! inner saddle pair by one projected gradient descent-ascent step per
//! iteration and the outer variables `(x, y, z)` by one projected step on the
//! penalized value gap, using only first-order oracles of `F`, `f` and `g`.
//!
//! Module map:
//!
//! - [`problem`], [`config`], [`constants`], [`state`], [`validate`]: domain
//!   types, solver configuration and the constants used for step-size guards.
//! - [`sets`]: exact Euclidean projections and tangent-cone residuals.
//! - [`valuefn`]: the value function, its saddle-point oracle and gradient.
//! - [`solver`]: the iteration, diagnostics (merit, stationarity residual) and
//!   traces.
//! - [`bench`]: synthetic benchmark problems with analytic references.
//! - [`cli`]: config-file front end used by the `lvhba` binary.

// `!(a > b)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod constants;
mod error;
pub mod problem;
pub mod sets;
pub mod solver;
pub mod state;
pub mod validate;
pub mod valuefn;

pub use config::{Schedule, SolverConfig, StepMode};
pub use constants::{derive_constants, LipschitzModuli, TheoryConstants};
pub use error::{Error, Result};
pub use problem::BilevelProblem;
pub use sets::ConvexSet;
pub use state::IterateState;

/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
