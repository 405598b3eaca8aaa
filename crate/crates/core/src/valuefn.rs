//! The truncated proximal Lagrangian value function
//!
//! ```text
//! v(x, y, z) = min_{theta in Y} max_{lambda in [0, r]^p}
//!              f(x, theta) + lambda' g(x, theta)
//!              + |theta - y|^2 / (2 gamma1) - |lambda - z|^2 / (2 gamma2)
//! ```
//!
//! together with its saddle-point oracle, its gradient and the single
//! projected GDA step the solver performs on the inner pair.

use serde::{Deserialize, Serialize};

use crate::problem::join;
use crate::sets::ACT_TOL;
use crate::state::Anchor;
use crate::{BilevelProblem, ConvexSet, Error, Result, SolverConfig, TheoryConstants, Vector};

/// Truncation radius standing in for an unbounded multiplier set.
pub const UNTRUNCATED_RADIUS: f64 = 1e6;

/// Proximal parameters `(gamma1, gamma2)` and truncation radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proximal {
    pub gamma1: f64,
    pub gamma2: f64,
    pub radius: f64,
}

impl Proximal {
    pub fn new(gamma1: f64, gamma2: f64, radius: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            radius,
        }
    }

    pub fn from_config(config: &SolverConfig) -> Self {
        Self::new(config.gamma1, config.gamma2, config.radius)
    }

    pub fn with_radius(self, radius: f64) -> Self {
        Self { radius, ..self }
    }

    /// `Z = [0, r]^p`.
    pub fn multiplier_set(&self, p: usize) -> ConvexSet {
        ConvexSet::nonneg_box(p, self.radius)
    }

    pub(crate) fn clamp(&self, v: Vector) -> Vector {
        v.map(|e| e.max(0.0).min(self.radius))
    }
}

/// Inner directions `(d_theta, d_lambda)`: the saddle operator evaluated at the
/// current inner pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerDirections {
    pub d_theta: Vector,
    pub d_lambda: Vector,
}

/// `(theta*, lambda*)` and `v` at an anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub theta: Vector,
    pub lambda: Vector,
    pub value: f64,
    pub iterations: usize,
    /// Length of one further oracle-step GDA move from the returned pair.
    pub final_step_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Projected GDA with the fixed step `0.9 rho_T / L_B^2`, stopped when the
    /// step change drops to `tol`.
    Gda,
    /// Accelerated projected gradient on the lambda-eliminated problem
    /// `min_theta phi(theta) + |theta - y|^2 / (2 gamma1)` where the inner max
    /// has the closed form `lambda = Proj_Z(z + gamma2 g(x, theta))`.
    #[default]
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_inner: usize,
    pub method: OracleMethod,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_inner: 100_000,
            method: OracleMethod::Accelerated,
        }
    }
}

impl OracleOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Inner objective `f + lambda'g + |theta - y|^2/(2 gamma1) - |lambda - z|^2/(2 gamma2)`.
pub fn eval_lagrangian(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    theta: &Vector,
    lambda: &Vector,
    prox: Proximal,
) -> f64 {
    let g = problem.constraints(at.x, theta);
    problem.lower(at.x, theta)
        + lambda.dot(&g)
        + (theta - at.y).norm_squared() / (2.0 * prox.gamma1)
        - (lambda - at.z).norm_squared() / (2.0 * prox.gamma2)
}

pub fn inner_directions(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    theta: &Vector,
    lambda: &Vector,
    prox: Proximal,
) -> InnerDirections {
    let (_, grad_y) = problem.lower_grad(at.x, theta);
    let (_, vjp_y) = problem.constraints_vjp(at.x, theta, lambda);
    let g = problem.constraints(at.x, theta);
    InnerDirections {
        d_theta: grad_y + vjp_y + (theta - at.y) / prox.gamma1,
        d_lambda: -g + (lambda - at.z) / prox.gamma2,
    }
}

/// One projected GDA step `Proj_{Y x Z}((theta, lambda) - eta (d_theta, d_lambda))`.
pub fn gda_step(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    theta: &Vector,
    lambda: &Vector,
    eta: f64,
    prox: Proximal,
) -> Result<(Vector, Vector)> {
    let dir = inner_directions(problem, at, theta, lambda, prox);
    let theta_next = problem.set_y().project(&(theta - dir.d_theta * eta))?;
    let lambda_next = prox.clamp(lambda - dir.d_lambda * eta);
    Ok((theta_next, lambda_next))
}

/// Solves the inner min-max problem at `at`.
///
/// `warm` seeds the inner pair (typically the running iterates); otherwise the
/// search starts from `(Proj_Y(y), Proj_Z(z))`.
pub fn saddle_oracle(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
    warm: Option<(&Vector, &Vector)>,
) -> Result<SaddlePoint> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidConfig(
            "oracle tolerance must be positive".into(),
        ));
    }
    let (theta0, lambda0) = match warm {
        Some((t, l)) => (problem.set_y().project(t)?, prox.clamp(l.clone())),
        None => (problem.set_y().project(at.y)?, prox.clamp(at.z.clone())),
    };
    let eta = constants.oracle_step();
    let (theta, lambda, iterations) = match opts.method {
        OracleMethod::Gda => {
            let (mut theta, mut lambda) = (theta0, lambda0);
            let mut change = f64::INFINITY;
            let mut used = 0;
            while change > opts.tol {
                if used == opts.max_inner {
                    return Err(Error::OracleNotConverged {
                        iterations: used,
                        change,
                    });
                }
                let (t, l) = gda_step(problem, at, &theta, &lambda, eta, prox)?;
                change = ((&t - &theta).norm_squared() + (&l - &lambda).norm_squared()).sqrt();
                theta = t;
                lambda = l;
                used += 1;
            }
            (theta, lambda, used)
        }
        OracleMethod::Accelerated => accelerated(problem, at, prox, constants, opts, theta0)?,
    };
    let value = eval_lagrangian(problem, at, &theta, &lambda, prox);
    let (t1, l1) = gda_step(problem, at, &theta, &lambda, eta, prox)?;
    let final_step_change = ((&t1 - &theta).norm_squared() + (&l1 - &lambda).norm_squared()).sqrt();
    Ok(SaddlePoint {
        theta,
        lambda,
        value,
        iterations,
        final_step_change,
    })
}

// Gradient of the lambda-eliminated objective and the maximizing lambda.
fn primal_gradient(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    theta: &Vector,
    prox: Proximal,
) -> (Vector, Vector) {
    let g = problem.constraints(at.x, theta);
    let lambda = prox.clamp(at.z + g * prox.gamma2);
    let (_, grad_y) = problem.lower_grad(at.x, theta);
    let (_, vjp_y) = problem.constraints_vjp(at.x, theta, &lambda);
    (grad_y + vjp_y + (theta - at.y) / prox.gamma1, lambda)
}

fn accelerated(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
    theta0: Vector,
) -> Result<(Vector, Vector, usize)> {
    let smooth = constants.primal_smoothness();
    let strong = constants.primal_strong_convexity();
    let step = 1.0 / smooth;
    let q = (strong / smooth).sqrt();
    let momentum = (1.0 - q) / (1.0 + q);
    // A prox-gradient move of length s certifies |theta - theta*| <= s L / mu.
    let stop = opts.tol * strong / smooth;
    let eps = 8.0 * f64::EPSILON;

    let y_set = problem.set_y();
    let mut theta = theta0.clone();
    let mut probe = theta0;
    let mut change = f64::INFINITY;
    for used in 1..=opts.max_inner {
        let (grad, _) = primal_gradient(problem, at, &probe, prox);
        let next = y_set.project(&(&probe - grad * step))?;
        change = (&next - &probe).norm();
        if change <= stop.max(eps * (1.0 + probe.amax())) {
            let (_, lambda) = primal_gradient(problem, at, &next, prox);
            return Ok((next, lambda, used));
        }
        let velocity = &next - &theta;
        // Gradient-based restart keeps the scheme monotone when the supplied
        // moduli are loose.
        probe = if (&probe - &next).dot(&velocity) > 0.0 {
            next.clone()
        } else {
            &next + velocity * momentum
        };
        theta = next;
    }
    Err(Error::OracleNotConverged {
        iterations: opts.max_inner,
        change,
    })
}

/// Gradient of `v` at the anchor of `saddle`:
/// `(grad_x f(x, theta*) + lambda*' grad_x g(x, theta*), (y - theta*)/gamma1, (lambda* - z)/gamma2)`.
pub fn grad_v(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    saddle: &SaddlePoint,
    prox: Proximal,
) -> (Vector, Vector, Vector) {
    let (fx, _) = problem.lower_grad(at.x, &saddle.theta);
    let (vjp_x, _) = problem.constraints_vjp(at.x, &saddle.theta, &saddle.lambda);
    (
        fx + vjp_x,
        (at.y - &saddle.theta) / prox.gamma1,
        (&saddle.lambda - at.z) / prox.gamma2,
    )
}

/// `v_{gamma, r}(x, y, z)` through the saddle oracle.
pub fn value_v(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
) -> Result<f64> {
    saddle_oracle(problem, at, prox, constants, opts, None).map(|s| s.value)
}

/// The untruncated value function, realized with a very large radius.
pub fn value_untruncated(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
) -> Result<f64> {
    value_v(
        problem,
        at,
        prox.with_radius(UNTRUNCATED_RADIUS),
        constants,
        opts,
    )
}

/// `f(x, y) - v(x, y, z)`, nonnegative on `C x Z`.
pub fn feasibility_gap(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
) -> Result<f64> {
    let w = join(at.x, at.y);
    let c = problem
        .feasible_set()
        .contains(&w, ACT_TOL * (1.0 + w.amax()));
    if !c.inside {
        return Err(Error::Infeasible {
            violation: c.violation,
        });
    }
    let z_ok = prox
        .multiplier_set(at.z.len())
        .contains(at.z, ACT_TOL * (1.0 + prox.radius));
    if !z_ok.inside {
        return Err(Error::NotInSet {
            violation: z_ok.violation,
        });
    }
    Ok(problem.lower(at.x, at.y) - value_v(problem, at, prox, constants, opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::build_scalar;
    use crate::constants::TheoryConstants;
    use nalgebra::dvector;

    fn scalar() -> (crate::bench::BenchmarkInstance, Proximal, TheoryConstants) {
        let b = build_scalar(1.0, true);
        let prox = Proximal::new(1.0, 1.0, 10.0);
        let c = TheoryConstants::new(0.0, 1, 1.0, 1.0, 10.0, &b.moduli).unwrap();
        (b, prox, c)
    }

    #[test]
    fn lagrangian_examples() {
        let (b, prox, _) = scalar();
        let p = b.problem.as_ref();
        let z0 = dvector![0.0];
        let at = Anchor::new(&z0, &z0, &z0);
        assert_eq!(
            eval_lagrangian(p, at, &dvector![0.0], &dvector![0.0], prox),
            0.0
        );
        let xm = dvector![-1.0];
        let at = Anchor::new(&xm, &z0, &z0);
        let v = eval_lagrangian(p, at, &dvector![-1.0 / 3.0], &dvector![2.0 / 3.0], prox);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        let x1 = dvector![1.0];
        let at = Anchor::new(&x1, &z0, &z0);
        assert!((eval_lagrangian(p, at, &dvector![1.0], &dvector![0.0], prox) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inner_direction_examples() {
        let (b, prox, _) = scalar();
        let p = b.problem.as_ref();
        let (xm, z0, one) = (dvector![-1.0], dvector![0.0], dvector![1.0]);
        let d = inner_directions(p, Anchor::new(&xm, &z0, &z0), &z0, &z0, prox);
        assert_eq!((d.d_theta[0], d.d_lambda[0]), (0.0, -1.0));
        let d = inner_directions(p, Anchor::new(&z0, &one, &z0), &one, &z0, prox);
        assert_eq!((d.d_theta[0], d.d_lambda[0]), (1.0, -1.0));
    }

    #[test]
    fn gda_step_examples() {
        let (b, prox, _) = scalar();
        let p = b.problem.as_ref();
        let (xm, z0) = (dvector![-1.0], dvector![0.0]);
        let at = Anchor::new(&xm, &z0, &z0);
        let (t, l) = gda_step(p, at, &z0, &z0, 0.1, prox).unwrap();
        assert_eq!((t[0], l[0]), (0.0, 0.1));
        let (t, l) = gda_step(
            p,
            at,
            &dvector![-1.0 / 3.0],
            &dvector![2.0 / 3.0],
            0.1,
            prox,
        )
        .unwrap();
        assert!((t[0] + 1.0 / 3.0).abs() < 1e-15 && (l[0] - 2.0 / 3.0).abs() < 1e-15);
        // Constraint slack pushes lambda below zero; the box clamps it.
        let x1 = dvector![1.0];
        let (_, l) = gda_step(
            p,
            Anchor::new(&x1, &z0, &z0),
            &z0,
            &dvector![0.01],
            0.5,
            prox,
        )
        .unwrap();
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn saddle_oracle_examples_both_methods() {
        let (b, prox, c) = scalar();
        let p = b.problem.as_ref();
        let (xm, z0, x1) = (dvector![-1.0], dvector![0.0], dvector![1.0]);
        for method in [OracleMethod::Accelerated, OracleMethod::Gda] {
            let opts = OracleOptions {
                method,
                ..OracleOptions::with_tol(1e-12)
            };
            let s = saddle_oracle(p, Anchor::new(&xm, &z0, &z0), prox, &c, &opts, None).unwrap();
            assert!((s.theta[0] + 1.0 / 3.0).abs() < 1e-10, "{method:?}");
            assert!((s.lambda[0] - 2.0 / 3.0).abs() < 1e-10);
            assert!((s.value - 1.0 / 3.0).abs() < 1e-10);
            assert!(s.final_step_change < 1e-10);
            let s = saddle_oracle(p, Anchor::new(&x1, &z0, &z0), prox, &c, &opts, None).unwrap();
            assert!(s.theta[0].abs() < 1e-10 && s.lambda[0] == 0.0 && s.value.abs() < 1e-12);
        }
    }

    #[test]
    fn saddle_map_is_idempotent_at_its_fixed_point() {
        let (b, prox, c) = scalar();
        let p = b.problem.as_ref();
        let opts = OracleOptions::with_tol(1e-13);
        // The map returns its anchor exactly at a lower-level KKT pair:
        // min theta^2/2 s.t. theta <= -1 has theta = -1, lambda = 1.
        let (x, y, z) = (dvector![-1.0], dvector![-1.0], dvector![1.0]);
        let s = saddle_oracle(p, Anchor::new(&x, &y, &z), prox, &c, &opts, None).unwrap();
        assert!((&s.theta - &y).amax() < 1e-10 && (&s.lambda - &z).amax() < 1e-10);
        let again = saddle_oracle(
            p,
            Anchor::new(&x, &s.theta, &s.lambda),
            prox,
            &c,
            &opts,
            None,
        )
        .unwrap();
        assert!((&again.theta - &s.theta).amax() < 1e-10);
        assert!((&again.lambda - &s.lambda).amax() < 1e-10);
    }

    #[test]
    fn gradient_at_the_analytic_saddle() {
        let (b, prox, _) = scalar();
        let p = b.problem.as_ref();
        let (xm, z0) = (dvector![-1.0], dvector![0.0]);
        let saddle = SaddlePoint {
            theta: dvector![-1.0 / 3.0],
            lambda: dvector![2.0 / 3.0],
            value: 1.0 / 3.0,
            iterations: 0,
            final_step_change: 0.0,
        };
        let (gx, gy, gz) = grad_v(p, Anchor::new(&xm, &z0, &z0), &saddle, prox);
        assert!((gx[0] + 2.0 / 3.0).abs() < 1e-15);
        assert!((gy[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((gz[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_gap_examples() {
        let (b, prox, c) = scalar();
        let p = b.problem.as_ref();
        let (xm, z0, x1) = (dvector![-1.0], dvector![0.0], dvector![1.0]);
        let opts = OracleOptions::default();
        assert!(matches!(
            feasibility_gap(p, Anchor::new(&xm, &z0, &z0), prox, &c, &opts),
            Err(Error::Infeasible { .. })
        ));
        let gap = feasibility_gap(p, Anchor::new(&x1, &z0, &z0), prox, &c, &opts).unwrap();
        assert!(gap.abs() < 1e-12);
        assert!(
            feasibility_gap(p, Anchor::new(&x1, &z0, &dvector![11.0]), prox, &c, &opts).is_err()
        );
    }

    #[test]
    fn truncation_is_monotone_in_radius() {
        let (b, prox, c) = scalar();
        let p = b.problem.as_ref();
        let opts = OracleOptions::with_tol(1e-12);
        // Large constraint violation makes the multiplier hit small radii.
        let (x, y, z) = (dvector![-5.0], dvector![0.0], dvector![0.0]);
        let at = Anchor::new(&x, &y, &z);
        let mut last = f64::NEG_INFINITY;
        for r in [0.5, 1.0, 2.0, 10.0] {
            let v = value_v(p, at, prox.with_radius(r), &c, &opts).unwrap();
            assert!(v >= last - 1e-12, "r = {r}");
            last = v;
        }
        let big = value_untruncated(p, at, prox, &c, &opts).unwrap();
        assert!(big >= last - 1e-12);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let (b, prox, c) = scalar();
        let z0 = dvector![0.0];
        let opts = OracleOptions::with_tol(0.0);
        assert!(saddle_oracle(
            b.problem.as_ref(),
            Anchor::new(&z0, &z0, &z0),
            prox,
            &c,
            &opts,
            None
        )
        .is_err());
    }
}
