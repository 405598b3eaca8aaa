use crate::problem::join;
use crate::state::Anchor;
use crate::valuefn::{grad_v, saddle_oracle, OracleOptions, Proximal, SaddlePoint};
use crate::{BilevelProblem, IterateState, Result, TheoryConstants, Vector};

/// Gap, residual and merit sharing one saddle-oracle call.
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub saddle: SaddlePoint,
    /// `f(x, y) - v(x, y, z)`.
    pub gap: f64,
    pub residual: f64,
}

pub(crate) fn diagnose(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    c_k: f64,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
    warm: Option<(&Vector, &Vector)>,
) -> Result<Diagnosis> {
    let saddle = saddle_oracle(problem, at, prox, constants, opts, warm)?;
    let gap = problem.lower(at.x, at.y) - saddle.value;
    let residual = residual_from_saddle(problem, at, c_k, prox, &saddle)?;
    Ok(Diagnosis {
        saddle,
        gap,
        residual,
    })
}

fn residual_from_saddle(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    c_k: f64,
    prox: Proximal,
    saddle: &SaddlePoint,
) -> Result<f64> {
    let (fx_up, fy_up) = problem.upper_grad(at.x, at.y);
    let (fx, fy) = problem.lower_grad(at.x, at.y);
    let (vx, vy, vz) = grad_v(problem, at, saddle, prox);
    let d_xy = join(&(fx_up + (fx - vx) * c_k), &(fy_up + (fy - vy) * c_k));
    let d_z = -vz * c_k;
    let r_c = problem
        .feasible_set()
        .tangent_residual(&join(at.x, at.y), &d_xy)?;
    let r_z = prox
        .multiplier_set(at.z.len())
        .tangent_residual(at.z, &d_z)?;
    Ok(r_c.hypot(r_z))
}

/// Stationarity residual `dist(0, d + N_{C x Z}(x, y, z))` of the penalized
/// problem, `d = (grad F, 0) + c_k ((grad f, 0) - grad v)`.
pub fn residual_rk(
    problem: &dyn BilevelProblem,
    at: Anchor<'_>,
    c_k: f64,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
) -> Result<f64> {
    let saddle = saddle_oracle(problem, at, prox, constants, opts, None)?;
    residual_from_saddle(problem, at, c_k, prox, &saddle)
}

/// Merit `(F - F_lower)/c_k + f - v + C_thetalambda |(theta, lambda) - (theta*, lambda*)|^2`.
pub fn merit_vk(
    problem: &dyn BilevelProblem,
    state: &IterateState,
    c_k: f64,
    prox: Proximal,
    constants: &TheoryConstants,
    upper_floor: f64,
    opts: &OracleOptions,
) -> Result<f64> {
    let at = state.anchor();
    let saddle = saddle_oracle(
        problem,
        at,
        prox,
        constants,
        opts,
        Some((&state.theta, &state.lambda)),
    )?;
    Ok(merit_from_saddle(
        problem,
        state,
        c_k,
        constants,
        upper_floor,
        &saddle,
    ))
}

pub(crate) fn merit_from_saddle(
    problem: &dyn BilevelProblem,
    state: &IterateState,
    c_k: f64,
    constants: &TheoryConstants,
    upper_floor: f64,
    saddle: &SaddlePoint,
) -> f64 {
    let phi = (problem.upper(&state.x, &state.y) - upper_floor) / c_k
        + problem.lower(&state.x, &state.y)
        - saddle.value;
    let dist2 = (&state.theta - &saddle.theta).norm_squared()
        + (&state.lambda - &saddle.lambda).norm_squared();
    phi + constants.c_theta_lambda * dist2
}
