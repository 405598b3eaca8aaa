//! Randomized screening of a problem against the standing assumptions:
//! gradients agree with central differences, `f(x, .)` and each `g_i(x, .)`
//! are midpoint convex, and `F` respects its declared lower bound.
//!
//! These are necessary-condition probes, not proofs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::problem::{join, split};
use crate::state::Anchor;
use crate::valuefn::{grad_v, saddle_oracle, OracleOptions, Proximal};
use crate::{BilevelProblem, Matrix, Result, TheoryConstants, Vector};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
pub const CONVEXITY_PAIRS: usize = 64;
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Offending point of a failed check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vector,
    pub y: Vector,
    /// Second lower-level point of a midpoint pair.
    pub y_other: Option<Vector>,
    /// Relative error, convexity excess or bound violation.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst relative error or excess observed.
    pub worst: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative error `|a - b| / max(|b|, 1e-6)`.
pub fn relative_error(analytic: &Vector, reference: &Vector) -> f64 {
    (analytic - reference).norm() / reference.norm().max(1e-6)
}

/// Central-difference gradient of `phi` at `w`.
pub fn fd_gradient(phi: impl Fn(&Vector) -> f64, w: &Vector, h: f64) -> Vector {
    let mut probe = w.clone();
    Vector::from_fn(w.len(), |i, _| {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = phi(&probe);
        probe[i] = orig - h;
        let down = phi(&probe);
        probe[i] = orig;
        (up - down) / (2.0 * h)
    })
}

struct Tracker {
    name: String,
    tol: f64,
    worst: f64,
    witness: Option<Witness>,
}

impl Tracker {
    fn new(name: &str, tol: f64) -> Self {
        Self {
            name: name.into(),
            tol,
            worst: 0.0,
            witness: None,
        }
    }

    fn offer(&mut self, value: f64, x: &Vector, y: &Vector, y_other: Option<&Vector>) {
        let worse = value > self.worst || value.is_nan();
        if worse && !self.worst.is_nan() {
            self.worst = value;
            if value > self.tol || value.is_nan() {
                self.witness = Some(Witness {
                    x: x.clone(),
                    y: y.clone(),
                    y_other: y_other.cloned(),
                    value,
                });
            }
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            passed: self.worst <= self.tol,
            name: self.name,
            worst: self.worst,
            witness: self.witness,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Runs every check on `samples` random points drawn from `X x Y`.
pub fn validate_problem(
    problem: &dyn BilevelProblem,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    let (n, m, p) = (problem.dim_x(), problem.dim_y(), problem.dim_g());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut grad_upper = Tracker::new("grad_F", FD_TOL);
    let mut grad_lower = Tracker::new("grad_f", FD_TOL);
    let mut jac = Tracker::new("jac_g", FD_TOL);
    let mut vjp = Tracker::new("vjp_g", FD_TOL);
    let mut dims = Tracker::new("dim_g", 0.0);
    let mut bound = Tracker::new("F_lower", CONVEXITY_TOL);

    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = problem.set_x().project(&gaussian(&mut rng, n))?;
        let y = problem.set_y().project(&gaussian(&mut rng, m))?;
        points.push((x, y));
    }

    for (x, y) in &points {
        let g = problem.constraints(x, y);
        dims.offer((g.len() as f64 - p as f64).abs(), x, y, None);
        if g.len() != p {
            continue;
        }

        let (ux, uy) = problem.upper_grad(x, y);
        let fd_ux = fd_gradient(|v| problem.upper(v, y), x, FD_STEP);
        let fd_uy = fd_gradient(|v| problem.upper(x, v), y, FD_STEP);
        grad_upper.offer(
            relative_error(&join(&ux, &uy), &join(&fd_ux, &fd_uy)),
            x,
            y,
            None,
        );

        let (lx, ly) = problem.lower_grad(x, y);
        let fd_lx = fd_gradient(|v| problem.lower(v, y), x, FD_STEP);
        let fd_ly = fd_gradient(|v| problem.lower(x, v), y, FD_STEP);
        grad_lower.offer(
            relative_error(&join(&lx, &ly), &join(&fd_lx, &fd_ly)),
            x,
            y,
            None,
        );

        if p > 0 {
            let (jx, jy) = problem.constraints_jac(x, y);
            let fd_jac = fd_jacobian(problem, x, y);
            let mut analytic = Matrix::zeros(p, n + m);
            analytic.view_mut((0, 0), (p, n)).copy_from(&jx);
            analytic.view_mut((0, n), (p, m)).copy_from(&jy);
            let err = (&analytic - &fd_jac).norm() / fd_jac.norm().max(1e-6);
            jac.offer(err, x, y, None);

            let lambda = gaussian(&mut rng, p).abs();
            let (vx, vy) = problem.constraints_vjp(x, y, &lambda);
            let reference = join(&jx.tr_mul(&lambda), &jy.tr_mul(&lambda));
            vjp.offer(relative_error(&join(&vx, &vy), &reference), x, y, None);
        }

        if let Some(floor) = problem.upper_floor() {
            bound.offer(floor - problem.upper(x, y), x, y, None);
        }
    }

    let mut convex_f = Tracker::new("convex_f", CONVEXITY_TOL);
    let mut convex_g = Tracker::new("convex_g", CONVEXITY_TOL);
    for i in 0..CONVEXITY_PAIRS {
        let x = match points.get(i % points.len().max(1)) {
            Some((x, _)) => x.clone(),
            None => problem.set_x().project(&gaussian(&mut rng, n))?,
        };
        let y1 = problem.set_y().project(&(gaussian(&mut rng, m) * 2.0))?;
        let y2 = problem.set_y().project(&(gaussian(&mut rng, m) * 2.0))?;
        let mid = (&y1 + &y2) * 0.5;
        let excess =
            problem.lower(&x, &mid) - 0.5 * (problem.lower(&x, &y1) + problem.lower(&x, &y2));
        convex_f.offer(excess, &x, &y1, Some(&y2));
        if p > 0 {
            let gm = problem.constraints(&x, &mid);
            let g1 = problem.constraints(&x, &y1);
            let g2 = problem.constraints(&x, &y2);
            if gm.len() == p && g1.len() == p && g2.len() == p {
                let worst = (gm - (g1 + g2) * 0.5).max();
                convex_g.offer(worst, &x, &y1, Some(&y2));
            }
        }
    }

    Ok(ValidationReport {
        checks: vec![
            dims.finish(),
            grad_upper.finish(),
            grad_lower.finish(),
            jac.finish(),
            vjp.finish(),
            convex_f.finish(),
            convex_g.finish(),
            bound.finish(),
        ],
    })
}

fn fd_jacobian(problem: &dyn BilevelProblem, x: &Vector, y: &Vector) -> Matrix {
    let n = x.len();
    let w = join(x, y);
    let p = problem.dim_g();
    let mut out = Matrix::zeros(p, w.len());
    let mut probe = w.clone();
    for j in 0..w.len() {
        let orig = probe[j];
        probe[j] = orig + FD_STEP;
        let (px, py) = split(&probe, n);
        let up = problem.constraints(&px, &py);
        probe[j] = orig - FD_STEP;
        let (px, py) = split(&probe, n);
        let down = problem.constraints(&px, &py);
        probe[j] = orig;
        out.set_column(j, &((up - down) / (2.0 * FD_STEP)));
    }
    out
}

/// Draws `count` points `(x, y, z)` with `(x, y) = Proj_C(xi)` for Gaussian
/// `xi` of scale `spread` and `z` uniform on `[0, r]^p`.
pub fn sample_feasible(
    problem: &dyn BilevelProblem,
    prox: Proximal,
    count: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<(Vector, Vector, Vector)>> {
    use rand::Rng;
    let (n, m, p) = (problem.dim_x(), problem.dim_y(), problem.dim_g());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let w = problem
                .feasible_set()
                .project(&(gaussian(&mut rng, n + m) * spread))?;
            let (x, y) = split(&w, n);
            let z = Vector::from_fn(p, |_, _| rng.random::<f64>() * prox.radius);
            Ok((x, y, z))
        })
        .collect()
}

/// Outcome of comparing `grad v` with central differences of `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub points: usize,
    pub max_rel_error: f64,
    /// Point with the largest error, as `(x, y, z)` concatenated.
    pub worst_point: Option<Vector>,
}

impl GradientCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares the closed-form gradient of `v` with central differences (step
/// `h`) of oracle values at every point, over all coordinates of `(x, y, z)`.
pub fn check_value_gradient(
    problem: &dyn BilevelProblem,
    prox: Proximal,
    constants: &TheoryConstants,
    opts: &OracleOptions,
    points: &[(Vector, Vector, Vector)],
    h: f64,
) -> Result<GradientCheck> {
    let (n, m) = (problem.dim_x(), problem.dim_y());
    let mut worst = 0.0_f64;
    let mut worst_point = None;
    for (x, y, z) in points {
        let at = Anchor::new(x, y, z);
        let saddle = saddle_oracle(problem, at, prox, constants, opts, None)?;
        let (gx, gy, gz) = grad_v(problem, at, &saddle, prox);
        let analytic = join(&join(&gx, &gy), &gz);
        let base = join(&join(x, y), z);
        let warm = (&saddle.theta, &saddle.lambda);
        let mut fd = Vector::zeros(base.len());
        let mut probe = base.clone();
        for i in 0..base.len() {
            let eval = |w: &Vector| -> Result<f64> {
                let px = w.rows(0, n).into_owned();
                let py = w.rows(n, m).into_owned();
                let pz = w.rows(n + m, w.len() - n - m).into_owned();
                saddle_oracle(
                    problem,
                    Anchor::new(&px, &py, &pz),
                    prox,
                    constants,
                    opts,
                    Some(warm),
                )
                .map(|s| s.value)
            };
            let orig = probe[i];
            probe[i] = orig + h;
            let up = eval(&probe)?;
            probe[i] = orig - h;
            let down = eval(&probe)?;
            probe[i] = orig;
            fd[i] = (up - down) / (2.0 * h);
        }
        let err = relative_error(&analytic, &fd);
        if err > worst || err.is_nan() {
            worst = err;
            worst_point = Some(base);
        }
    }
    Ok(GradientCheck {
        points: points.len(),
        max_rel_error: worst,
        worst_point,
    })
}
