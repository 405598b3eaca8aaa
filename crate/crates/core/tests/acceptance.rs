//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line with
//! the measured quantity, then asserts at the stated tolerance.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

mod common;

use std::fs;
use std::time::Instant;

use lvhba::bench::{
    build_merely_convex, build_scalar, build_strongly_convex, BenchmarkInstance, MetricTracker,
};
use lvhba::problem::join;
use lvhba::solver::{merit_vk, residual_rk, Control, Solver};
use lvhba::state::Anchor;
use lvhba::validate::{check_value_gradient, sample_feasible};
use lvhba::valuefn::{
    feasibility_gap, gda_step, saddle_oracle, OracleMethod, OracleOptions, Proximal,
};
use lvhba::{derive_constants, ConvexSet, IterateState, Matrix, StepMode, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, passed: bool, detail: impl AsRef<str>) {
    println!(
        "{} {name}: {}",
        if passed { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(passed, "{name}: {}", detail.as_ref());
}

fn iterations_to_accuracy(
    inst: &BenchmarkInstance,
    scale: f64,
    budget: usize,
) -> (Option<usize>, f64) {
    let mut config = inst.default_config.clone();
    config.max_iters = budget;
    let solver = Solver::new(inst.problem.as_ref(), config, &inst.moduli).unwrap();
    let (x, y) = inst.uniform_init(scale);
    let mut tracker = MetricTracker::new(inst, budget).stop_at_threshold();
    let start = Instant::now();
    solver.run(&solver.init_state(x, y), &mut tracker).unwrap();
    (tracker.first_hit, start.elapsed().as_secs_f64())
}

#[test]
fn merely_convex_reaches_relative_accuracy() {
    let inst = build_merely_convex(100);
    let (hit10, secs10) = iterations_to_accuracy(&inst, 10.0, 200_000);
    let (hit100, secs100) = iterations_to_accuracy(&inst, 100.0, 400_000);
    let passed = hit10.is_some() && secs10 < 120.0 && hit100.is_some();
    report(
        "merely_convex_accuracy",
        passed,
        format!(
            "rel err <= 1e-2 at k = {hit10:?} from 10*1 ({secs10:.2} s, budget 2e5, 120 s); \
             k = {hit100:?} from 100*1 ({secs100:.2} s, budget 4e5)"
        ),
    );
}

#[test]
fn value_gradient_matches_finite_differences() {
    let benches = [
        build_scalar(1.0, true),
        build_merely_convex(10),
        build_strongly_convex(20, 7).unwrap(),
    ];
    let opts = OracleOptions::with_tol(1e-12);
    let mut worst = Vec::new();
    for b in &benches {
        let p = b.problem.as_ref();
        let prox = Proximal::from_config(&b.default_config);
        let c = derive_constants(p, &b.default_config, &b.moduli).unwrap();
        let pts = sample_feasible(p, prox, 100, 2.0, 11).unwrap();
        let check = check_value_gradient(p, prox, &c, &opts, &pts, 1e-6).unwrap();
        worst.push((b.name.clone(), check.max_rel_error));
    }
    let passed = worst.iter().all(|(_, e)| *e <= 1e-5);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n}: {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        "value_gradient_fd",
        passed,
        format!("max rel err (tol 1e-5) {detail}"),
    );
}

/// Largest per-step ratio `|w_{t+1} - w*| / |w_t - w*|` over the first 200
/// GDA steps on 50 random inner problems of `inst`.
fn worst_gda_ratio(inst: &BenchmarkInstance, seed: u64) -> (f64, f64, f64) {
    let p = inst.problem.as_ref();
    let prox = Proximal::from_config(&inst.default_config);
    let c = derive_constants(p, &inst.default_config, &inst.moduli).unwrap();
    let eta = c.oracle_step();
    let exact = OracleOptions {
        method: OracleMethod::Gda,
        max_inner: 10_000_000,
        ..OracleOptions::with_tol(1e-15)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for (x, y, z) in sample_feasible(p, prox, 50, 2.0, seed).unwrap() {
        let at = Anchor::new(&x, &y, &z);
        let s = saddle_oracle(p, at, prox, &c, &exact, None).unwrap();
        let star = join(&s.theta, &s.lambda);
        let mut theta = &s.theta + common::gaussian(&mut rng, s.theta.len());
        let mut lambda = Vector::from_fn(s.lambda.len(), |_, _| rng.random::<f64>() * prox.radius);
        let mut dist = (join(&theta, &lambda) - &star).norm();
        for _ in 0..200 {
            let (t, l) = gda_step(p, at, &theta, &lambda, eta, prox).unwrap();
            let next = (join(&t, &l) - &star).norm();
            // Below this the saddle's own rounding error dominates the ratio.
            if dist < 1e-9 {
                break;
            }
            worst = worst.max(next / dist);
            (theta, lambda, dist) = (t, l, next);
        }
    }
    let claimed = 1.0 - eta * c.rho_t;
    let corrected = (1.0 - eta * (2.0 * c.rho_t - eta * c.l_b * c.l_b)).sqrt();
    (worst, claimed, corrected)
}

#[test]
fn gda_contracts_towards_the_saddle() {
    let mut passed = true;
    let mut detail = Vec::new();
    for (inst, seed) in [(build_scalar(1.0, true), 31), (build_merely_convex(10), 32)] {
        let (worst, claimed, corrected) = worst_gda_ratio(&inst, seed);
        passed &= worst <= claimed + 1e-8;
        detail.push(format!(
            "{}: worst ratio {worst:.6} vs 1 - eta rho_T = {claimed:.6} \
             (sqrt(1 - eta(2 rho_T - eta L_B^2)) = {corrected:.6})",
            inst.name
        ));
    }
    report("gda_contraction", passed, detail.join("; "));
}

#[test]
fn merit_decreases_under_theory_steps() {
    let inst = build_scalar(1.0, true);
    let p = inst.problem.as_ref();
    let mut config = inst.default_config.clone();
    config.mode = StepMode::Theory;
    config.max_iters = 500;
    config.residual_every = 1000;
    let solver = Solver::new(p, config.clone(), &inst.moduli).unwrap();
    let opts = OracleOptions::with_tol(1e-12);
    let floor = p.upper_floor().unwrap();
    let mut merits = Vec::new();
    let mut observer = |s: &IterateState, _: Option<&_>| {
        let v = merit_vk(
            p,
            s,
            config.penalty(s.k),
            solver.prox(),
            solver.constants(),
            floor,
            &opts,
        )
        .unwrap();
        merits.push(v);
        Control::Continue
    };
    let init = solver.init_state(Vector::from_element(1, 3.0), Vector::from_element(1, -2.0));
    solver.run(&init, &mut observer).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for w in merits.windows(2) {
        let excess = w[1] - w[0] - 1e-8 * (1.0 + w[0].abs());
        worst = worst.max(w[1] - w[0]);
        violations += usize::from(excess > 0.0);
    }
    report(
        "merit_descent",
        merits.len() == 501 && violations == 0,
        format!(
            "{} transitions, {violations} increases beyond 1e-8(1+|V|), largest change {worst:.3e}, V_0 = {:.4}, V_500 = {:.4}",
            merits.len() - 1,
            merits[0],
            merits[merits.len() - 1]
        ),
    );
}

#[test]
fn value_gap_is_nonnegative() {
    let benches = [
        build_scalar(1.0, true),
        build_merely_convex(100),
        build_strongly_convex(100, 0).unwrap(),
    ];
    let opts = OracleOptions::with_tol(1e-12);
    let mut detail = Vec::new();
    let mut passed = true;
    for b in &benches {
        let p = b.problem.as_ref();
        let prox = Proximal::from_config(&b.default_config);
        let c = derive_constants(p, &b.default_config, &b.moduli).unwrap();
        let mut least = f64::INFINITY;
        for (x, y, z) in sample_feasible(p, prox, 1000, 3.0, 5).unwrap() {
            least =
                least.min(feasibility_gap(p, Anchor::new(&x, &y, &z), prox, &c, &opts).unwrap());
        }
        passed &= least >= -1e-9;
        detail.push(format!("{}: min gap {least:.3e}", b.name));
    }
    report(
        "value_gap_lower_bound",
        passed,
        format!("1000 points each (tol -1e-9); {}", detail.join(", ")),
    );
}

#[test]
fn saddle_tracking_and_residual_decay() {
    let inst = build_merely_convex(10);
    let p = inst.problem.as_ref();
    let mut config = inst.default_config.clone();
    config.max_iters = 10_000;
    config.residual_every = 20_000;
    let solver = Solver::new(p, config.clone(), &inst.moduli).unwrap();
    let opts = OracleOptions::with_tol(1e-12);
    let mut best_dist = Vec::new();
    let mut best_res = Vec::new();
    let mut observer = |s: &IterateState, _: Option<&_>| {
        let at = s.anchor();
        let saddle = saddle_oracle(
            p,
            at,
            solver.prox(),
            solver.constants(),
            &opts,
            Some((&s.theta, &s.lambda)),
        )
        .unwrap();
        let dist = (join(&s.theta, &s.lambda) - join(&saddle.theta, &saddle.lambda)).norm();
        let res = residual_rk(
            p,
            at,
            config.penalty(s.k),
            solver.prox(),
            solver.constants(),
            &opts,
        )
        .unwrap();
        let prev_d = best_dist.last().copied().unwrap_or(f64::INFINITY);
        let prev_r = best_res.last().copied().unwrap_or(f64::INFINITY);
        best_dist.push(dist.min(prev_d));
        best_res.push(res.min(prev_r));
        Control::Continue
    };
    let (x, y) = inst.uniform_init(10.0);
    solver.run(&solver.init_state(x, y), &mut observer).unwrap();
    let d_ratio = best_dist[10_000] / best_dist[2_500];
    let r_ratio = best_res[10_000] / best_res[0];
    report(
        "rate_shape",
        d_ratio <= 0.6 && r_ratio <= 1e-2,
        format!(
            "best saddle distance K=1e4 / K=2.5e3 = {d_ratio:.3e} (<= 0.6); best R_k K=1e4 / R_0 = {r_ratio:.3e} (<= 1e-2)"
        ),
    );
}

#[test]
fn projections_match_reference_and_are_firmly_behaved() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut dykstra_err = 0.0_f64;
    for _ in 0..50 {
        let dim = rng.random_range(2..=5);
        let count = rng.random_range(1..=6);
        let (a, b) = common::random_polyhedron(&mut rng, dim, count);
        let set = ConvexSet::intersection(common::halfspaces(&a, &b)).unwrap();
        let w = common::gaussian(&mut rng, dim) * 3.0;
        let reference = common::brute_force_polyhedron_projection(&a, &b, &w);
        dykstra_err = dykstra_err.max((set.project(&w).unwrap() - reference).norm());
    }

    let mut sets: Vec<(&str, ConvexSet)> = Vec::new();
    let dim = 4;
    let lo = common::gaussian(&mut rng, dim);
    let hi = &lo + Vector::from_fn(dim, |_, _| rng.random_range(0.1..3.0));
    sets.push(("box", ConvexSet::boxed(lo, hi).unwrap()));
    sets.push((
        "hyperplane",
        ConvexSet::hyperplane(common::gaussian(&mut rng, dim), 0.7).unwrap(),
    ));
    sets.push((
        "halfspace",
        ConvexSet::halfspace(common::gaussian(&mut rng, dim), -0.4).unwrap(),
    ));
    let m = Matrix::from_fn(2, dim, |_, _| rng.random_range(-1.0..1.0));
    sets.push((
        "affine",
        ConvexSet::affine(m, common::gaussian(&mut rng, 2)).unwrap(),
    ));
    sets.push((
        "ball",
        ConvexSet::ball(common::gaussian(&mut rng, dim), 1.5).unwrap(),
    ));
    sets.push((
        "product",
        ConvexSet::product(vec![
            ConvexSet::nonneg_box(2, 1.0),
            ConvexSet::ball(Vector::zeros(2), 0.5).unwrap(),
        ]),
    ));
    let mut suite = Vec::new();
    let mut all_ok = true;
    for (name, s) in &sets {
        let (mut expansion, mut vi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for _ in 0..1000 {
            let u = common::gaussian(&mut rng, dim) * 5.0;
            let w = common::gaussian(&mut rng, dim) * 5.0;
            let (pu, pw) = (s.project(&u).unwrap(), s.project(&w).unwrap());
            expansion = expansion.max((&pu - &pw).norm() - (&u - &w).norm());
            vi = vi.max((&w - &pw).dot(&(&pu - &pw)));
        }
        all_ok &= expansion <= 1e-12 && vi <= 1e-9;
        suite.push(format!("{name} (expansion {expansion:.1e}, vi {vi:.1e})"));
    }
    report(
        "projection_oracles",
        dykstra_err <= 1e-6 && all_ok,
        format!(
            "dykstra vs active-set enumeration max err {dykstra_err:.2e} (tol 1e-6) on 50 instances; 1000 samples each: {}",
            suite.join(", ")
        ),
    );
}

#[test]
fn strongly_convex_lower_level_error_drops() {
    let inst = build_strongly_convex(100, 0).unwrap();
    let mut config = inst.default_config.clone();
    config.max_iters = 10_000;
    let solver = Solver::new(inst.problem.as_ref(), config, &inst.moduli).unwrap();
    let mut tracker = MetricTracker::new(&inst, 1);
    let (x, y) = inst.uniform_init(5.0);
    solver.run(&solver.init_state(x, y), &mut tracker).unwrap();
    let errs: Vec<f64> = tracker.samples.iter().map(|s| s.ll_err.unwrap()).collect();
    let hyper_finite = tracker
        .samples
        .iter()
        .all(|s| s.hyper.is_some_and(f64::is_finite));
    let initial = errs[0];
    let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
    let last = *errs.last().unwrap();
    report(
        "strongly_convex_ll_error",
        best <= 1e-2 * initial && hyper_finite && tracker.samples.len() == 10_001,
        format!(
            "ll err {initial:.3e} -> best {best:.3e}, final {last:.3e} over 1e4 iterations \
             (need 1e-2 x initial); hyperobjective recorded and finite at {} iterates: {hyper_finite}",
            tracker.samples.len()
        ),
    );
}

#[test]
fn identical_runs_write_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "benchmark = strongly_convex\nbenchmark.n = 20\nbenchmark.seed = 3\nseed = 3\n\
         solver.max_iters = 2000\nsolver.residual_every = 50\n",
    )
    .unwrap();
    let mut traces = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        fs::create_dir(&out).unwrap();
        let code = lvhba::cli::main_with_args([
            "lvhba",
            "run",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code, 0);
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    report(
        "determinism",
        traces[0] == traces[1],
        format!(
            "two runs wrote {} and {} bytes of trace.csv, identical: {}",
            traces[0].len(),
            traces[1].len(),
            traces[0] == traces[1]
        ),
    );
}
