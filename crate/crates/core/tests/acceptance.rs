//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::f64::consts::{E, PI};
use std::time::{Duration, Instant};

use idepcag::cli::commands::{self, bisect, max_deviation, trajectory_csv};
use idepcag::cli::RunConfig;
use idepcag::expr::ScalarExpr;
use idepcag::grid::ArgumentGrid;
use idepcag::kernel::{criterion_integrals, gl2_lagged_integral, gl2_oscillation_bound, h3_check, j_value, w_intra};
use idepcag::oscillation::{classify_discrete, gronwall_ratio, GronwallEnvelope, OscillationError, Status, Window};
use idepcag::problem::{ImpulseRule, Problem};
use idepcag::quad::QuadConfig;
use idepcag::solver::oracle::oracle_integrate;
use idepcag::solver::{solve, Side, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn problem(a: &str, b: &str, alpha: f64, z0: f64, horizon: f64) -> Problem {
    Problem::new(
        ScalarExpr::parse(a).unwrap(),
        ScalarExpr::parse(b).unwrap(),
        ArgumentGrid::uniform(0.0, 1.0, alpha).unwrap(),
        0.0,
        z0,
        horizon,
    )
}

fn check(ok: bool, failures: &mut Vec<String>, msg: String) {
    if !ok {
        failures.push(msg);
    }
}

fn finish(failures: Vec<String>, detail: String, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    let mut failures = failures;
    if let Some(b) = budget {
        check(elapsed <= b, &mut failures, format!("took {elapsed:.2?}, budget {b:?}"));
    }
    let detail = format!("{detail}; {elapsed:.2?}");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn rel(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        x.abs()
    } else {
        ((x - y) / y).abs()
    }
}

/// Coefficients small enough that the integrability condition holds on
/// unit intervals, impulse factors of magnitude in [0.5, 1.5] with random
/// signs.
fn random_problem(rng: &mut ChaCha8Rng, horizon: usize) -> Problem {
    let coef = |rng: &mut ChaCha8Rng| {
        let c0: f64 = rng.gen_range(-0.4..0.4);
        let c1: f64 = rng.gen_range(-0.3..0.3);
        let w: f64 = rng.gen_range(0.5..3.0);
        let f = if rng.gen_bool(0.5) { "sin" } else { "cos" };
        format!("({c0}) + ({c1})*{f}({w}*t)")
    };
    let a = coef(rng);
    let b = coef(rng);
    let alpha = rng.gen_range(0.0..=1.0);
    let values = (0..horizon)
        .map(|_| {
            let m: f64 = rng.gen_range(0.5..1.5);
            let m = if rng.gen_bool(0.5) { m } else { -m };
            m - 1.0
        })
        .collect();
    let z0 = rng.gen_range(0.5..2.0);
    problem(&a, &b, alpha, z0, horizon as f64).with_impulses(ImpulseRule::Explicit { first: 1, values })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for alpha in [-2.0, -0.5, 0.5, 2.0] {
        for beta in [-2.0, -0.5, 0.5, 2.0] {
            let p = problem("0", &format!("{alpha} - 1"), 0.0, 1.0, 50.0).with_impulses(ImpulseRule::Multiplier(beta));
            let traj = solve(&p).map_err(|e| e.to_string())?;
            for s in traj.skeleton() {
                let expected = (alpha * beta as f64).powi(s.k as i32);
                worst = worst.max(rel(s.z_right, expected));
            }
            let verdict = classify_discrete(&traj, Window::new(8, 40)).map_err(|e| e.to_string())?;
            let osc = verdict.status == Status::Oscillatory;
            check(
                osc == (alpha * beta < 0.0),
                &mut failures,
                format!("alpha={alpha}, beta={beta}: {}", verdict.status.as_str()),
            );
        }
    }
    check(worst <= 1e-12, &mut failures, format!("skeleton rel error {worst:e} > 1e-12"));
    finish(failures, format!("max skeleton rel error {worst:.1e}"), start.elapsed(), Some(Duration::from_secs(1)))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let q0 = 0.7;
    for p in [0.5f64, 1.0, 2.0] {
        let prob = problem(&format!("-{p}"), &format!("-{q0}"), 0.0, 1.0, 10.0);
        for k in 0..5 {
            let (_, i_minus) = criterion_integrals(&prob, k).map_err(|e| e.to_string())?;
            worst = worst.max((i_minus + q0 * p.exp_m1() / p).abs());
        }
    }
    check(worst <= 1e-8, &mut failures, format!("I- error {worst:e} > 1e-8"));

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig::from_json(&format!(
        r#"{{
            "params": {{"p": 1, "q0": 0.5}},
            "problem": {{"a": "-p", "b": "-q0", "grid": {{"type": "uniform", "t0": 0, "h": 1, "alpha": 0}},
                         "z0": 1, "horizon": 20}},
            "analysis": {{"window": [0, 16]}},
            "sweep": {{"parameter": "q0", "lo": 0.3, "hi": 0.9, "steps": 7,
                       "root": {{"quantity": "inf_i_minus", "threshold": -1, "tol": 1e-9}}}},
            "output": {{"dir": {:?}}}
        }}"#,
        dir.path()
    ))
    .map_err(|e| e.to_string())?;
    let summary = commands::sweep(&cfg).map_err(|e| e.to_string())?;
    let root: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("root = "))
        .ok_or("sweep reported no root")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    let expected = 1.0 / (E - 1.0);
    check((root - expected).abs() <= 1e-6, &mut failures, format!("q0* = {root} vs {expected}"));
    finish(
        failures,
        format!("I- error {worst:.1e}, q0* = {root:.9} (1/(e-1) = {expected:.9})"),
        start.elapsed(),
        Some(Duration::from_secs(5)),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let p = 1.0f64;
    let closed = 2.0 * p.exp() * p.exp_m1() / p;
    let mut worst = 0.0f64;
    for k in 1..5 {
        let v = gl2_lagged_integral(p, k, &QuadConfig::default()).map_err(|e| e.to_string())?;
        worst = worst.max((v - closed).abs());
    }
    check(worst <= 1e-8, &mut failures, format!("lagged integral error {worst:e} > 1e-8"));

    let bound = gl2_oscillation_bound(p);
    check(
        (bound - 0.21405).abs() < 5e-6,
        &mut failures,
        format!("bound p e^-p / (2(e^p - 1)) at p=1 is {bound:.6}, expected 0.21405"),
    );

    let q = 0.3;
    let prob = Problem::new(
        ScalarExpr::parse(&format!("-{p}")).unwrap(),
        ScalarExpr::parse(&format!("-{q}")).unwrap(),
        ArgumentGrid::lagged(0.0, 1.0, 1).unwrap(),
        1.0,
        1.0,
        50.0,
    )
    .with_history(vec![1.0]);
    let traj = solve(&prob).map_err(|e| e.to_string())?;
    let verdict = classify_discrete(&traj, Window::new(8, 40)).map_err(|e| e.to_string())?;
    check(
        verdict.status == Status::Oscillatory,
        &mut failures,
        format!("lagged q=0.3 trajectory is {}", verdict.status.as_str()),
    );
    finish(
        failures,
        format!("integral error {worst:.1e}, bound {bound:.6}, q=0.3 {}", verdict.status.as_str()),
        start.elapsed(),
        None,
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let g = |a: f64| 2.0 * PI * (1.0 - a.exp()) / (a * a + 4.0 * PI * PI) + 1.0;
    let a_star = bisect(|a| Ok(g(a)), 1.5, 2.5, 1e-12).map_err(|e| e.to_string())?;
    check((a_star - 2.07553).abs() <= 1e-4, &mut failures, format!("a* = {a_star}"));

    let cases = [(2.2, 1.0, Status::Oscillatory), (1.9, 1.0, Status::Nonoscillatory), (1.998, -100.0, Status::Oscillatory)];
    let mut seen = Vec::new();
    for (a, c, expected) in cases {
        let p = problem(&format!("-{a}"), "sin(2*pi*t)", 0.0, 1.0, 200.0).with_impulses(ImpulseRule::Multiplier(c));
        let traj = solve(&p).map_err(|e| e.to_string())?;
        let verdict = classify_discrete(&traj, Window::new(8, 64)).map_err(|e| e.to_string())?;
        check(verdict.status == expected, &mut failures, format!("a={a}, C={c}: {}", verdict.status.as_str()));
        seen.push(format!("a={a} C={c} {}", verdict.status.as_str()));
    }
    finish(
        failures,
        format!("a* = {a_star:.8}, {}", seen.join(", ")),
        start.elapsed(),
        Some(Duration::from_secs(10)),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let (mut worst_w, mut worst_z) = (0.0f64, 0.0f64);
    let m = 0.7;
    for a in ["sin(t)", "t^2", "exp(t/10)", "-3"] {
        let p = problem(a, &format!("-({a})"), 1.0, 1.5, 20.0).with_impulses(ImpulseRule::Multiplier(m));
        for k in 0..20 {
            let w = w_intra(&p, k, (k + 1) as f64, k as f64).map_err(|e| e.to_string())?;
            worst_w = worst_w.max((w - 1.0).abs());
        }
        let traj = solve(&p).map_err(|e| e.to_string())?;
        for k in 0..20 {
            for f in [0.0, 0.3, 0.7, 0.999] {
                let z = traj.eval_dense(k as f64 + f).map_err(|e| e.to_string())?;
                worst_z = worst_z.max(rel(z, m.powi(k) * 1.5));
            }
        }
    }
    check(worst_w <= 1e-9, &mut failures, format!("w error {worst_w:e} > 1e-9"));
    check(worst_z <= 1e-9, &mut failures, format!("interval value rel error {worst_z:e} > 1e-9"));

    let p = problem("sin(t)", "-sin(t)", 1.0, -19.0, 20.0).with_impulses(ImpulseRule::Multiplier(-0.9));
    let traj = solve(&p).map_err(|e| e.to_string())?;
    let mut worst_fig = 0.0f64;
    for k in 0..20 {
        let z = traj.eval_dense(k as f64 + 0.5).map_err(|e| e.to_string())?;
        worst_fig = worst_fig.max(rel(z, (-0.9f64).powi(k) * -19.0));
    }
    check(worst_fig <= 1e-9, &mut failures, format!("c=-9/10 rel error {worst_fig:e}"));
    finish(
        failures,
        format!("w error {worst_w:.1e}, value error {worst_z:.1e}, c=-9/10 error {worst_fig:.1e}"),
        start.elapsed(),
        Some(Duration::from_secs(2)),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut drawn = 0;
    while drawn < 10 {
        let p = random_problem(&mut rng, 10);
        if !h3_check(&p, 0..10).map_err(|e| e.to_string())?.pass {
            continue;
        }
        drawn += 1;
        let traj = solve(&p).map_err(|e| e.to_string())?;
        let oracle = oracle_integrate(&p, 10_000).map_err(|e| e.to_string())?;
        let ts = commands::sample_times(p.tau, p.horizon, 100, None);
        let kernel: Vec<f64> = ts.iter().map(|&t| traj.eval_dense(t).unwrap()).collect();
        let reference: Vec<f64> = ts.iter().map(|&t| oracle.eval_dense(t).unwrap()).collect();
        let dev = max_deviation(&kernel, &reference);
        check(dev <= 1e-6, &mut failures, format!("problem {drawn}: deviation {dev:e}"));
        worst = worst.max(dev);
    }
    finish(failures, format!("max deviation {worst:.1e} over 10 problems"), start.elapsed(), Some(Duration::from_secs(30)))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut drawn = 0;
    while drawn < 10 {
        let p = random_problem(&mut rng, 10);
        match GronwallEnvelope::new(&p) {
            Err(OscillationError::GronwallUnavailable { .. }) => continue,
            Err(e) => return Err(e.to_string()),
            Ok(_) => {}
        }
        drawn += 1;
        let traj = solve(&p).map_err(|e| e.to_string())?;
        let ratio = gronwall_ratio(&traj, 1000).map_err(|e| e.to_string())?;
        check(ratio <= 1.0 + 1e-9, &mut failures, format!("problem {drawn}: |z|/bound = {ratio}"));
        worst = worst.max(ratio);
    }
    finish(failures, format!("max |z|/bound {worst:.4} over 10 problems"), start.elapsed(), None)
}

fn restart_error(traj: &Trajectory, p: &Problem, m: i64) -> Result<f64, String> {
    let state = traj.knot(m).ok_or("restart knot missing")?;
    let mut restarted = p.clone();
    restarted.tau = state.t;
    restarted.z0 = state.z_right;
    let tail = solve(&restarted).map_err(|e| e.to_string())?;
    let scale = traj.skeleton().iter().map(|s| s.z_right.abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for s in tail.skeleton() {
        let full = traj.knot(s.k).ok_or("knot missing")?;
        worst = worst.max((s.z_right - full.z_right).abs() / scale);
    }
    let t = state.t + 0.37;
    worst = worst.max((tail.eval_dense(t).unwrap() - traj.eval_dense(t).unwrap()).abs() / scale);
    Ok(worst)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut cont, mut cocycle, mut ji, mut restart) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let p = random_problem(&mut rng, 12);
        let traj = solve(&p).map_err(|e| e.to_string())?;

        for s in traj.skeleton().iter().skip(1) {
            let factor = p.impulses.factor(s.k).map_err(|e| e.to_string())?;
            check(s.z_right == s.z_left * factor, &mut failures, format!("jump identity broken at k={}", s.k));
        }

        let smooth = p.clone().with_impulses(ImpulseRule::None);
        let st = solve(&smooth).map_err(|e| e.to_string())?;
        let scale = st.skeleton().iter().map(|s| s.z_right.abs()).fold(1e-300, f64::max);
        for s in st.skeleton().iter().skip(1) {
            let left = st.eval(s.t, Side::Left).unwrap();
            let right = st.eval(s.t, Side::Right).unwrap();
            let near = st.eval_dense(s.t - 1e-12).unwrap();
            cont = cont.max((left - right).abs().max((near - right).abs()) / scale);
        }

        for k in 0..12 {
            let mut pts: Vec<f64> = (0..3).map(|_| k as f64 + rng.gen_range(0.0..=1.0)).collect();
            pts.sort_by(f64::total_cmp);
            let (r, s, t) = (pts[0], pts[1], pts[2]);
            let w = |x, y| w_intra(&p, k, x, y).map_err(|e| e.to_string());
            cocycle = cocycle.max((w(t, s)? * w(s, r)? - w(t, r)?).abs());

            let (i_plus, i_minus) = criterion_integrals(&p, k).map_err(|e| e.to_string())?;
            let j_k = j_value(&p, k, k as f64).map_err(|e| e.to_string())?;
            let j_k1 = j_value(&p, k, (k + 1) as f64).map_err(|e| e.to_string())?;
            ji = ji.max((j_k - (1.0 - i_plus)).abs()).max((j_k1 - (1.0 + i_minus)).abs());
        }

        restart = restart.max(restart_error(&traj, &p, 5)?);

        let first = trajectory_csv(&traj, 16).map_err(|e| e.to_string())?;
        let again = trajectory_csv(&solve(&p).map_err(|e| e.to_string())?, 16).map_err(|e| e.to_string())?;
        check(first == again, &mut failures, "trajectory CSV differs between runs".into());
    }
    check(cont <= 1e-9, &mut failures, format!("continuity {cont:e} > 1e-9"));
    check(cocycle <= 1e-9, &mut failures, format!("cocycle {cocycle:e} > 1e-9"));
    check(ji <= 1e-10, &mut failures, format!("j-I consistency {ji:e} > 1e-10"));
    check(restart <= 1e-9, &mut failures, format!("restart {restart:e} > 1e-9"));
    finish(
        failures,
        format!("continuity {cont:.1e}, cocycle {cocycle:.1e}, j-I {ji:.1e}, restart {restart:.1e}, deterministic CSV"),
        start.elapsed(),
        None,
    )
}

/// Criteria whose stated target disagrees with its own formula: the bound
/// p e^-p / (2(e^p - 1)) is 0.107049 at p = 1, not 0.21405. They still run
/// and print FAIL; the run fails if one of them starts passing.
const EXPECTED_FAILURES: &[usize] = &[3];

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("impulsive constant-coefficient skeleton", criterion_1),
        ("delay threshold 1/(e-1)", criterion_2),
        ("lagged argument integral and bound", criterion_3),
        ("sin(2 pi t) threshold and verdicts", criterion_4),
        ("unit fundamental solution", criterion_5),
        ("oracle equivalence", criterion_6),
        ("Gronwall domination", criterion_7),
        ("invariant suite", criterion_8),
    ];
    let mut failed = 0;
    let mut unexpected = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        let expected_failure = EXPECTED_FAILURES.contains(&n);
        match run() {
            Ok(detail) => {
                println!("criterion {n} {name}: pass ({detail})");
                if expected_failure {
                    unexpected += 1;
                    println!("criterion {n} was expected to fail; update EXPECTED_FAILURES");
                }
            }
            Err(detail) => {
                failed += 1;
                let note = if expected_failure { ", expected" } else { "" };
                println!("criterion {n} {name}: FAIL{note} ({detail})");
                if !expected_failure {
                    unexpected += 1;
                }
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
