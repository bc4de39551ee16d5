//! Subcommand implementations. Each returns the stdout summary; artifacts go
//! to `output.dir`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Quantity, RunConfig, SweepSpec};
use super::CliError;
use crate::oscillation::{
    aw_criterion, classify_continuous, classify_discrete, has_recurring_sign_changes, nonosc_criterion, wn_sequence,
    CriterionReport, CriterionVerdict, Status,
};
use crate::problem::Problem;
use crate::solver::oracle::oracle_integrate;
use crate::solver::{self, Segment, Trajectory};

/// Floor of the relative-deviation denominator, as a fraction of the
/// largest reference value.
pub const ORACLE_REL_FLOOR: f64 = 1e-3;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// `t, z, interval_k, is_knot, z_left, z_right`; the last two only on knot rows.
pub fn trajectory_csv(traj: &Trajectory, samples_per_interval: usize) -> Result<String, CliError> {
    let mut out = String::from("t,z,interval_k,is_knot,z_left,z_right\n");
    for (t, z, k, knot) in traj.sample(samples_per_interval)? {
        match knot {
            Some(s) => {
                let _ = writeln!(out, "{},{},{},1,{},{}", num(t), num(z), k, num(s.z_left), num(s.z_right));
            }
            None => {
                let _ = writeln!(out, "{},{},{},0,,", num(t), num(z), k);
            }
        }
    }
    Ok(out)
}

/// Integrability check on the solved intervals; failures are reported on
/// stderr only.
fn h3_advisory(traj: &Trajectory) {
    let (mut nu_plus, mut nu_minus) = (0.0f64, 0.0f64);
    for seg in traj.segments() {
        if let Segment::Standard(ker) = seg {
            nu_plus = nu_plus.max(ker.nu_plus);
            nu_minus = nu_minus.max(ker.nu_minus);
        }
    }
    if nu_plus >= 1.0 || nu_minus >= 1.0 {
        eprintln!(
            "warning: integrability condition fails (sup nu+ = {nu_plus:.6e}, sup nu- = {nu_minus:.6e}); \
             kernel invertibility was checked per interval instead"
        );
    }
}

pub fn solve(cfg: &RunConfig) -> Result<String, CliError> {
    let problem = cfg.build_problem()?;
    let traj = solver::solve(&problem)?;
    h3_advisory(&traj);
    write_artifact(&cfg.output.dir, "trajectory.csv", &trajectory_csv(&traj, cfg.output.samples_per_interval)?)?;
    let knots = traj.skeleton().iter().filter(|s| s.at_knot).count();
    let zeros = traj.zeros()?.len();
    let last = traj.eval_dense(problem.horizon)?;
    Ok(format!(
        "knots = {knots}\nzeros = {zeros}\nfinal = {}\nstart = {}\n",
        num(last),
        traj.convention().as_str()
    ))
}

pub fn classify(cfg: &RunConfig) -> Result<String, CliError> {
    let problem = cfg.build_problem()?;
    let traj = solver::solve(&problem)?;
    let window = cfg.analysis.window();
    let discrete = classify_discrete(&traj, window)?;
    let mut record = String::new();
    let _ = writeln!(record, "discrete_status = {}", discrete.status.as_str());
    let _ = writeln!(record, "discrete_evidence = {}", discrete.evidence);
    let _ = writeln!(record, "window = {} {}", discrete.window.0, discrete.window.1);

    let mut verdict = discrete.status;
    let mut evidence = discrete.evidence.to_string();
    if discrete.status == Status::Nonoscillatory {
        let continuous = classify_continuous(&traj, window)?;
        let _ = writeln!(record, "continuous_status = {}", continuous.status.as_str());
        let _ = writeln!(record, "continuous_evidence = {}", continuous.evidence);
        verdict = continuous.status;
        evidence = continuous.evidence.to_string();
    }
    if !problem.grid.is_lagged() {
        let wn = wn_sequence(&problem, discrete.window.0..discrete.window.1)?;
        let recurring = has_recurring_sign_changes(&wn);
        let _ = writeln!(record, "wn_recurring_sign_changes = {recurring}");
        if verdict == Status::Undetermined && recurring {
            verdict = Status::Oscillatory;
            evidence = "w_n changes sign recurrently".into();
        }
    }
    let _ = writeln!(record, "verdict = {}", verdict.as_str());
    write_artifact(&cfg.output.dir, "classification.txt", &record)?;
    Ok(format!("verdict = {}\nevidence = {evidence}\n", verdict.as_str()))
}

fn combined_verdict(osc: &CriterionReport, non: &CriterionReport) -> (CriterionVerdict, String) {
    if osc.verdict == CriterionVerdict::Oscillatory {
        (CriterionVerdict::Oscillatory, osc.reason.clone())
    } else if non.verdict == CriterionVerdict::Nonoscillatory {
        (CriterionVerdict::Nonoscillatory, non.reason.clone())
    } else {
        (CriterionVerdict::Inconclusive, osc.reason.clone())
    }
}

pub fn criterion(cfg: &RunConfig) -> Result<String, CliError> {
    let problem = cfg.build_problem()?;
    let (window, tol) = (cfg.analysis.window(), cfg.analysis.strictness_tol);
    let osc = aw_criterion(&problem, window, tol)?;
    let non = nonosc_criterion(&problem, window, tol)?;
    let (verdict, reason) = combined_verdict(&osc, &non);
    let record = format!("{}\n{}\nverdict = {}\n", osc.to_record(), non.to_record(), verdict.as_str());
    write_artifact(&cfg.output.dir, "criterion.txt", &record)?;
    Ok(format!("verdict = {}\nreason = {reason}\n", verdict.as_str()))
}

fn quantity(report: &CriterionReport, q: Quantity) -> f64 {
    match q {
        Quantity::SupIPlus => report.sup_i_plus,
        Quantity::InfIPlus => report.inf_i_plus,
        Quantity::SupIMinus => report.sup_i_minus,
        Quantity::InfIMinus => report.inf_i_minus,
    }
}

fn problem_at(cfg: &RunConfig, spec: &SweepSpec, value: f64) -> Result<Problem, CliError> {
    let mut params: BTreeMap<String, f64> = cfg.params.clone();
    params.insert(spec.parameter.clone(), value);
    cfg.problem.build(&params, cfg.quad()?)
}

fn reports_at(cfg: &RunConfig, spec: &SweepSpec, value: f64) -> Result<(CriterionReport, CriterionReport), CliError> {
    let problem = problem_at(cfg, spec, value)?;
    let (window, tol) = (cfg.analysis.window(), cfg.analysis.strictness_tol);
    Ok((aw_criterion(&problem, window, tol)?, nonosc_criterion(&problem, window, tol)?))
}

/// Parameter value in `[lo, hi]` where `g` changes sign, by bisection down
/// to a bracket of width `tol`.
pub fn bisect<F>(mut g: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, CliError>
where
    F: FnMut(f64) -> Result<f64, CliError>,
{
    let mut g_lo = g(lo)?;
    if g_lo == 0.0 {
        return Ok(lo);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid)?;
        if g_mid == 0.0 {
            return Ok(mid);
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            (lo, g_lo) = (mid, g_mid);
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing `sweep` section".into()))?;
    if !cfg.problem.mentions(&spec.parameter)? {
        return Err(CliError::Config(format!("sweep parameter `{}` does not occur in a, b or the impulse rule", spec.parameter)));
    }
    let values: Vec<f64> = (0..spec.steps)
        .map(|i| spec.lo + (spec.hi - spec.lo) * i as f64 / (spec.steps - 1) as f64)
        .collect();
    let rows: Vec<Result<(CriterionReport, CriterionReport), CliError>> =
        values.par_iter().map(|&v| reports_at(cfg, spec, v)).collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("parameter,sup_i_plus,inf_i_plus,sup_i_minus,inf_i_minus,oscillation,nonoscillation\n");
    for (v, (osc, non)) in values.iter().zip(&rows) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            num(*v),
            num(osc.sup_i_plus),
            num(osc.inf_i_plus),
            num(osc.sup_i_minus),
            num(osc.inf_i_minus),
            osc.verdict.as_str(),
            non.verdict.as_str()
        );
    }
    write_artifact(&cfg.output.dir, "sweep.csv", &csv)?;
    let mut summary = format!("points = {}\n", values.len());

    if let Some(root) = &spec.root {
        let g: Vec<f64> = rows.iter().map(|(osc, _)| quantity(osc, root.quantity) - root.threshold).collect();
        let bracket = g.windows(2).position(|p| p[0] == 0.0 || p[1] == 0.0 || (p[0] > 0.0) != (p[1] > 0.0));
        let Some(i) = bracket else {
            return Err(CliError::NoCrossing {
                quantity: root.quantity.as_str().into(),
                threshold: root.threshold,
                lo: spec.lo,
                hi: spec.hi,
            });
        };
        let x = if g[i] == 0.0 {
            values[i]
        } else if g[i + 1] == 0.0 {
            values[i + 1]
        } else {
            bisect(
                |v| Ok(quantity(&reports_at(cfg, spec, v)?.0, root.quantity) - root.threshold),
                values[i],
                values[i + 1],
                root.tol,
            )?
        };
        let record = format!(
            "parameter = {}\nquantity = {}\nthreshold = {}\nroot = {}\nbracket = {} {}\n",
            spec.parameter,
            root.quantity.as_str(),
            num(root.threshold),
            num(x),
            num(values[i]),
            num(values[i + 1])
        );
        write_artifact(&cfg.output.dir, "sweep_root.txt", &record)?;
        let _ = writeln!(summary, "root = {}", num(x));
    }
    Ok(summary)
}

/// Largest deviation between kernel and oracle solutions at `ts`, relative
/// to `max(|z_oracle(t)|, ORACLE_REL_FLOOR · max |z_oracle|)`; absolute
/// when the reference vanishes identically.
pub fn max_deviation(kernel: &[f64], oracle: &[f64]) -> f64 {
    let scale = oracle.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    kernel
        .iter()
        .zip(oracle)
        .map(|(z, zo)| {
            let diff = (z - zo).abs();
            if scale == 0.0 {
                diff
            } else {
                diff / zo.abs().max(ORACLE_REL_FLOOR * scale)
            }
        })
        .fold(0.0, f64::max)
}

/// Sample times in `[lo, hi]`: evenly spaced, or uniform random when seeded.
pub fn sample_times(lo: f64, hi: f64, n: usize, seed: Option<u64>) -> Vec<f64> {
    let n = n.max(2);
    match seed {
        None => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ts: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
            ts.sort_by(f64::total_cmp);
            ts
        }
    }
}

pub fn oracle_check(cfg: &RunConfig, seed: Option<u64>) -> Result<String, CliError> {
    let problem = cfg.build_problem()?;
    let traj = solver::solve(&problem)?;
    let oracle = oracle_integrate(&problem, cfg.oracle.steps_per_interval)?;
    let ts = sample_times(problem.tau, problem.horizon, cfg.oracle.samples, seed);
    let kernel = ts.iter().map(|&t| traj.eval_dense(t)).collect::<Result<Vec<_>, _>>()?;
    let reference = ts.iter().map(|&t| oracle.eval_dense(t)).collect::<Result<Vec<_>, _>>()?;
    let deviation = max_deviation(&kernel, &reference);
    let pass = deviation <= cfg.oracle.tolerance;
    let record = format!(
        "samples = {}\nsteps_per_interval = {}\nmax_deviation = {}\ntolerance = {}\nresult = {}\n",
        ts.len(),
        cfg.oracle.steps_per_interval,
        num(deviation),
        num(cfg.oracle.tolerance),
        if pass { "pass" } else { "fail" }
    );
    write_artifact(&cfg.output.dir, "oracle_check.txt", &record)?;
    if !pass {
        return Err(CliError::OracleTolerance { deviation, tolerance: cfg.oracle.tolerance });
    }
    Ok(format!("max_deviation = {}\nresult = pass\n", num(deviation)))
}
