//! Oscillation analysis: windowed classifiers over solved trajectories, the
//! sufficient criteria on the kernel integrals `I_k^±`, and the
//! Gronwall-type envelope used to sanity-check solutions.
//!
//! Asymptotic statements (`limsup`, "eventually") are finitized over a window
//! of knots `[k(τ) + burn_in, k(τ) + burn_in + width]`.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ScalarExpr;
use crate::grid::{ArgumentGrid, GridError};
use crate::kernel::{criterion_integrals, IntervalKernel, KernelError};
use crate::problem::{Problem, ProblemError};
use crate::quad::{integrate, QuadConfig, QuadError};
use crate::solver::{KnotState, SolveError, Trajectory};

pub const DEFAULT_BURN_IN: usize = 8;
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_STRICTNESS_TOL: f64 = 1e-9;
/// Fewest knots a window may hold.
pub const MIN_WINDOW_KNOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OscillationError {
    #[error("window holds {knots} knots, need at least {MIN_WINDOW_KNOTS}")]
    WindowTooShort { knots: usize },
    #[error("window ends at knot {end} but the trajectory stops at knot {last}")]
    WindowOutOfRange { end: i64, last: i64 },
    #[error("{0}")]
    NotApplicable(String),
    #[error("Gronwall bound unavailable: sup of advanced integrals is {theta} >= 1")]
    GronwallUnavailable { theta: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub burn_in: usize,
    pub width: usize,
}

impl Default for Window {
    fn default() -> Self {
        Self { burn_in: DEFAULT_BURN_IN, width: DEFAULT_WIDTH }
    }
}

impl Window {
    pub fn new(burn_in: usize, width: usize) -> Self {
        Self { burn_in, width }
    }

    /// First and last knot index, counted from `k0 = k(τ)`.
    pub fn knots(&self, k0: i64) -> (i64, i64) {
        let start = k0 + self.burn_in as i64;
        (start, start + self.width as i64)
    }

    /// First index of the pairs `(n, n + 1)` that make up the last quarter.
    fn last_quarter(&self, k0: i64) -> i64 {
        let (_, end) = self.knots(k0);
        end - (self.width as i64 + 3) / 4
    }

    fn check(&self) -> Result<(), OscillationError> {
        if self.width + 1 < MIN_WINDOW_KNOTS {
            return Err(OscillationError::WindowTooShort { knots: self.width + 1 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Oscillatory,
    Nonoscillatory,
    Undetermined,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Oscillatory => "oscillatory",
            Status::Nonoscillatory => "nonoscillatory",
            Status::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Indices `n` with `z(t_n) z(t_{n+1}) ≤ 0`, recurring into the last quarter.
    SignChanges(Vec<i64>),
    /// Sign changes that stop before the last quarter.
    Transient(Vec<i64>),
    SignDefinite { sign: i8 },
    /// The state is zero throughout the window.
    Trivial,
    /// Intervals on which the solution vanishes although the knot values keep one sign.
    InteriorZeros(Vec<i64>),
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[i64]| v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ");
        match self {
            Evidence::SignChanges(v) => write!(f, "sign changes at n = {}", list(v)),
            Evidence::Transient(v) => write!(f, "sign changes stop early, at n = {}", list(v)),
            Evidence::SignDefinite { sign } => {
                write!(f, "sign-definite window ({})", if *sign > 0 { "positive" } else { "negative" })
            }
            Evidence::Trivial => write!(f, "zero solution"),
            Evidence::InteriorZeros(v) => write!(f, "interior zeros in intervals {}", list(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationVerdict {
    pub status: Status,
    pub evidence: Evidence,
    /// First and last knot index of the window.
    pub window: (i64, i64),
}

impl OscillationVerdict {
    pub fn to_record(&self) -> String {
        format!(
            "status = {}\nevidence = {}\nwindow = {} {}\n",
            self.status.as_str(),
            self.evidence,
            self.window.0,
            self.window.1
        )
    }
}

fn window_states(traj: &Trajectory, window: Window) -> Result<(&[KnotState], i64, i64), OscillationError> {
    window.check()?;
    let k0 = traj.first_interval();
    let (start, end) = window.knots(k0);
    let last = traj.skeleton().last().unwrap().k;
    if end > last {
        return Err(OscillationError::WindowOutOfRange { end, last });
    }
    let lo = (start - k0) as usize;
    Ok((&traj.skeleton()[lo..=(end - k0) as usize], start, end))
}

/// Indices `n` (offset by `first`) with `s_n s_{n+1} ≤ 0`.
fn sign_changes(signs: &[i8], first: i64) -> Vec<i64> {
    signs
        .windows(2)
        .enumerate()
        .filter(|(_, p)| i16::from(p[0]) * i16::from(p[1]) <= 0)
        .map(|(i, _)| first + i as i64)
        .collect()
}

/// Verdict on the knot values `z(t_n)`: oscillatory when sign changes recur
/// into the last quarter of the window, nonoscillatory when the window is
/// sign-definite.
pub fn classify_discrete(traj: &Trajectory, window: Window) -> Result<OscillationVerdict, OscillationError> {
    let (states, start, end) = window_states(traj, window)?;
    let signs: Vec<i8> = states.iter().map(|s| s.sign).collect();
    let (status, evidence) = if signs.iter().all(|&s| s == 0) {
        (Status::Undetermined, Evidence::Trivial)
    } else {
        let changes = sign_changes(&signs, start);
        let quarter = window.last_quarter(traj.first_interval());
        if changes.is_empty() {
            (Status::Nonoscillatory, Evidence::SignDefinite { sign: signs[0] })
        } else if changes.iter().any(|&n| n >= quarter) {
            (Status::Oscillatory, Evidence::SignChanges(changes))
        } else {
            (Status::Undetermined, Evidence::Transient(changes))
        }
    };
    Ok(OscillationVerdict { status, evidence, window: (start, end) })
}

/// `w_n = (1 + c_n) j(t_{n+1}, ζ_n) / j(t_n, ζ_n)` for `n` in `k_range`.
pub fn wn_sequence(problem: &Problem, k_range: std::ops::Range<i64>) -> Result<Vec<f64>, OscillationError> {
    let kernels: Vec<Result<IntervalKernel, KernelError>> =
        k_range.clone().into_par_iter().map(|n| IntervalKernel::compute(problem, n)).collect();
    k_range
        .zip(kernels)
        .map(|(n, ker)| {
            let ker = ker?;
            let ratio = ker.w_step()? / ker.phi_step;
            Ok(problem.impulses.factor(n)? * ratio)
        })
        .collect()
}

/// Whether the sequence keeps changing sign: a change `x_n x_{n+1} ≤ 0`
/// falls in its last quarter.
pub fn has_recurring_sign_changes(seq: &[f64]) -> bool {
    if seq.len() < 2 {
        return false;
    }
    let signs: Vec<i8> = seq.iter().map(|&x| if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 }).collect();
    let quarter = (seq.len() - 1) as i64 - (seq.len() as i64 + 2) / 4;
    sign_changes(&signs, 0).iter().any(|&n| n >= quarter)
}

/// Refines a nonoscillatory discrete verdict: the solution stays
/// nonoscillatory iff `j(t, ζ_k)` keeps a strict sign across each interval.
pub fn classify_continuous(traj: &Trajectory, window: Window) -> Result<OscillationVerdict, OscillationError> {
    let discrete = classify_discrete(traj, window)?;
    if discrete.status != Status::Nonoscillatory {
        return Err(OscillationError::NotApplicable(format!(
            "continuous refinement needs a nonoscillatory discrete solution, got {}",
            discrete.status.as_str()
        )));
    }
    let (start, end) = discrete.window;
    let per_interval: Vec<Result<(i64, bool), SolveError>> = (start..end)
        .into_par_iter()
        .map(|k| Ok((k, !traj.zeros_in_interval(k)?.is_empty())))
        .collect();
    let mut with_zeros = Vec::new();
    for r in per_interval {
        let (k, vanishes) = r?;
        if vanishes {
            with_zeros.push(k);
        }
    }
    let (status, evidence) = if with_zeros.is_empty() {
        (Status::Nonoscillatory, discrete.evidence)
    } else {
        (Status::Oscillatory, Evidence::InteriorZeros(with_zeros))
    };
    Ok(OscillationVerdict { status, evidence, window: (start, end) })
}

/// Eventual sign of `1 + c_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    PositiveImpulse,
    NegativeImpulse,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::PositiveImpulse => "positive-impulse",
            Branch::NegativeImpulse => "negative-impulse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionKind {
    /// Sufficient conditions for oscillation.
    Oscillation,
    /// Sufficient conditions for nonoscillation.
    Nonoscillation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionVerdict {
    Oscillatory,
    Nonoscillatory,
    Inconclusive,
}

impl CriterionVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CriterionVerdict::Oscillatory => "oscillatory",
            CriterionVerdict::Nonoscillatory => "nonoscillatory",
            CriterionVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// One inequality `value (<|>) threshold` of a criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: &'static str,
    pub value: f64,
    pub threshold: f64,
    /// Signed distance past the threshold in the direction the condition asks for.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub kind: CriterionKind,
    pub branch: Option<Branch>,
    /// Interval indices `[first, last)` the extrema run over.
    pub window: (i64, i64),
    pub sup_i_plus: f64,
    pub inf_i_plus: f64,
    pub sup_i_minus: f64,
    pub inf_i_minus: f64,
    pub conditions: Vec<Condition>,
    pub verdict: CriterionVerdict,
    /// Oscillation: the largest condition margin. Nonoscillation: the smallest.
    pub margin: f64,
    pub tol: f64,
    pub reason: String,
}

impl CriterionReport {
    /// `key = value` lines with every extremum, threshold and the verdict.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            CriterionKind::Oscillation => "oscillation",
            CriterionKind::Nonoscillation => "nonoscillation",
        };
        let _ = writeln!(out, "criterion = {kind}");
        let _ = writeln!(out, "branch = {}", self.branch.map_or("mixed", Branch::as_str));
        let _ = writeln!(out, "window = {} {}", self.window.0, self.window.1);
        let _ = writeln!(out, "sup_i_plus = {:.16e}", self.sup_i_plus);
        let _ = writeln!(out, "inf_i_plus = {:.16e}", self.inf_i_plus);
        let _ = writeln!(out, "sup_i_minus = {:.16e}", self.sup_i_minus);
        let _ = writeln!(out, "inf_i_minus = {:.16e}", self.inf_i_minus);
        for c in &self.conditions {
            let _ = writeln!(out, "condition = {} (threshold {:e}, margin {:.6e})", c.label, c.threshold, c.margin);
        }
        let _ = writeln!(out, "tol = {:e}", self.tol);
        let _ = writeln!(out, "margin = {:.16e}", self.margin);
        let _ = writeln!(out, "verdict = {}", self.verdict.as_str());
        let _ = writeln!(out, "reason = {}", self.reason);
        out
    }
}

struct Extrema {
    window: (i64, i64),
    sup_plus: f64,
    inf_plus: f64,
    sup_minus: f64,
    inf_minus: f64,
    branch: Option<Branch>,
}

fn extrema(problem: &Problem, window: Window) -> Result<Extrema, OscillationError> {
    window.check()?;
    let (start, end) = window.knots(problem.first_interval()?);
    let pairs: Vec<Result<(f64, f64), KernelError>> =
        (start..end).into_par_iter().map(|k| criterion_integrals(problem, k)).collect();
    let mut ex = Extrema {
        window: (start, end),
        sup_plus: f64::NEG_INFINITY,
        inf_plus: f64::INFINITY,
        sup_minus: f64::NEG_INFINITY,
        inf_minus: f64::INFINITY,
        branch: None,
    };
    for p in pairs {
        let (ip, im) = p?;
        ex.sup_plus = ex.sup_plus.max(ip);
        ex.inf_plus = ex.inf_plus.min(ip);
        ex.sup_minus = ex.sup_minus.max(im);
        ex.inf_minus = ex.inf_minus.min(im);
    }
    let mut positive = 0;
    for k in start..=end {
        if problem.impulses.factor(k)? > 0.0 {
            positive += 1;
        }
    }
    let total = end - start + 1;
    ex.branch = match positive {
        p if p == total => Some(Branch::PositiveImpulse),
        0 => Some(Branch::NegativeImpulse),
        _ => None,
    };
    Ok(ex)
}

/// The oscillation conditions of the selected branch, as `(label, value,
/// threshold, margin)` where a positive margin means the inequality holds.
fn oscillation_conditions(ex: &Extrema, branch: Branch) -> Vec<Condition> {
    match branch {
        Branch::PositiveImpulse => vec![
            Condition { label: "sup I+ > 1", value: ex.sup_plus, threshold: 1.0, margin: ex.sup_plus - 1.0 },
            Condition { label: "inf I- < -1", value: ex.inf_minus, threshold: -1.0, margin: -1.0 - ex.inf_minus },
        ],
        Branch::NegativeImpulse => vec![
            Condition { label: "inf I+ < 1", value: ex.inf_plus, threshold: 1.0, margin: 1.0 - ex.inf_plus },
            Condition { label: "sup I- > -1", value: ex.sup_minus, threshold: -1.0, margin: ex.sup_minus + 1.0 },
        ],
    }
}

fn nonoscillation_conditions(ex: &Extrema, branch: Branch) -> Vec<Condition> {
    match branch {
        Branch::PositiveImpulse => vec![
            Condition { label: "sup I+ <= 1", value: ex.sup_plus, threshold: 1.0, margin: 1.0 - ex.sup_plus },
            Condition { label: "inf I- >= -1", value: ex.inf_minus, threshold: -1.0, margin: ex.inf_minus + 1.0 },
        ],
        Branch::NegativeImpulse => vec![
            Condition { label: "inf I+ >= 1", value: ex.inf_plus, threshold: 1.0, margin: ex.inf_plus - 1.0 },
            Condition { label: "sup I- <= -1", value: ex.sup_minus, threshold: -1.0, margin: -1.0 - ex.sup_minus },
        ],
    }
}

fn report(problem: &Problem, window: Window, tol: f64, kind: CriterionKind) -> Result<CriterionReport, OscillationError> {
    let ex = extrema(problem, window)?;
    let mut rep = CriterionReport {
        kind,
        branch: ex.branch,
        window: ex.window,
        sup_i_plus: ex.sup_plus,
        inf_i_plus: ex.inf_plus,
        sup_i_minus: ex.sup_minus,
        inf_i_minus: ex.inf_minus,
        conditions: Vec::new(),
        verdict: CriterionVerdict::Inconclusive,
        margin: f64::NAN,
        tol,
        reason: String::new(),
    };
    let Some(branch) = ex.branch else {
        rep.reason = "mixed impulse signs: 1 + c_k changes sign inside the window".into();
        return Ok(rep);
    };
    match kind {
        CriterionKind::Oscillation => {
            rep.conditions = oscillation_conditions(&ex, branch);
            let best = rep.conditions.iter().max_by(|a, b| a.margin.total_cmp(&b.margin)).unwrap();
            rep.margin = best.margin;
            if best.margin > tol {
                rep.verdict = CriterionVerdict::Oscillatory;
                rep.reason = format!("{} holds", best.label);
            }
        }
        CriterionKind::Nonoscillation => {
            rep.conditions = nonoscillation_conditions(&ex, branch);
            let worst = rep.conditions.iter().min_by(|a, b| a.margin.total_cmp(&b.margin)).unwrap();
            rep.margin = worst.margin;
            if worst.margin > tol {
                rep.verdict = CriterionVerdict::Nonoscillatory;
                rep.reason = "both conditions hold".into();
            }
        }
    }
    if rep.verdict == CriterionVerdict::Inconclusive {
        rep.reason = if rep.margin.abs() <= tol {
            "inconclusive (boundary)".into()
        } else {
            "no condition holds".into()
        };
    }
    Ok(rep)
}

/// Sufficient oscillation conditions on the windowed extrema of `I_k^±`.
/// Positive impulses (`1 + c_k > 0`): `sup I⁺ > 1` or `inf I⁻ < -1`.
/// Negative impulses: `inf I⁺ < 1` or `sup I⁻ > -1`. A condition fires only
/// when it clears its threshold by more than `tol`.
pub fn aw_criterion(problem: &Problem, window: Window, tol: f64) -> Result<CriterionReport, OscillationError> {
    report(problem, window, tol, CriterionKind::Oscillation)
}

/// Sufficient nonoscillation conditions, the complements of
/// [`aw_criterion`]: positive impulses need `sup I⁺ ≤ 1` and `inf I⁻ ≥ -1`,
/// negative impulses `inf I⁺ ≥ 1` and `sup I⁻ ≤ -1`, each by more than `tol`.
pub fn nonosc_criterion(problem: &Problem, window: Window, tol: f64) -> Result<CriterionReport, OscillationError> {
    report(problem, window, tol, CriterionKind::Nonoscillation)
}

/// Upper envelope
/// `∏_{τ < t_k ≤ t} (1 + |c_k|) exp(∫_τ^t (|a| + |b| / (1 - ϑ̂))) |z₀|`
/// for `|z(t)|`, where `ϑ̂` is the sup over the solved intervals of
/// `∫_{t_k}^{ζ_k} (|a| + |b|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GronwallEnvelope {
    pub theta_hat: f64,
    tau: f64,
    horizon: f64,
    k0: i64,
    /// Segment start times, plus the horizon when it is a knot.
    starts: Vec<f64>,
    /// `ln` of the bound at each segment start, after the jump there.
    ln_at_start: Vec<f64>,
    a: ScalarExpr,
    b: ScalarExpr,
    quad: QuadConfig,
    grid: ArgumentGrid,
}

impl GronwallEnvelope {
    pub fn new(problem: &Problem) -> Result<Self, OscillationError> {
        problem.validate()?;
        if problem.grid.is_lagged() {
            return Err(OscillationError::NotApplicable("the Gronwall bound needs anchors inside their intervals".into()));
        }
        let grid = &problem.grid;
        let quad = problem.quad;
        let k0 = problem.first_interval()?;
        let k_last = problem.last_knot_index()?;
        let k_end = if grid.knot(k_last)? == problem.horizon { k_last } else { k_last + 1 }.max(k0 + 1);
        let abs_sum = |lo: f64, hi: f64, weight: f64| -> Result<f64, QuadError> {
            Ok(integrate(|u| problem.a.eval(u).abs() + weight * problem.b.eval(u).abs(), lo, hi, &quad)?.value)
        };

        let mut starts = Vec::new();
        let mut theta_hat = 0.0f64;
        for k in k0..k_end {
            let start = if k == k0 { problem.tau } else { grid.knot(k)? };
            let anchor = grid.zeta(k)?.max(start);
            theta_hat = theta_hat.max(abs_sum(start, anchor, 1.0)?);
            starts.push(start);
        }
        // The jump at a horizon knot belongs to the right-continuous value there.
        if grid.knot(k_last)? == problem.horizon {
            starts.push(problem.horizon);
        }
        if theta_hat >= 1.0 {
            return Err(OscillationError::GronwallUnavailable { theta: theta_hat });
        }
        let weight = 1.0 / (1.0 - theta_hat);
        let mut ln_at_start = Vec::with_capacity(starts.len());
        let mut ln = problem.z0.abs().ln();
        for (i, &start) in starts.iter().enumerate() {
            if i > 0 {
                ln += abs_sum(starts[i - 1], start, weight)?;
                ln += problem.impulses.jump(k0 + i as i64)?.abs().ln_1p();
            }
            ln_at_start.push(ln);
        }
        Ok(Self {
            theta_hat,
            tau: problem.tau,
            horizon: problem.horizon,
            k0,
            starts,
            ln_at_start,
            a: problem.a.clone(),
            b: problem.b.clone(),
            quad,
            grid: problem.grid.clone(),
        })
    }

    /// Bound on `|z(t)|` for `τ ≤ t ≤ horizon`, right-continuous at knots.
    pub fn bound(&self, t: f64) -> Result<f64, OscillationError> {
        if !(self.tau..=self.horizon).contains(&t) {
            return Err(SolveError::OutOfRange { t, lo: self.tau, hi: self.horizon }.into());
        }
        let i = match self.starts.iter().position(|&s| s == t) {
            Some(i) => i,
            None => {
                let k = self.grid.interval_index(t)?;
                ((k - self.k0) as usize).min(self.starts.len() - 1)
            }
        };
        let weight = 1.0 / (1.0 - self.theta_hat);
        let tail = integrate(|u| self.a.eval(u).abs() + weight * self.b.eval(u).abs(), self.starts[i], t, &self.quad)?;
        Ok((self.ln_at_start[i] + tail.value).exp())
    }
}

/// Bound on `|z(t)|` for the solution of `problem`.
pub fn gronwall_bound(problem: &Problem, t: f64) -> Result<f64, OscillationError> {
    GronwallEnvelope::new(problem)?.bound(t)
}

/// Largest `|z(t)| / bound(t)` over `samples` evenly spaced points of the
/// solved range.
pub fn gronwall_ratio(traj: &Trajectory, samples: usize) -> Result<f64, OscillationError> {
    let env = GronwallEnvelope::new(traj.problem())?;
    let p = traj.problem();
    let n = samples.max(2);
    let ratios: Vec<Result<f64, OscillationError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = p.tau + (p.horizon - p.tau) * i as f64 / (n - 1) as f64;
            let z = traj.eval_dense(t)?.abs();
            let b = env.bound(t)?;
            Ok(if z == 0.0 { 0.0 } else { z / b })
        })
        .collect();
    ratios.into_iter().try_fold(0.0f64, |m, r| Ok(m.max(r?)))
}
