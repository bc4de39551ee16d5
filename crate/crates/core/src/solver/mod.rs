//! Fundamental-solution solver: the knot recursion
//! `z(t_{k+1}) = (1 + c_{k+1}) w(t_{k+1}, t_k) z(t_k)`, dense evaluation
//! `z(t) = w(t, t_k) z(t_k)` inside intervals, and the forward march for
//! lagged arguments.

pub mod oracle;

use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridError;
use crate::kernel::{IntervalKernel, KernelError, LaggedKernel};
use crate::problem::{Problem, ProblemError};

/// Sign-scan resolution of [`Trajectory::zeros_in_interval`].
pub const ZERO_SCAN_SAMPLES: usize = 64;
/// Absolute bisection tolerance for zeros.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("t = {t} is outside the solved range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("lagged argument needs {needed} history values before tau, got {got}")]
    MissingHistory { needed: usize, got: usize },
    #[error("lagged solves must start on a knot, tau = {tau} is not one")]
    LaggedStart { tau: f64 },
    #[error("oracle argument equation is singular on interval {k} (1 - B = {value:e})")]
    OracleSingular { k: i64, value: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl SolveError {
    /// Interval index of a vanishing kernel, if that is the cause.
    pub fn singular_interval(&self) -> Option<i64> {
        match self {
            SolveError::Kernel(KernelError::Singular { k, .. }) => Some(*k),
            _ => None,
        }
    }
}

/// Which one-sided value to return at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `z(t_k⁻)`.
    Left,
    /// `z(t_k)`, after the jump.
    Right,
}

/// How the argument was chosen on the first, possibly partial, interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartConvention {
    /// `τ` is a knot; the first interval is a regular one.
    OnKnot,
    /// `ζ_{k(τ)} < τ`, so `γ(τ) := τ` is used on `[τ, t_{k(τ)+1})`.
    AnchorAtTau,
    /// `ζ_{k(τ)} ≥ τ`; the regular anchor is used from `τ`.
    AnchorAtZeta,
    /// Lagged argument; `τ` is a knot and history supplies the argument.
    Lagged,
}

impl StartConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            StartConvention::OnKnot => "on-knot",
            StartConvention::AnchorAtTau => "anchor-at-tau",
            StartConvention::AnchorAtZeta => "anchor-at-zeta",
            StartConvention::Lagged => "lagged",
        }
    }
}

/// State at `τ` and at every knot in `(τ, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotState {
    /// Interval that starts here.
    pub k: i64,
    pub t: f64,
    pub z_left: f64,
    pub z_right: f64,
    /// Sign of `z_right`, tracked through the recursion so it survives
    /// underflow of `z_right` itself.
    pub sign: i8,
    /// `ln |z_right|`, `-inf` for a zero state.
    pub ln_abs: f64,
    /// False only for a start `τ` strictly inside an interval.
    pub at_knot: bool,
}

impl KnotState {
    fn initial(k: i64, t: f64, z0: f64, at_knot: bool) -> Self {
        Self { k, t, z_left: z0, z_right: z0, sign: sign_of(z0), ln_abs: z0.abs().ln(), at_knot }
    }

    fn advance(&self, t: f64, w: f64, factor: f64) -> Self {
        let z_left = self.z_right * w;
        Self {
            k: self.k + 1,
            t,
            z_left,
            z_right: z_left * factor,
            sign: self.sign * sign_of(w) * sign_of(factor),
            ln_abs: self.ln_abs + w.abs().ln() + factor.abs().ln(),
            at_knot: true,
        }
    }

    fn from_value(k: i64, t: f64, z_left: f64, factor: f64) -> Self {
        let z_right = z_left * factor;
        Self { k, t, z_left, z_right, sign: sign_of(z_right), ln_abs: z_right.abs().ln(), at_knot: true }
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Per-interval data the dense evaluator needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Standard(IntervalKernel),
    /// `argument` is `z(t_{k-m})`.
    Lagged { kernel: LaggedKernel, argument: f64 },
}

impl Segment {
    pub fn start(&self) -> f64 {
        match self {
            Segment::Standard(ker) => ker.start,
            Segment::Lagged { kernel, .. } => kernel.start,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            Segment::Standard(ker) => ker.end,
            Segment::Lagged { kernel, .. } => kernel.end,
        }
    }

    fn value(&self, problem: &Problem, z_start: f64, t: f64) -> Result<f64, KernelError> {
        match self {
            Segment::Standard(ker) => Ok(ker.w_from_start(problem, t)? * z_start),
            Segment::Lagged { kernel, argument } => {
                let (phi, forcing) = kernel.factors_at(problem, t)?;
                Ok(phi * z_start + forcing * argument)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zero {
    pub k: i64,
    pub t: f64,
}

/// Solution of one problem. Immutable once built.
#[derive(Debug)]
pub struct Trajectory {
    problem: Problem,
    skeleton: Vec<KnotState>,
    segments: Vec<Segment>,
    convention: StartConvention,
    zeros: OnceLock<Vec<Zero>>,
}

/// `(1 + c_{k+1}) w(t_{k+1}, t_k) z_k`.
pub fn step(problem: &Problem, k: i64, z_k: f64) -> Result<f64, SolveError> {
    let ker = IntervalKernel::compute(problem, k)?;
    Ok(problem.impulses.factor(k + 1)? * ker.w_step()? * z_k)
}

/// Range of intervals `[k(τ), k_end)` covering `[τ, horizon]`, and the
/// index of the last knot not after the horizon.
fn interval_range(problem: &Problem) -> Result<(i64, i64, i64), SolveError> {
    let k0 = problem.first_interval()?;
    let k_last = problem.last_knot_index()?;
    let k_end = if problem.grid.knot(k_last)? == problem.horizon { k_last } else { k_last + 1 };
    Ok((k0, k_end.max(k0 + 1), k_last))
}

pub fn solve(problem: &Problem) -> Result<Trajectory, SolveError> {
    problem.validate()?;
    if problem.grid.is_lagged() {
        return solve_lagged(problem);
    }
    let (k0, k_end, k_last) = interval_range(problem)?;
    let convention = if problem.tau_on_knot()? {
        StartConvention::OnKnot
    } else if problem.grid.zeta(k0)? < problem.tau {
        StartConvention::AnchorAtTau
    } else {
        StartConvention::AnchorAtZeta
    };

    let kernels: Vec<Result<IntervalKernel, KernelError>> = (k0..k_end)
        .into_par_iter()
        .map(|k| {
            if k == k0 {
                IntervalKernel::segment(problem, k, problem.tau)
            } else {
                IntervalKernel::compute(problem, k)
            }
        })
        .collect();

    let mut skeleton = vec![KnotState::initial(k0, problem.tau, problem.z0, convention == StartConvention::OnKnot)];
    let mut segments = Vec::with_capacity(kernels.len());
    for ker in kernels {
        let ker = ker?;
        let w = ker.w_step()?;
        if ker.k < k_last {
            let factor = problem.impulses.factor(ker.k + 1)?;
            let next = skeleton.last().unwrap().advance(ker.end, w, factor);
            skeleton.push(next);
        }
        segments.push(Segment::Standard(ker));
    }
    Ok(Trajectory { problem: problem.clone(), skeleton, segments, convention, zeros: OnceLock::new() })
}

/// `z(t_{k(τ)-m}), ..., z(t_{k(τ)-1})`; the configured history may repeat
/// `z(τ)` as its last entry.
pub(crate) fn lagged_history(problem: &Problem, lag: usize) -> Result<&[f64], SolveError> {
    if !problem.tau_on_knot()? {
        return Err(SolveError::LaggedStart { tau: problem.tau });
    }
    match problem.history.len() {
        n if n == lag => Ok(&problem.history[..]),
        n if n == lag + 1 && problem.history[lag] == problem.z0 => Ok(&problem.history[..lag]),
        n if n == lag + 1 => Err(SolveError::Invalid(format!(
            "last history value {} differs from z0 = {}",
            problem.history[lag], problem.z0
        ))),
        got => Err(SolveError::MissingHistory { needed: lag, got }),
    }
}

/// Forward march for `γ(t) = t_{k-m}`, where the argument value is already
/// known on every interval:
/// `z(t) = φ(t, t_k) z(t_k) + (∫_{t_k}^t φ(t, s) b(s) ds) z(t_{k-m})`.
pub fn solve_lagged(problem: &Problem) -> Result<Trajectory, SolveError> {
    problem.validate()?;
    if !problem.grid.is_lagged() {
        return Err(SolveError::Invalid("solve_lagged needs a lagged grid".into()));
    }
    let lag = problem.grid.lag() as usize;
    let history = lagged_history(problem, lag)?;
    let (k0, k_end, k_last) = interval_range(problem)?;

    let kernels: Vec<Result<LaggedKernel, KernelError>> =
        (k0..k_end).into_par_iter().map(|k| LaggedKernel::compute(problem, k)).collect();

    // values[i] = z(t_{k0 - lag + i})
    let mut values: Vec<f64> = history.to_vec();
    values.push(problem.z0);
    let mut skeleton = vec![KnotState::initial(k0, problem.tau, problem.z0, true)];
    let mut segments = Vec::with_capacity(kernels.len());
    for (i, ker) in kernels.into_iter().enumerate() {
        let ker = ker?;
        let argument = values[i];
        if ker.k < k_last {
            let z_start = skeleton.last().unwrap().z_right;
            let z_left = ker.phi_step * z_start + ker.forcing_step * argument;
            let next = KnotState::from_value(ker.k + 1, ker.end, z_left, problem.impulses.factor(ker.k + 1)?);
            values.push(next.z_right);
            skeleton.push(next);
        }
        segments.push(Segment::Lagged { kernel: ker, argument });
    }
    Ok(Trajectory {
        problem: problem.clone(),
        skeleton,
        segments,
        convention: StartConvention::Lagged,
        zeros: OnceLock::new(),
    })
}

impl Trajectory {
    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// State at `τ` followed by the states at each knot up to the horizon.
    pub fn skeleton(&self) -> &[KnotState] {
        &self.skeleton
    }

    /// Segment `i` starts at `skeleton()[i]`.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn convention(&self) -> StartConvention {
        self.convention
    }

    pub fn first_interval(&self) -> i64 {
        self.skeleton[0].k
    }

    /// State whose interval index is `k`.
    pub fn knot(&self, k: i64) -> Option<&KnotState> {
        let i = usize::try_from(k - self.first_interval()).ok()?;
        self.skeleton.get(i)
    }

    fn segment_index(&self, t: f64) -> Result<usize, SolveError> {
        let (lo, hi) = (self.problem.tau, self.problem.horizon);
        if !(lo..=hi).contains(&t) {
            return Err(SolveError::OutOfRange { t, lo, hi });
        }
        let last = self.skeleton.len() - 1;
        if t == self.skeleton[last].t {
            return Ok(last);
        }
        let k = self.problem.grid.interval_index(t)?;
        Ok((k - self.first_interval()) as usize)
    }

    /// `z(t)` for `τ ≤ t ≤ horizon`; `side` selects the one-sided value at knots.
    pub fn eval(&self, t: f64, side: Side) -> Result<f64, SolveError> {
        let i = self.segment_index(t)?;
        let state = &self.skeleton[i];
        if t == state.t {
            return Ok(match side {
                Side::Left => state.z_left,
                Side::Right => state.z_right,
            });
        }
        Ok(self.segments[i].value(&self.problem, state.z_right, t)?)
    }

    /// Right-continuous `z(t)`.
    pub fn eval_dense(&self, t: f64) -> Result<f64, SolveError> {
        self.eval(t, Side::Right)
    }

    /// `samples_per_interval` evenly spaced points per segment plus every
    /// knot, as `(t, z, interval_k, knot state if t is one)`.
    pub fn sample(&self, samples_per_interval: usize) -> Result<Vec<(f64, f64, i64, Option<KnotState>)>, SolveError> {
        let n = samples_per_interval.max(1);
        let mut rows = Vec::with_capacity(self.segments.len() * n + 1);
        for (i, seg) in self.segments.iter().enumerate() {
            let state = self.skeleton[i];
            let (start, end) = (state.t, seg.end().min(self.problem.horizon));
            let knot = state.at_knot.then_some(state);
            rows.push((start, state.z_right, state.k, knot));
            for j in 1..n {
                let t = start + (end - start) * j as f64 / n as f64;
                if t >= end {
                    break;
                }
                rows.push((t, seg.value(&self.problem, state.z_right, t)?, state.k, None));
            }
        }
        let last = *self.skeleton.last().unwrap();
        if self.segments.len() < self.skeleton.len() {
            rows.push((last.t, last.z_right, last.k, Some(last)));
        } else {
            let t = self.problem.horizon;
            let i = self.segments.len() - 1;
            let z = self.segments[i].value(&self.problem, self.skeleton[i].z_right, t)?;
            rows.push((t, z, self.skeleton[i].k, None));
        }
        Ok(rows)
    }

    /// Zeros of `z` in `[t_k, t_{k+1})` (clipped to the solved range), found
    /// by a sign scan and bisection. A zero state at `t_k` makes the whole
    /// interval zero and yields an empty list.
    pub fn zeros_in_interval(&self, k: i64) -> Result<Vec<Zero>, SolveError> {
        let Some(i) = usize::try_from(k - self.first_interval()).ok().filter(|&i| i < self.segments.len()) else {
            return Ok(Vec::new());
        };
        let state = self.skeleton[i];
        if state.z_right == 0.0 {
            return Ok(Vec::new());
        }
        let seg = &self.segments[i];
        let (start, end) = (state.t, seg.end().min(self.problem.horizon));
        // Inside a standard interval, sign(z) = sign(z(t_k)) sign(j(t) / j(t_k)).
        let g = |t: f64| -> Result<f64, KernelError> {
            match seg {
                Segment::Standard(ker) => ker.j_at(&self.problem, t),
                Segment::Lagged { .. } => seg.value(&self.problem, state.z_right, t),
            }
        };
        let n = ZERO_SCAN_SAMPLES;
        let ts: Vec<f64> = (0..=n).map(|j| start + (end - start) * j as f64 / n as f64).collect();
        let gs = ts.iter().map(|&t| g(t)).collect::<Result<Vec<_>, _>>()?;
        let mut zeros = Vec::new();
        for j in 0..n {
            if gs[j] == 0.0 {
                zeros.push(Zero { k, t: ts[j] });
                continue;
            }
            if gs[j + 1] == 0.0 || gs[j].signum() == gs[j + 1].signum() {
                continue;
            }
            let (mut lo, mut hi, mut g_lo) = (ts[j], ts[j + 1], gs[j]);
            while hi - lo > ZERO_TOL {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let g_mid = g(mid)?;
                if g_mid == 0.0 {
                    (lo, hi) = (mid, mid);
                    break;
                }
                if g_mid.signum() == g_lo.signum() {
                    (lo, g_lo) = (mid, g_mid);
                } else {
                    hi = mid;
                }
            }
            zeros.push(Zero { k, t: 0.5 * (lo + hi) });
        }
        Ok(zeros)
    }

    /// All zeros over the solved range, computed on first use.
    pub fn zeros(&self) -> Result<&[Zero], SolveError> {
        if let Some(z) = self.zeros.get() {
            return Ok(z);
        }
        let k0 = self.first_interval();
        let per_interval: Vec<Result<Vec<Zero>, SolveError>> = (0..self.segments.len() as i64)
            .into_par_iter()
            .map(|i| self.zeros_in_interval(k0 + i))
            .collect();
        let mut all = Vec::new();
        for z in per_interval {
            all.extend(z?);
        }
        Ok(self.zeros.get_or_init(|| all))
    }
}
