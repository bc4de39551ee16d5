//! Independent reference solution by classical RK4.
//!
//! On a standard interval with start `s` and argument point `ζ`,
//! `P' = a P + b, P(ζ) = 1` is integrated away from `ζ` in both directions,
//! so that `z(t) = P(t) z(ζ)` and `z(ζ) = z(s) / P(s)`. Integrating from the
//! anchor keeps `P` well conditioned when `exp∫a` is huge across the
//! interval. On lagged grids `z(ζ)` is already known and
//! `A' = a A, A(s) = 1`, `B' = a B + b, B(s) = 0` give
//! `z(t) = A(t) z(s) + B(t) z(ζ)`.
//! No quadrature is involved, so agreement with [`super::solve`] checks the
//! kernel path end to end.

use rayon::prelude::*;

use super::{lagged_history, KnotState, Side, SolveError};
use crate::expr::ScalarExpr;
use crate::problem::Problem;

/// RK4 nodes from `t0` in steps of `h` (negative for backward pieces).
#[derive(Debug, Clone)]
struct Piece {
    t0: f64,
    h: f64,
    nodes: Vec<[f64; 2]>,
}

impl Piece {
    fn integrate(a: &ScalarExpr, b: &ScalarExpr, from: f64, to: f64, steps: usize, y0: [f64; 2]) -> Self {
        let h = (to - from) / steps as f64;
        let mut nodes = Vec::with_capacity(steps + 1);
        nodes.push(y0);
        let mut y = y0;
        for i in 0..steps {
            y = rk4(a, b, from + i as f64 * h, h, y);
            nodes.push(y);
        }
        Self { t0: from, h, nodes }
    }

    fn end(&self) -> f64 {
        self.t0 + self.h * (self.nodes.len() - 1) as f64
    }

    fn last(&self) -> [f64; 2] {
        *self.nodes.last().unwrap()
    }

    /// One RK4 step from the nearest node between `t0` and `t`.
    fn at(&self, a: &ScalarExpr, b: &ScalarExpr, t: f64) -> [f64; 2] {
        let n = self.nodes.len() - 1;
        if t == self.end() {
            return self.last();
        }
        let i = (((t - self.t0) / self.h).floor().max(0.0) as usize).min(n - 1);
        let ti = self.t0 + i as f64 * self.h;
        let dt = t - ti;
        if dt == 0.0 {
            self.nodes[i]
        } else {
            rk4(a, b, ti, dt, self.nodes[i])
        }
    }
}

fn rk4(a: &ScalarExpr, b: &ScalarExpr, t: f64, h: f64, y: [f64; 2]) -> [f64; 2] {
    let f = |t: f64, y: [f64; 2]| {
        let at = a.eval(t);
        [at * y[0], at * y[1] + b.eval(t)]
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f(t + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

#[derive(Debug, Clone)]
enum Pieces {
    /// `[A, B]` forward from the start.
    Lagged(Piece),
    /// `[0, P]` backward to the start and forward to the end; either may
    /// be absent when the anchor sits on that endpoint.
    Anchored { back: Option<Piece>, fwd: Option<Piece> },
}

#[derive(Debug, Clone)]
struct OracleSegment {
    k: i64,
    start: f64,
    anchor: f64,
    end: f64,
    pieces: Pieces,
}

impl OracleSegment {
    fn build(problem: &Problem, k: i64, start: f64, anchor: f64, end: f64, lagged: bool, steps: usize) -> Self {
        let (a, b) = (&problem.a, &problem.b);
        let n = steps.max(2);
        if lagged {
            let piece = Piece::integrate(a, b, start, end, n, [1.0, 0.0]);
            return Self { k, start, anchor, end, pieces: Pieces::Lagged(piece) };
        }
        let n_back = if anchor <= start {
            0
        } else if anchor >= end {
            n
        } else {
            ((n as f64 * (anchor - start) / (end - start)).round() as usize).clamp(1, n - 1)
        };
        let back = (n_back > 0).then(|| Piece::integrate(a, b, anchor, start, n_back, [0.0, 1.0]));
        let fwd = (n_back < n).then(|| Piece::integrate(a, b, anchor, end, n - n_back, [0.0, 1.0]));
        Self { k, start, anchor, end, pieces: Pieces::Anchored { back, fwd } }
    }

    /// `[c_s, c_ζ]` with `z(t) = c_s z(s) + c_ζ z(ζ)`.
    fn coefficients(&self, problem: &Problem, t: f64) -> [f64; 2] {
        let (a, b) = (&problem.a, &problem.b);
        match &self.pieces {
            Pieces::Lagged(piece) => {
                if t == self.start {
                    [1.0, 0.0]
                } else {
                    piece.at(a, b, t)
                }
            }
            Pieces::Anchored { back, fwd } => {
                let piece = if t < self.anchor { back.as_ref() } else { fwd.as_ref() };
                match piece {
                    Some(p) if t != self.anchor => [0.0, p.at(a, b, t)[1]],
                    _ => [0.0, 1.0],
                }
            }
        }
    }
}

/// RK4 reference trajectory with the same skeleton layout as
/// [`super::Trajectory`].
#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    problem: Problem,
    skeleton: Vec<KnotState>,
    segments: Vec<OracleSegment>,
    /// `z(ζ)` per segment.
    arguments: Vec<f64>,
}

/// Integrates `problem` with `steps_per_interval` RK4 steps per interval.
pub fn oracle_integrate(problem: &Problem, steps_per_interval: usize) -> Result<OracleTrajectory, SolveError> {
    problem.validate()?;
    let grid = &problem.grid;
    let k0 = problem.first_interval()?;
    let k_last = problem.last_knot_index()?;
    let k_end = if grid.knot(k_last)? == problem.horizon { k_last } else { k_last + 1 };
    let k_end = k_end.max(k0 + 1);
    let lag = grid.is_lagged().then(|| grid.lag() as usize);
    let history = match lag {
        Some(m) => lagged_history(problem, m)?.to_vec(),
        None => Vec::new(),
    };

    let bounds = (k0..k_end)
        .map(|k| {
            let start = if k == k0 { problem.tau } else { grid.knot(k)? };
            let end = grid.knot(k + 1)?;
            let anchor = match lag {
                Some(_) => end,
                None => grid.zeta(k)?.max(start),
            };
            Ok((k, start, anchor, end))
        })
        .collect::<Result<Vec<_>, SolveError>>()?;
    let segments: Vec<OracleSegment> = bounds
        .into_par_iter()
        .map(|(k, start, anchor, end)| {
            OracleSegment::build(problem, k, start, anchor, end, lag.is_some(), steps_per_interval)
        })
        .collect();

    let on_knot = grid.knot(k0)? == problem.tau;
    let mut skeleton = vec![KnotState::initial(k0, problem.tau, problem.z0, on_knot)];
    let mut arguments = Vec::with_capacity(segments.len());
    let mut values = history;
    values.push(problem.z0);
    for (i, seg) in segments.iter().enumerate() {
        let z_start = skeleton.last().unwrap().z_right;
        let argument = if lag.is_some() {
            values[i]
        } else {
            let p_start = seg.coefficients(problem, seg.start)[1];
            if p_start.abs() < 1e-12 {
                return Err(SolveError::OracleSingular { k: seg.k, value: p_start });
            }
            z_start / p_start
        };
        arguments.push(argument);
        if seg.k < k_last {
            let [a_end, b_end] = seg.coefficients(problem, seg.end);
            let z_left = a_end * z_start + b_end * argument;
            let next = KnotState::from_value(seg.k + 1, seg.end, z_left, problem.impulses.factor(seg.k + 1)?);
            values.push(next.z_right);
            skeleton.push(next);
        }
    }
    Ok(OracleTrajectory { problem: problem.clone(), skeleton, segments, arguments })
}

impl OracleTrajectory {
    pub fn skeleton(&self) -> &[KnotState] {
        &self.skeleton
    }

    pub fn eval(&self, t: f64, side: Side) -> Result<f64, SolveError> {
        let (lo, hi) = (self.problem.tau, self.problem.horizon);
        if !(lo..=hi).contains(&t) {
            return Err(SolveError::OutOfRange { t, lo, hi });
        }
        let last = self.skeleton.len() - 1;
        let i = if t == self.skeleton[last].t {
            last
        } else {
            (self.problem.grid.interval_index(t)? - self.skeleton[0].k) as usize
        };
        let state = &self.skeleton[i];
        if t == state.t {
            return Ok(match side {
                Side::Left => state.z_left,
                Side::Right => state.z_right,
            });
        }
        let [a, b] = self.segments[i].coefficients(&self.problem, t);
        Ok(a * state.z_right + b * self.arguments[i])
    }

    pub fn eval_dense(&self, t: f64) -> Result<f64, SolveError> {
        self.eval(t, Side::Right)
    }
}
