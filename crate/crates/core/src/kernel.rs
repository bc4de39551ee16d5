//! Per-interval building blocks of the fundamental solution.
//!
//! With `φ(t, s) = exp(∫_s^t a)` and anchor `ζ = ζ_k`, the kernel
//!
//! ```text
//! j(t, ζ) = 1 + ∫_ζ^t exp(∫_s^ζ a(u) du) b(s) ds
//! ```
//!
//! carries the solution across `I_k`: `z(t) = φ(t, s) j(t, ζ) / j(s, ζ) · z(s)`
//! for `t, s ∈ I_k`. The advanced and delayed parts of the same integral,
//! `I_k⁺ = ∫_{t_k}^{ζ_k}` and `I_k⁻ = ∫_{ζ_k}^{t_{k+1}}`, drive the
//! oscillation criteria, and `j(t_k) = 1 - I_k⁺`, `j(t_{k+1}) = 1 + I_k⁻`.

use std::ops::Range;

use thiserror::Error;

use crate::expr::ScalarExpr;
use crate::grid::{ArgumentGrid, GridError};
use crate::problem::{Problem, ProblemError};
use crate::quad::{integrate, try_integrate, QuadConfig, QuadError, Quadrature};

/// `|j| < SINGULAR_REL * (1 + |I|)` is treated as a vanishing kernel.
pub const SINGULAR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel j vanishes on interval {k} at t = {t} (j = {j:e})")]
    Singular { k: i64, t: f64, j: f64 },
    #[error("t = {t} is outside interval {k} = [{lo}, {hi}]")]
    OutsideInterval { k: i64, t: f64, lo: f64, hi: f64 },
    #[error("operation requires a grid with anchors inside their intervals")]
    LaggedGrid,
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// `∫_lo^hi a(u) du`.
fn a_integral(a: &ScalarExpr, lo: f64, hi: f64, quad: &QuadConfig) -> Result<f64, QuadError> {
    if let Some(c) = a.as_constant() {
        return Ok(c * (hi - lo));
    }
    Ok(integrate(|u| a.eval(u), lo, hi, quad)?.value)
}

/// `φ(t, s) = exp(∫_s^t a)`, the flow of `x' = a(t) x` from `s` to `t`.
pub fn phi(a: &ScalarExpr, s: f64, t: f64, quad: &QuadConfig) -> Result<f64, QuadError> {
    Ok(a_integral(a, s, t, quad)?.exp())
}

/// `∫_lo^hi exp(∫_s^anchor a(u) du) b(s) ds`, the weighted integral behind
/// `j`, `I_k^±` and the lagged forcing term.
pub fn weighted_integral(problem: &Problem, anchor: f64, lo: f64, hi: f64) -> Result<Quadrature, KernelError> {
    if lo == hi || problem.b.as_constant() == Some(0.0) {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (a, b, quad) = (&problem.a, &problem.b, &problem.quad);
    let q = try_integrate(
        |s| -> Result<f64, KernelError> {
            let inner = a_integral(a, s, anchor, quad)?;
            Ok(inner.exp() * b.eval(s))
        },
        lo,
        hi,
        quad,
    )?;
    Ok(q)
}

fn ensure_standard(grid: &ArgumentGrid) -> Result<(), KernelError> {
    if grid.is_lagged() {
        Err(KernelError::LaggedGrid)
    } else {
        Ok(())
    }
}

fn ensure_inside(grid: &ArgumentGrid, k: i64, t: f64) -> Result<(), KernelError> {
    let (lo, hi) = (grid.knot(k)?, grid.knot(k + 1)?);
    if !(lo..=hi).contains(&t) {
        return Err(KernelError::OutsideInterval { k, t, lo, hi });
    }
    Ok(())
}

fn checked_inverse(k: i64, t: f64, j: f64, integral: f64) -> Result<f64, KernelError> {
    if j.abs() < SINGULAR_REL * (1.0 + integral.abs()) {
        return Err(KernelError::Singular { k, t, j });
    }
    Ok(1.0 / j)
}

/// `j(t, ζ_k)` for `t ∈ [t_k, t_{k+1}]`.
pub fn j_value(problem: &Problem, k: i64, t: f64) -> Result<f64, KernelError> {
    ensure_standard(&problem.grid)?;
    ensure_inside(&problem.grid, k, t)?;
    let zeta = problem.grid.zeta(k)?;
    Ok(1.0 + weighted_integral(problem, zeta, zeta, t)?.value)
}

/// `w(t, s) = φ(t, s) j(t, ζ_k) / j(s, ζ_k)` for `t, s ∈ I_k`.
pub fn w_intra(problem: &Problem, k: i64, t: f64, s: f64) -> Result<f64, KernelError> {
    ensure_standard(&problem.grid)?;
    ensure_inside(&problem.grid, k, t)?;
    ensure_inside(&problem.grid, k, s)?;
    if t == s {
        return Ok(1.0);
    }
    let zeta = problem.grid.zeta(k)?;
    let is = weighted_integral(problem, zeta, zeta, s)?.value;
    let inv = checked_inverse(k, s, 1.0 + is, is)?;
    let jt = 1.0 + weighted_integral(problem, zeta, zeta, t)?.value;
    Ok(phi(&problem.a, s, t, &problem.quad)? * jt * inv)
}

/// `(I_k⁺, I_k⁻)`; a degenerate part contributes exactly zero.
pub fn criterion_integrals(problem: &Problem, k: i64) -> Result<(f64, f64), KernelError> {
    ensure_standard(&problem.grid)?;
    let (adv, del) = problem.grid.split(k)?;
    let zeta = adv.end;
    let i_plus = weighted_integral(problem, zeta, adv.start, zeta)?.value;
    let i_minus = weighted_integral(problem, zeta, zeta, del.end)?.value;
    Ok((i_plus, i_minus))
}

/// Cached quantities for one interval, or for the partial first interval
/// when the solve starts at `τ` inside `I_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalKernel {
    pub k: i64,
    /// `t_k`, or `τ` on the first interval.
    pub start: f64,
    /// Constant argument value used on `[start, end)`.
    pub anchor: f64,
    /// `t_{k+1}`.
    pub end: f64,
    /// `∫_start^anchor exp(∫_s^anchor a) b ds`.
    pub i_plus: f64,
    /// `∫_anchor^end exp(∫_s^anchor a) b ds`.
    pub i_minus: f64,
    /// `j(start, anchor) = 1 - i_plus`.
    pub j_at_tk: f64,
    /// `j(end, anchor) = 1 + i_minus`.
    pub j_at_tk1: f64,
    /// `φ(end, start)`.
    pub phi_step: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub quadrature_error_estimate: f64,
}

impl IntervalKernel {
    /// Kernel of the full interval `I_k`.
    pub fn compute(problem: &Problem, k: i64) -> Result<Self, KernelError> {
        ensure_standard(&problem.grid)?;
        let start = problem.grid.knot(k)?;
        Self::build(problem, k, start, problem.grid.zeta(k)?)
    }

    /// Kernel of `[start, t_{k+1})` with `start ∈ I_k`. If `ζ_k` lies before
    /// `start`, the argument on this piece is `start` itself.
    pub fn segment(problem: &Problem, k: i64, start: f64) -> Result<Self, KernelError> {
        ensure_standard(&problem.grid)?;
        ensure_inside(&problem.grid, k, start)?;
        let zeta = problem.grid.zeta(k)?;
        let anchor = if zeta < start { start } else { zeta };
        Self::build(problem, k, start, anchor)
    }

    fn build(problem: &Problem, k: i64, start: f64, anchor: f64) -> Result<Self, KernelError> {
        let end = problem.grid.knot(k + 1)?;
        let plus = weighted_integral(problem, anchor, start, anchor)?;
        let minus = weighted_integral(problem, anchor, anchor, end)?;
        let phi_step = phi(&problem.a, start, end, &problem.quad)?;
        let (a, b, quad) = (&problem.a, &problem.b, &problem.quad);
        let abs_int = |e: &ScalarExpr, lo: f64, hi: f64| -> Result<f64, QuadError> {
            if lo == hi {
                return Ok(0.0);
            }
            if let Some(c) = e.as_constant() {
                return Ok(c.abs() * (hi - lo));
            }
            Ok(integrate(|u| e.eval(u).abs(), lo, hi, quad)?.value)
        };
        let rho_plus = abs_int(a, start, anchor)?.exp();
        let rho_minus = abs_int(a, anchor, end)?.exp();
        let nu_plus = rho_plus * abs_int(b, start, anchor)?;
        let nu_minus = rho_minus * abs_int(b, anchor, end)?;
        Ok(Self {
            k,
            start,
            anchor,
            end,
            i_plus: plus.value,
            i_minus: minus.value,
            j_at_tk: 1.0 - plus.value,
            j_at_tk1: 1.0 + minus.value,
            phi_step,
            rho_plus,
            rho_minus,
            nu_plus,
            nu_minus,
            quadrature_error_estimate: plus.error + minus.error,
        })
    }

    /// `w(t_{k+1}, t_k) = φ(t_{k+1}, t_k) j(t_{k+1}) / j(t_k)`.
    pub fn w_step(&self) -> Result<f64, KernelError> {
        let inv = checked_inverse(self.k, self.start, self.j_at_tk, self.i_plus)?;
        Ok(self.phi_step * self.j_at_tk1 * inv)
    }

    /// `j(t, anchor)` for `t` in the piece.
    pub fn j_at(&self, problem: &Problem, t: f64) -> Result<f64, KernelError> {
        if t == self.start {
            return Ok(self.j_at_tk);
        }
        if t == self.end {
            return Ok(self.j_at_tk1);
        }
        Ok(1.0 + weighted_integral(problem, self.anchor, self.anchor, t)?.value)
    }

    /// `w(t, start)`, the factor carrying `z(start)` to `z(t)`.
    pub fn w_from_start(&self, problem: &Problem, t: f64) -> Result<f64, KernelError> {
        if t == self.start {
            return Ok(1.0);
        }
        let inv = checked_inverse(self.k, self.start, self.j_at_tk, self.i_plus)?;
        let phi_t = if t == self.end { self.phi_step } else { phi(&problem.a, self.start, t, &problem.quad)? };
        Ok(phi_t * self.j_at(problem, t)? * inv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct H3Entry {
    pub k: i64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
}

/// Integrability check over a range of intervals, with the resulting bounds
/// on the kernel and its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct H3Report {
    pub entries: Vec<H3Entry>,
    pub sup_rho: f64,
    pub sup_nu_plus: f64,
    pub sup_nu_minus: f64,
    pub pass: bool,
    /// Bound on `|1/j(t_k, ζ_k)|`, when `sup ν⁺ < 1`.
    pub inverse_bound_plus: Option<f64>,
    /// Bound on `|1/j(t_{k+1}, ζ_k)|`, when `sup ν⁻ < 1`.
    pub inverse_bound_minus: Option<f64>,
    /// Bound on `|j(t_k, ζ_k)|`.
    pub j_bound_plus: f64,
    /// Bound on `|j(t_{k+1}, ζ_k)|`.
    pub j_bound_minus: f64,
}

pub fn h3_check(problem: &Problem, k_range: Range<i64>) -> Result<H3Report, KernelError> {
    ensure_standard(&problem.grid)?;
    let mut entries = Vec::new();
    let (mut sup_rho, mut sup_p, mut sup_m) = (0.0f64, 0.0f64, 0.0f64);
    for k in k_range {
        let ker = IntervalKernel::compute(problem, k)?;
        sup_rho = sup_rho.max(ker.rho_plus * ker.rho_minus);
        sup_p = sup_p.max(ker.nu_plus);
        sup_m = sup_m.max(ker.nu_minus);
        entries.push(H3Entry {
            k,
            rho_plus: ker.rho_plus,
            rho_minus: ker.rho_minus,
            nu_plus: ker.nu_plus,
            nu_minus: ker.nu_minus,
        });
    }
    let inv = |nu: f64| (nu < 1.0).then(|| 1.0 / (1.0 - nu));
    Ok(H3Report {
        entries,
        sup_rho,
        sup_nu_plus: sup_p,
        sup_nu_minus: sup_m,
        pass: sup_p < 1.0 && sup_m < 1.0,
        inverse_bound_plus: inv(sup_p),
        inverse_bound_minus: inv(sup_m),
        j_bound_plus: 1.0 + sup_p,
        j_bound_minus: 1.0 + sup_m,
    })
}

/// Quantities of one interval of a lagged grid, where the argument value
/// `z(t_{k-m})` is already known and enters as a forcing term.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedKernel {
    pub k: i64,
    pub start: f64,
    pub end: f64,
    /// `φ(t_{k+1}, t_k)`.
    pub phi_step: f64,
    /// `∫_{t_k}^{t_{k+1}} φ(t_{k+1}, s) b(s) ds`.
    pub forcing_step: f64,
}

impl LaggedKernel {
    pub fn compute(problem: &Problem, k: i64) -> Result<Self, KernelError> {
        let start = problem.grid.knot(k)?;
        let end = problem.grid.knot(k + 1)?;
        Ok(Self {
            k,
            start,
            end,
            phi_step: phi(&problem.a, start, end, &problem.quad)?,
            forcing_step: weighted_integral(problem, end, start, end)?.value,
        })
    }

    /// `(φ(t, t_k), ∫_{t_k}^t φ(t, s) b(s) ds)`.
    pub fn factors_at(&self, problem: &Problem, t: f64) -> Result<(f64, f64), KernelError> {
        if t == self.start {
            return Ok((1.0, 0.0));
        }
        if t == self.end {
            return Ok((self.phi_step, self.forcing_step));
        }
        Ok((phi(&problem.a, self.start, t, &problem.quad)?, weighted_integral(problem, t, self.start, t)?.value))
    }
}

/// `∫_{k-1}^{k+1} exp(-p (γ(s) - s)) ds` for `γ(t) = [t - 1]`, split at the
/// knot `k` where `γ` jumps.
pub fn gl2_lagged_integral(p: f64, k: i64, quad: &QuadConfig) -> Result<f64, KernelError> {
    let grid = ArgumentGrid::lagged(0.0, 1.0, 1)?;
    let mut total = 0.0;
    for interval in [k - 1, k] {
        let lo = grid.knot(interval)?;
        let hi = grid.knot(interval + 1)?;
        let gamma = grid.zeta(interval)?;
        total += integrate(|s| (-p * (gamma - s)).exp(), lo, hi, quad)?.value;
    }
    Ok(total)
}

/// Oscillation bound on `q₋₁` for `y' + p y + q₋₁ y([t-1]) = 0`, the
/// reciprocal of [`gl2_lagged_integral`]: `p e^{-p} / (2 (e^p - 1))`.
pub fn gl2_oscillation_bound(p: f64) -> f64 {
    p * (-p).exp() / (2.0 * p.exp_m1())
}
