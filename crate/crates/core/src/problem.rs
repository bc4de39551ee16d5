//! Problem instances `z' = a(t) z(t) + b(t) z(γ(t))` with jumps
//! `z(t_k) = (1 + c_k) z(t_k⁻)` at the knots.

use thiserror::Error;

use crate::expr::{ScalarExpr, Variable};
use crate::grid::{ArgumentGrid, GridError};
use crate::quad::QuadConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("no impulse value for knot {k}")]
    MissingImpulse { k: i64 },
    #[error("impulse at knot {k} annihilates the state (1 + c_k = 0)")]
    ImpulseDegenerate { k: i64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Jump rule at the knots.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ImpulseRule {
    #[default]
    None,
    /// `c_k = c`.
    Constant(f64),
    /// `z(t_k) = C z(t_k⁻)`, i.e. `c_k = C - 1`.
    Multiplier(f64),
    /// `c_k = (-1)^k c`.
    Alternating(f64),
    /// `c_k = values[k - first]`.
    Explicit { first: i64, values: Vec<f64> },
    /// `c_k` given by an expression in `k`.
    Expression(ScalarExpr),
}

impl ImpulseRule {
    /// Multiplicative jump factor `1 + c_k`.
    pub fn factor(&self, k: i64) -> Result<f64, ProblemError> {
        let f = match self {
            ImpulseRule::None => 1.0,
            ImpulseRule::Constant(c) => 1.0 + c,
            ImpulseRule::Multiplier(m) => *m,
            ImpulseRule::Alternating(c) => {
                if k.rem_euclid(2) == 0 {
                    1.0 + c
                } else {
                    1.0 - c
                }
            }
            ImpulseRule::Explicit { first, values } => {
                let idx = usize::try_from(k - first).map_err(|_| ProblemError::MissingImpulse { k })?;
                1.0 + values.get(idx).ok_or(ProblemError::MissingImpulse { k })?
            }
            ImpulseRule::Expression(e) => 1.0 + e.eval(k as f64),
        };
        if f == 0.0 {
            return Err(ProblemError::ImpulseDegenerate { k });
        }
        if !f.is_finite() {
            return Err(ProblemError::Invalid(format!("impulse factor at knot {k} is {f}")));
        }
        Ok(f)
    }

    /// Jump size `c_k`.
    pub fn jump(&self, k: i64) -> Result<f64, ProblemError> {
        match self {
            ImpulseRule::Multiplier(m) => {
                self.factor(k)?;
                Ok(m - 1.0)
            }
            _ => Ok(self.factor(k)? - 1.0),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ImpulseRule::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    /// Coefficient of `z(t)`.
    pub a: ScalarExpr,
    /// Coefficient of `z(γ(t))`.
    pub b: ScalarExpr,
    pub grid: ArgumentGrid,
    pub impulses: ImpulseRule,
    pub tau: f64,
    pub z0: f64,
    pub horizon: f64,
    /// Lagged grids only: `z(t_{k(τ)-m}), ..., z(t_{k(τ)-1})`.
    pub history: Vec<f64>,
    pub quad: QuadConfig,
}

impl Problem {
    /// Problem with no impulses, no history and default quadrature settings.
    pub fn new(a: ScalarExpr, b: ScalarExpr, grid: ArgumentGrid, tau: f64, z0: f64, horizon: f64) -> Self {
        Self {
            a,
            b,
            grid,
            impulses: ImpulseRule::None,
            tau,
            z0,
            horizon,
            history: Vec::new(),
            quad: QuadConfig::default(),
        }
    }

    pub fn with_impulses(mut self, impulses: ImpulseRule) -> Self {
        self.impulses = impulses;
        self
    }

    pub fn with_history(mut self, history: Vec<f64>) -> Self {
        self.history = history;
        self
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.grid.validate()?;
        if !self.tau.is_finite() || !self.horizon.is_finite() || self.horizon <= self.tau {
            return Err(ProblemError::Invalid(format!(
                "need finite tau < horizon, got tau={}, horizon={}",
                self.tau, self.horizon
            )));
        }
        if !self.z0.is_finite() {
            return Err(ProblemError::Invalid(format!("z0 must be finite, got {}", self.z0)));
        }
        if self.a.uses(Variable::Index) || self.b.uses(Variable::Index) {
            return Err(ProblemError::Invalid("coefficients a(t), b(t) may not use the index k".into()));
        }
        if let ImpulseRule::Expression(e) = &self.impulses {
            if e.uses(Variable::Time) {
                return Err(ProblemError::Invalid("impulse rules may not use the time t".into()));
            }
        }
        if !(self.quad.rel_tol > 0.0) {
            return Err(ProblemError::Invalid("quadrature tolerance must be positive".into()));
        }
        if self.history.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Invalid("history values must be finite".into()));
        }
        // Fails on explicit grids that do not reach tau or the horizon.
        self.first_interval()?;
        self.last_knot_index()?;
        Ok(())
    }

    /// `k(τ)`.
    pub fn first_interval(&self) -> Result<i64, ProblemError> {
        Ok(self.grid.interval_index(self.tau)?)
    }

    /// Index of the last knot `t_k ≤ horizon`.
    pub fn last_knot_index(&self) -> Result<i64, ProblemError> {
        match self.grid.interval_index(self.horizon) {
            Ok(k) => Ok(k),
            Err(e) => match &self.grid {
                ArgumentGrid::Explicit { knots, .. } if *knots.last().unwrap() == self.horizon => {
                    Ok(knots.len() as i64 - 1)
                }
                _ => Err(e.into()),
            },
        }
    }

    /// Whether τ sits exactly on a knot.
    pub fn tau_on_knot(&self) -> Result<bool, ProblemError> {
        Ok(self.grid.knot(self.first_interval()?)? == self.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_factors() {
        assert_eq!(ImpulseRule::None.factor(3).unwrap(), 1.0);
        assert_eq!(ImpulseRule::Constant(-0.5).factor(3).unwrap(), 0.5);
        assert_eq!(ImpulseRule::Multiplier(-100.0).factor(3).unwrap(), -100.0);
        assert_eq!(ImpulseRule::Multiplier(-100.0).jump(3).unwrap(), -101.0);
        assert_eq!(ImpulseRule::Alternating(0.5).factor(2).unwrap(), 1.5);
        assert_eq!(ImpulseRule::Alternating(0.5).factor(3).unwrap(), 0.5);
        assert_eq!(ImpulseRule::Alternating(0.5).factor(-1).unwrap(), 0.5);
        let e = ImpulseRule::Explicit { first: 1, values: vec![0.1, 0.2] };
        assert_eq!(e.factor(2).unwrap(), 1.2);
        assert_eq!(e.factor(3), Err(ProblemError::MissingImpulse { k: 3 }));
        assert_eq!(e.factor(0), Err(ProblemError::MissingImpulse { k: 0 }));
        let x = ImpulseRule::Expression(ScalarExpr::parse("0.5*k").unwrap());
        assert_eq!(x.factor(4).unwrap(), 3.0);
    }

    #[test]
    fn degenerate_impulse_is_rejected() {
        assert_eq!(ImpulseRule::Constant(-1.0).factor(5), Err(ProblemError::ImpulseDegenerate { k: 5 }));
        assert_eq!(ImpulseRule::Multiplier(0.0).factor(1), Err(ProblemError::ImpulseDegenerate { k: 1 }));
    }

    #[test]
    fn validation() {
        let grid = ArgumentGrid::uniform(0.0, 1.0, 0.0).unwrap();
        let p = Problem::new(ScalarExpr::zero(), ScalarExpr::zero(), grid.clone(), 0.0, 1.0, 10.0);
        assert!(p.validate().is_ok());
        assert!(p.clone().with_horizon(0.0).validate().is_err());
        let bad = Problem::new(ScalarExpr::index(), ScalarExpr::zero(), grid, 0.0, 1.0, 10.0);
        assert!(bad.validate().is_err());
        let explicit = ArgumentGrid::explicit(vec![0.0, 1.0, 2.0], vec![0.0, 1.5]).unwrap();
        let p = Problem::new(ScalarExpr::zero(), ScalarExpr::zero(), explicit, 0.0, 1.0, 2.0);
        assert_eq!(p.last_knot_index().unwrap(), 2);
        assert!(p.clone().with_horizon(3.0).validate().is_err());
    }
}
