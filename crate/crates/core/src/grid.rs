//! Piecewise constant argument `γ(t)` described by knots `t_k` and anchors `ζ_k`.
//!
//! On `I_k = [t_k, t_{k+1})` the argument is constant, `γ(t) = ζ_k`. Standard
//! grids keep `ζ_k ∈ [t_k, t_{k+1}]`, which splits every interval into an
//! advanced part `[t_k, ζ_k]` and a delayed part `[ζ_k, t_{k+1}]`. Lagged grids
//! point back to an earlier knot, `ζ_k = t_{k-m}`, as in `y([t-1])`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("t = {t} lies outside the explicit grid [{lo}, {hi})")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("interval index {k} is not covered by the grid")]
    IndexOutOfRange { k: i64 },
    #[error("lagged grids have no advanced/delayed split")]
    LaggedSplit,
    #[error("invalid grid: {0}")]
    Invalid(String),
}

/// Rule generating the sequences `{t_k}` and `{ζ_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ArgumentGrid {
    /// `t_k = t0 + k h`, `ζ_k = t_k + α h`.
    Uniform { t0: f64, h: f64, alpha: f64 },
    /// Finite knot list with one anchor per interval.
    Explicit { knots: Vec<f64>, zetas: Vec<f64> },
    /// `t_k = t0 + k h`, `ζ_k = t_{k-lag}`.
    Lagged { t0: f64, h: f64, lag: u32 },
}

/// Closed interval `[start, end]`, possibly degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn is_degenerate(&self) -> bool {
        self.start == self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

impl ArgumentGrid {
    pub fn uniform(t0: f64, h: f64, alpha: f64) -> Result<Self, GridError> {
        let grid = Self::Uniform { t0, h, alpha };
        grid.validate()?;
        Ok(grid)
    }

    pub fn explicit(knots: Vec<f64>, zetas: Vec<f64>) -> Result<Self, GridError> {
        let grid = Self::Explicit { knots, zetas };
        grid.validate()?;
        Ok(grid)
    }

    pub fn lagged(t0: f64, h: f64, lag: u32) -> Result<Self, GridError> {
        let grid = Self::Lagged { t0, h, lag };
        grid.validate()?;
        Ok(grid)
    }

    /// Checks the ordering invariants; deserialized grids must pass this
    /// before use.
    pub fn validate(&self) -> Result<(), GridError> {
        match self {
            Self::Uniform { t0, h, alpha } => {
                if !t0.is_finite() || !h.is_finite() || *h <= 0.0 {
                    return Err(GridError::Invalid(format!("need finite t0 and h > 0, got t0={t0}, h={h}")));
                }
                if !(0.0..=1.0).contains(alpha) {
                    return Err(GridError::Invalid(format!("alpha must lie in [0, 1], got {alpha}")));
                }
            }
            Self::Lagged { t0, h, lag } => {
                if !t0.is_finite() || !h.is_finite() || *h <= 0.0 {
                    return Err(GridError::Invalid(format!("need finite t0 and h > 0, got t0={t0}, h={h}")));
                }
                if *lag < 1 {
                    return Err(GridError::Invalid("lag must be at least 1".into()));
                }
            }
            Self::Explicit { knots, zetas } => {
                if knots.len() < 2 {
                    return Err(GridError::Invalid("explicit grid needs at least two knots".into()));
                }
                if zetas.len() != knots.len() - 1 {
                    return Err(GridError::Invalid(format!(
                        "expected {} anchors, got {}",
                        knots.len() - 1,
                        zetas.len()
                    )));
                }
                if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(GridError::Invalid("knots must be finite and strictly increasing".into()));
                }
                for (k, z) in zetas.iter().enumerate() {
                    if !(knots[k]..=knots[k + 1]).contains(z) {
                        return Err(GridError::Invalid(format!(
                            "anchor {z} outside [{}, {}] at k={k}",
                            knots[k],
                            knots[k + 1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_lagged(&self) -> bool {
        matches!(self, Self::Lagged { .. })
    }

    /// Lag `m` of a lagged grid, zero otherwise.
    pub fn lag(&self) -> u32 {
        match self {
            Self::Lagged { lag, .. } => *lag,
            _ => 0,
        }
    }

    /// Index range `[lo, hi)` of intervals covered, if the grid is finite.
    pub fn index_bounds(&self) -> Option<(i64, i64)> {
        match self {
            Self::Explicit { knots, .. } => Some((0, knots.len() as i64 - 1)),
            _ => None,
        }
    }

    /// Knot `t_k`.
    pub fn knot(&self, k: i64) -> Result<f64, GridError> {
        match self {
            Self::Uniform { t0, h, .. } | Self::Lagged { t0, h, .. } => Ok(t0 + k as f64 * h),
            Self::Explicit { knots, .. } => usize::try_from(k)
                .ok()
                .and_then(|i| knots.get(i).copied())
                .ok_or(GridError::IndexOutOfRange { k }),
        }
    }

    /// Anchor `ζ_k`.
    pub fn zeta(&self, k: i64) -> Result<f64, GridError> {
        match self {
            Self::Uniform { t0, h, alpha } => {
                // Exact knots at the endpoints keep degenerate parts exactly empty.
                if *alpha == 0.0 {
                    self.knot(k)
                } else if *alpha == 1.0 {
                    self.knot(k + 1)
                } else {
                    Ok(t0 + (k as f64 + alpha) * h)
                }
            }
            Self::Explicit { zetas, .. } => usize::try_from(k)
                .ok()
                .and_then(|i| zetas.get(i).copied())
                .ok_or(GridError::IndexOutOfRange { k }),
            Self::Lagged { lag, .. } => self.knot(k - *lag as i64),
        }
    }

    /// The unique `k` with `t_k ≤ t < t_{k+1}`.
    pub fn interval_index(&self, t: f64) -> Result<i64, GridError> {
        match self {
            Self::Uniform { t0, h, .. } | Self::Lagged { t0, h, .. } => {
                if !t.is_finite() {
                    return Err(GridError::Invalid(format!("non-finite time {t}")));
                }
                let mut k = ((t - t0) / h).floor() as i64;
                // Rounding in the division can land one interval off.
                while self.knot(k)? > t {
                    k -= 1;
                }
                while self.knot(k + 1)? <= t {
                    k += 1;
                }
                Ok(k)
            }
            Self::Explicit { knots, .. } => {
                let lo = knots[0];
                let hi = *knots.last().unwrap();
                if !(lo..hi).contains(&t) {
                    return Err(GridError::OutOfRange { t, lo, hi });
                }
                let i = knots.partition_point(|&x| x <= t);
                Ok(i as i64 - 1)
            }
        }
    }

    /// `γ(t) = ζ_{k(t)}`.
    pub fn gamma(&self, t: f64) -> Result<f64, GridError> {
        self.zeta(self.interval_index(t)?)
    }

    /// Advanced part `[t_k, ζ_k]` and delayed part `[ζ_k, t_{k+1}]` of `I_k`.
    pub fn split(&self, k: i64) -> Result<(Span, Span), GridError> {
        if self.is_lagged() {
            return Err(GridError::LaggedSplit);
        }
        let (tk, zk, tk1) = (self.knot(k)?, self.zeta(k)?, self.knot(k + 1)?);
        Ok((Span { start: tk, end: zk }, Span { start: zk, end: tk1 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_index_examples() {
        let g = ArgumentGrid::uniform(0.0, 1.0, 0.0).unwrap();
        assert_eq!(g.interval_index(3.7).unwrap(), 3);
        assert_eq!(g.interval_index(4.0).unwrap(), 4);
        assert_eq!(g.interval_index(-0.5).unwrap(), -1);
        let g = ArgumentGrid::uniform(0.0, 0.5, 1.0).unwrap();
        assert_eq!(g.interval_index(0.75).unwrap(), 1);
        let g = ArgumentGrid::uniform(0.0, 0.1, 0.0).unwrap();
        // 0.3 / 0.1 rounds below 3 in binary; the knot comparison must win.
        let k = g.interval_index(0.3).unwrap();
        assert!(g.knot(k).unwrap() <= 0.3 && 0.3 < g.knot(k + 1).unwrap());
    }

    #[test]
    fn gamma_examples() {
        let floor = ArgumentGrid::uniform(0.0, 1.0, 0.0).unwrap();
        assert_eq!(floor.gamma(3.7).unwrap(), 3.0);
        let ceil = ArgumentGrid::uniform(0.0, 1.0, 1.0).unwrap();
        assert_eq!(ceil.gamma(3.7).unwrap(), 4.0);
        let lagged = ArgumentGrid::lagged(0.0, 1.0, 1).unwrap();
        assert_eq!(lagged.gamma(3.7).unwrap(), 2.0);
    }

    #[test]
    fn split_examples() {
        let g = ArgumentGrid::uniform(0.0, 1.0, 0.0).unwrap();
        let (adv, del) = g.split(2).unwrap();
        assert_eq!((adv.start, adv.end, del.start, del.end), (2.0, 2.0, 2.0, 3.0));
        assert!(adv.is_degenerate());
        let g = ArgumentGrid::uniform(0.0, 1.0, 1.0).unwrap();
        let (adv, del) = g.split(2).unwrap();
        assert_eq!((adv.start, adv.end, del.start, del.end), (2.0, 3.0, 3.0, 3.0));
        let g = ArgumentGrid::uniform(0.0, 2.0, 0.5).unwrap();
        let (adv, del) = g.split(1).unwrap();
        assert_eq!((adv.start, adv.end, del.start, del.end), (2.0, 3.0, 3.0, 4.0));
        let g = ArgumentGrid::lagged(0.0, 1.0, 1).unwrap();
        assert_eq!(g.split(2), Err(GridError::LaggedSplit));
    }

    #[test]
    fn explicit_grid() {
        let g = ArgumentGrid::explicit(vec![0.0, 0.5, 2.0, 2.5], vec![0.25, 2.0, 2.5]).unwrap();
        assert_eq!(g.interval_index(0.5).unwrap(), 1);
        assert_eq!(g.interval_index(2.4).unwrap(), 2);
        assert_eq!(g.gamma(1.0).unwrap(), 2.0);
        assert!(matches!(g.interval_index(2.5), Err(GridError::OutOfRange { .. })));
        assert!(matches!(g.interval_index(-1.0), Err(GridError::OutOfRange { .. })));
        assert!(ArgumentGrid::explicit(vec![0.0, 1.0], vec![1.5]).is_err());
        assert!(ArgumentGrid::explicit(vec![0.0, 0.0], vec![0.0]).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ArgumentGrid::uniform(0.0, 0.0, 0.5).is_err());
        assert!(ArgumentGrid::uniform(0.0, 1.0, 1.5).is_err());
        assert!(ArgumentGrid::lagged(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn config_shape() {
        let g: ArgumentGrid =
            serde_json::from_str(r#"{"type":"uniform","t0":0,"h":1,"alpha":0.5}"#).unwrap();
        assert_eq!(g, ArgumentGrid::Uniform { t0: 0.0, h: 1.0, alpha: 0.5 });
        let g: ArgumentGrid = serde_json::from_str(r#"{"type":"lagged","t0":0,"h":1,"lag":1}"#).unwrap();
        assert!(g.is_lagged());
    }

    proptest! {
        #[test]
        fn lookup_brackets_time(
            t0 in -5.0f64..5.0, h in 0.05f64..3.0, alpha in 0.0f64..=1.0, t in -50.0f64..50.0,
        ) {
            let g = ArgumentGrid::uniform(t0, h, alpha).unwrap();
            let k = g.interval_index(t).unwrap();
            prop_assert!(g.knot(k).unwrap() <= t && t < g.knot(k + 1).unwrap());
            let z = g.gamma(t).unwrap();
            prop_assert!(g.knot(k).unwrap() <= z && z <= g.knot(k + 1).unwrap());
            let (adv, del) = g.split(k).unwrap();
            prop_assert_eq!(adv.end, del.start);
            prop_assert_eq!(adv.start, g.knot(k).unwrap());
            prop_assert_eq!(del.end, g.knot(k + 1).unwrap());
        }

        #[test]
        fn gamma_is_constant_per_interval(
            h in 0.05f64..3.0, alpha in 0.0f64..=1.0, s in 0.0f64..1.0, r in 0.0f64..1.0, k in -20i64..20,
        ) {
            let g = ArgumentGrid::uniform(0.0, h, alpha).unwrap();
            let (tk, tk1) = (g.knot(k).unwrap(), g.knot(k + 1).unwrap());
            let a = tk + s * (tk1 - tk);
            let b = tk + r * (tk1 - tk);
            if a < tk1 && b < tk1 && g.interval_index(a).unwrap() == g.interval_index(b).unwrap() {
                prop_assert_eq!(g.gamma(a).unwrap(), g.gamma(b).unwrap());
            }
        }
    }
}
