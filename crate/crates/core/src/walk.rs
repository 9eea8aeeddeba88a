//! Step-size control shared by the constrained random walkers.
//!
//! Both the entropy search (integer cell steps) and the nested-sampling
//! replacement walker (real parameter steps) widen their proposals when more
//! than half of the moves are accepted and narrow them when fewer are.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptance band used to adapt the exploration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepAdapt {
    pub enabled: bool,
    /// Acceptance rate above which the step doubles and below which it halves.
    pub target_rate: f64,
}

impl Default for StepAdapt {
    fn default() -> Self {
        Self {
            enabled: true,
            target_rate: 0.5,
        }
    }
}

impl StepAdapt {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return Err(Error::config(format!(
                "target acceptance rate must lie in (0, 1), got {}",
                self.target_rate
            )));
        }
        Ok(())
    }

    fn direction(&self, accepted: usize, proposed: usize) -> Result<std::cmp::Ordering> {
        if proposed == 0 {
            return Err(Error::config("step adaptation needs at least one proposal"));
        }
        let rate = accepted as f64 / proposed as f64;
        Ok(rate
            .partial_cmp(&self.target_rate)
            .unwrap_or(std::cmp::Ordering::Equal))
    }

    /// New integer step: doubled (capped at `span`) above the target rate,
    /// halved rounding up (floored at 1) below it, unchanged at the target.
    pub fn adapt_cells(&self, accepted: usize, proposed: usize, step: usize, span: usize) -> Result<usize> {
        use std::cmp::Ordering::*;
        let span = span.max(1);
        Ok(match self.direction(accepted, proposed)? {
            Greater => step.saturating_mul(2).min(span),
            Less => step.div_ceil(2).max(1),
            Equal => step,
        })
    }

    /// Real-valued counterpart of [`StepAdapt::adapt_cells`].
    pub fn adapt_scale(&self, accepted: usize, proposed: usize, scale: f64, min: f64, max: f64) -> Result<f64> {
        use std::cmp::Ordering::*;
        Ok(match self.direction(accepted, proposed)? {
            Greater => (2.0 * scale).min(max),
            Less => (0.5 * scale).max(min),
            Equal => scale,
        })
    }
}

/// Adapts an integer step with the default 0.5 acceptance band.
pub fn adapt_step(accepted: usize, proposed: usize, step: usize, span: usize) -> Result<usize> {
    StepAdapt::default().adapt_cells(accepted, proposed, step, span)
}

/// Reflects an out-of-range integer position back into `0..n`, mirroring at
/// the outer cell edges (`-1 -> 0`, `n -> n - 1`).
pub fn reflect_index(pos: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut p = pos.rem_euclid(period);
    if p >= n {
        p = period - 1 - p;
    }
    p as usize
}

/// Reflects a real position into `[lo, hi]`.
pub fn reflect_real(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let mut p = (x - lo).rem_euclid(2.0 * w);
    if p > w {
        p = 2.0 * w - p;
    }
    lo + p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapt_examples() {
        assert_eq!(adapt_step(8, 10, 4, 60).unwrap(), 8);
        assert_eq!(adapt_step(1, 10, 4, 60).unwrap(), 2);
        assert_eq!(adapt_step(0, 10, 1, 60).unwrap(), 1);
        assert_eq!(adapt_step(5, 10, 3, 60).unwrap(), 3);
        assert_eq!(adapt_step(10, 10, 40, 60).unwrap(), 60);
        assert_eq!(adapt_step(0, 10, 5, 60).unwrap(), 3);
        assert!(adapt_step(0, 0, 5, 60).is_err());
    }

    #[test]
    fn adapt_scale_bounds() {
        let a = StepAdapt::default();
        assert_eq!(a.adapt_scale(9, 10, 0.4, 0.01, 0.5).unwrap(), 0.5);
        assert_eq!(a.adapt_scale(0, 10, 0.015, 0.01, 0.5).unwrap(), 0.01);
        assert_eq!(a.adapt_scale(1, 2, 0.2, 0.01, 0.5).unwrap(), 0.2);
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect_index(-1, 5), 0);
        assert_eq!(reflect_index(-3, 5), 2);
        assert_eq!(reflect_index(5, 5), 4);
        assert_eq!(reflect_index(7, 5), 2);
        assert_eq!(reflect_index(3, 5), 3);
        assert!((reflect_real(1.2, 0.0, 1.0) - 0.8).abs() < 1e-12);
        assert!((reflect_real(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
    }
}
