//! Learning-rate schedules with exact integrated rates.

use serde::{Deserialize, Serialize};

use super::OptimError;

/// A nonnegative, piecewise-constant learning-rate schedule `gamma(t)` with
/// its exact integral `Gamma(t)`.
///
/// Constant schedules satisfy `Gamma(t) = gamma * t` exactly; piecewise
/// schedules integrate segment by segment. The final segment extends to
/// infinity and is the schedule's tail value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearningSchedule {
    Constant(f64),
    Piecewise {
        /// Times at which the rate switches; strictly increasing, positive.
        breakpoints: Vec<f64>,
        /// One rate per segment: `rates[i]` applies on
        /// `[breakpoints[i-1], breakpoints[i])`, `rates.len() == breakpoints.len() + 1`.
        rates: Vec<f64>,
    },
}

impl LearningSchedule {
    pub fn constant(rate: f64) -> Result<Self, OptimError> {
        if rate < 0.0 || !rate.is_finite() {
            return Err(OptimError::NegativeRate(rate));
        }
        Ok(LearningSchedule::Constant(rate))
    }

    pub fn piecewise(breakpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self, OptimError> {
        if rates.len() != breakpoints.len() + 1 {
            return Err(OptimError::BadBreakpoints);
        }
        let mut prev = 0.0;
        for &b in &breakpoints {
            if !(b > prev) || !b.is_finite() {
                return Err(OptimError::BadBreakpoints);
            }
            prev = b;
        }
        if let Some(&r) = rates.iter().find(|&&r| r < 0.0 || !r.is_finite()) {
            return Err(OptimError::NegativeRate(r));
        }
        Ok(LearningSchedule::Piecewise { breakpoints, rates })
    }

    /// `gamma(t)`.
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            LearningSchedule::Constant(g) => *g,
            LearningSchedule::Piecewise { breakpoints, rates } => {
                let idx = breakpoints.partition_point(|&b| b <= t);
                rates[idx]
            }
        }
    }

    /// Integrated rate `Gamma(t) = int_0^t gamma(s) ds`.
    pub fn integrated(&self, t: f64) -> f64 {
        match self {
            LearningSchedule::Constant(g) => g * t,
            LearningSchedule::Piecewise { breakpoints, rates } => {
                let mut acc = 0.0;
                let mut prev = 0.0;
                for (i, &b) in breakpoints.iter().enumerate() {
                    if t <= b {
                        return acc + rates[i] * (t - prev);
                    }
                    acc += rates[i] * (b - prev);
                    prev = b;
                }
                acc + rates[breakpoints.len()] * (t - prev)
            }
        }
    }

    /// Upper bound `sup_t gamma(t)`.
    pub fn max_rate(&self) -> f64 {
        match self {
            LearningSchedule::Constant(g) => *g,
            LearningSchedule::Piecewise { rates, .. } => {
                rates.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// The eventual constant value `gamma(t) -> gamma`.
    pub fn tail_rate(&self) -> f64 {
        match self {
            LearningSchedule::Constant(g) => *g,
            LearningSchedule::Piecewise { rates, .. } => *rates.last().unwrap(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            LearningSchedule::Constant(_) => true,
            LearningSchedule::Piecewise { rates, .. } => {
                rates.windows(2).all(|w| w[0] == w[1])
            }
        }
    }
}
