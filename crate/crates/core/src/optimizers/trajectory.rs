//! Recorded risk trajectories of iterative runs.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::OptimError;

/// Whether a time axis counts epochs (`t = k / n`) or raw iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeUnit {
    Epochs,
    Iterations,
}

impl TimeUnit {
    pub fn label(self) -> &'static str {
        match self {
            TimeUnit::Epochs => "epochs",
            TimeUnit::Iterations => "iterations",
        }
    }

    /// Error unless both axes use the same unit.
    pub fn check_matches(self, other: TimeUnit) -> Result<(), OptimError> {
        if self == other {
            Ok(())
        } else {
            Err(OptimError::UnitMismatch {
                left: self,
                right: other,
            })
        }
    }
}

/// Per-time records of the loss, the regularized objective, and every
/// registered quadratic statistic along one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    unit: TimeUnit,
    times: Vec<f64>,
    loss: Vec<f64>,
    objective: Vec<f64>,
    risks: BTreeMap<String, Vec<f64>>,
    snapshots: Vec<Array1<f64>>,
    seed: u64,
    diverged: bool,
}

impl Trajectory {
    pub(crate) fn new(unit: TimeUnit, risk_names: &[&str], seed: u64) -> Self {
        Self {
            unit,
            times: Vec::new(),
            loss: Vec::new(),
            objective: Vec::new(),
            risks: risk_names
                .iter()
                .map(|n| (n.to_string(), Vec::new()))
                .collect(),
            snapshots: Vec::new(),
            seed,
            diverged: false,
        }
    }

    pub(crate) fn push(
        &mut self,
        time: f64,
        loss: f64,
        objective: f64,
        risk_values: impl IntoIterator<Item = (String, f64)>,
    ) {
        debug_assert!(
            self.times.last().map_or(true, |&last| time > last),
            "record times must be strictly increasing"
        );
        if !loss.is_finite() || !objective.is_finite() {
            self.diverged = true;
        }
        self.times.push(time);
        self.loss.push(loss);
        self.objective.push(objective);
        for (name, value) in risk_values {
            if !value.is_finite() {
                self.diverged = true;
            }
            self.risks.get_mut(&name).expect("registered risk").push(value);
        }
    }

    pub(crate) fn push_snapshot(&mut self, x: Array1<f64>) {
        self.snapshots.push(x);
    }

    pub(crate) fn mark_diverged(&mut self) {
        self.diverged = true;
    }

    pub fn unit(&self) -> TimeUnit {
        self.unit
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// The recorded loss: the ridgeless empirical risk for multi-pass runs,
    /// the streaming loss for one-pass runs.
    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    /// Regularized objective `f` (equals the loss when the ridge is zero).
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn risk(&self, name: &str) -> Option<&[f64]> {
        self.risks.get(name).map(|v| v.as_slice())
    }

    pub fn risk_names(&self) -> impl Iterator<Item = &str> {
        self.risks.keys().map(|s| s.as_str())
    }

    /// Iterate snapshots, populated only when requested from the runner.
    pub fn snapshots(&self) -> &[Array1<f64>] {
        &self.snapshots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
