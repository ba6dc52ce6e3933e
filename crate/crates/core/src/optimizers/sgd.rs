//! Multi-pass and streaming SGD runners.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problems::{ProblemInstance, QuadraticRisk, StreamingProblem, StreamingSampler};

use super::{LearningSchedule, OptimError, TimeUnit, Trajectory};

/// Run single-batch multi-pass SGD on the ridge problem.
///
/// One step with sampled index `i_k` descends the per-sample objective:
/// `x_{k+1} = x_k - gamma_k a_{i_k} (a_{i_k} . x_k - b_{i_k}) - (gamma_k delta / n) x_k`,
/// with `gamma_k = gamma(k / n)`. The trajectory is recorded in epoch time
/// `t = k / n`, every `record_every` steps (default `n / 10`). Divergence is
/// recorded on the trajectory, never raised.
pub fn run_sgd(
    problem: &ProblemInstance,
    schedule: &LearningSchedule,
    steps: usize,
    seed: u64,
    risks: &[&QuadraticRisk],
    record_every: Option<usize>,
) -> Result<Trajectory, OptimError> {
    let n = problem.sample_count() as f64;
    let stride = record_every
        .unwrap_or_else(|| (problem.sample_count() / 10).max(1))
        .max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = problem.init().clone();
    let names: Vec<&str> = risks.iter().map(|r| r.name()).collect();
    let mut trajectory = Trajectory::new(TimeUnit::Epochs, &names, seed);

    let record = |trajectory: &mut Trajectory, k: usize, x: &Array1<f64>| {
        let loss = problem.empirical_risk(x);
        let objective = loss + 0.5 * problem.ridge() * x.dot(x);
        trajectory.push(
            k as f64 / n,
            loss,
            objective,
            risks.iter().map(|r| (r.name().to_string(), r.value(x))),
        );
    };

    record(&mut trajectory, 0, &x);
    let data = problem.data();
    let target = problem.target();
    for k in 0..steps {
        let i = rng.gen_range(0..problem.sample_count());
        let row = data.row(i);
        let residual = row.dot(&x) - target[i];
        let gamma = schedule.rate(k as f64 / n);
        let shrink = 1.0 - gamma * problem.ridge() / n;
        ndarray::azip!((xj in &mut x, &aj in &row) {
            *xj = shrink * *xj - gamma * residual * aj;
        });
        if !residual.is_finite() {
            trajectory.mark_diverged();
            break;
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record(&mut trajectory, k + 1, &x);
        }
    }
    Ok(trajectory)
}

/// Run one-pass (streaming) SGD with fresh samples each step:
/// `x_{k+1} = x_k - gamma a_k (a_k . x_k - b_k)`.
///
/// The trajectory's loss column is the streaming loss `S`; time is counted
/// in iterations.
pub fn run_streaming_sgd(
    streaming: &StreamingProblem,
    gamma: f64,
    init: &Array1<f64>,
    steps: usize,
    seed: u64,
    risks: &[&QuadraticRisk],
    record_every: Option<usize>,
) -> Result<Trajectory, OptimError> {
    if gamma < 0.0 {
        return Err(OptimError::NegativeRate(gamma));
    }
    let stride = record_every.unwrap_or(1).max(1);
    let mut sampler = StreamingSampler::new(streaming, seed)?;
    let mut x = init.clone();
    let names: Vec<&str> = risks.iter().map(|r| r.name()).collect();
    let mut trajectory = Trajectory::new(TimeUnit::Iterations, &names, seed);

    let record = |trajectory: &mut Trajectory, k: usize, x: &Array1<f64>| {
        let loss = streaming.loss(x);
        trajectory.push(
            k as f64,
            loss,
            loss,
            risks.iter().map(|r| (r.name().to_string(), r.value(x))),
        );
    };

    record(&mut trajectory, 0, &x);
    for k in 0..steps {
        let (a, b) = sampler.draw();
        let residual = a.dot(&x) - b;
        ndarray::azip!((xj in &mut x, &aj in &a) {
            *xj -= gamma * residual * aj;
        });
        if !residual.is_finite() {
            trajectory.mark_diverged();
            break;
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            record(&mut trajectory, k + 1, &x);
        }
    }
    Ok(trajectory)
}
