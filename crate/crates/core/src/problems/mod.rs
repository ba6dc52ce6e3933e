//! Problem construction: data matrices, targets, quadratic risks, streaming
//! covariances, and their spectral decompositions.
//!
//! Everything downstream (simulators, Volterra kernels, closed-form limits)
//! consumes the [`Spectrum`] produced here; the eigendecomposition is
//! computed once per instance and reused.

mod generate;
mod io;
mod spectrum;

pub use generate::{
    gaussian_design, generative_target, make_streaming, psd_sqrt, random_features_map,
    trace_normalize, StreamingSampler,
};
pub use io::{load_matrix, standardize_columns, write_binary, MatrixFormat};
pub use spectrum::{decompose, symmetric_eigen_desc, BoundRisk, Spectrum, StreamingSpectrum};

use ndarray::{Array1, Array2};
use thiserror::Error;

/// Relative cutoff below which eigenvalues are treated as exactly zero.
///
/// `lambda_min` in every rate formula means the smallest eigenvalue above
/// `RANK_CUTOFF * lambda_max`.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("covariance is not positive semidefinite (eigenvalue {value:.3e})")]
    NotPsd { value: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("cannot trace-normalize a zero matrix")]
    ZeroMatrix,
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("ridge parameter must be nonnegative, got {0}")]
    NegativeRidge(f64),
    #[error("hessian is not symmetric: |T - T^t| = {asym:.3e} exceeds 1e-12 * |T|")]
    NotSymmetric { asym: f64 },
    #[error("risk declared convex but spectral weight {value:.3e} < -1e-12")]
    NotConvex { value: f64 },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("parse failure at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("file is empty or has no data rows")]
    EmptyFile,
    #[error("ragged row {row}: expected {expected} columns, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("quenched mode requires projections that were not stored: {0}")]
    MissingProjection(&'static str),
}

/// The finite-sample ridge least-squares instance.
///
/// Objective: `f(x) = 1/2 |Ax - b|^2 + delta/2 |x|^2`, with the ridgeless
/// empirical risk `L(x) = 1/2 |Ax - b|^2`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    data: Array2<f64>,
    target: Array1<f64>,
    ridge: f64,
    init: Array1<f64>,
}

impl ProblemInstance {
    pub fn new(
        data: Array2<f64>,
        target: Array1<f64>,
        ridge: f64,
        init: Array1<f64>,
    ) -> Result<Self, ProblemError> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(ProblemError::Empty);
        }
        if target.len() != n {
            return Err(ProblemError::DimensionMismatch {
                context: "target length vs sample count",
                expected: n,
                got: target.len(),
            });
        }
        if init.len() != d {
            return Err(ProblemError::DimensionMismatch {
                context: "init length vs feature count",
                expected: d,
                got: init.len(),
            });
        }
        if ridge < 0.0 {
            return Err(ProblemError::NegativeRidge(ridge));
        }
        check_finite(&data)?;
        for (i, v) in target.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProblemError::NonFinite { row: i, col: 0 });
            }
        }
        for (i, v) in init.iter().enumerate() {
            if !v.is_finite() {
                return Err(ProblemError::NonFinite { row: i, col: 0 });
            }
        }
        Ok(Self {
            data,
            target,
            ridge,
            init,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn init(&self) -> &Array1<f64> {
        &self.init
    }

    /// Ridgeless empirical risk `L(x) = 1/2 |Ax - b|^2`.
    pub fn empirical_risk(&self, x: &Array1<f64>) -> f64 {
        let r = self.data.dot(x) - &self.target;
        0.5 * r.dot(&r)
    }

    /// Regularized objective `f(x) = L(x) + delta/2 |x|^2`.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        self.empirical_risk(x) + 0.5 * self.ridge * x.dot(x)
    }

    /// Full gradient of the regularized objective.
    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        let r = self.data.dot(x) - &self.target;
        self.data.t().dot(&r) + &(self.ridge * x)
    }

    /// Single-sample objective `f_i(x) = 1/2 ((a_i x - b_i)^2 + delta/n |x|^2)`.
    pub fn sample_objective(&self, i: usize, x: &Array1<f64>) -> f64 {
        let r = self.data.row(i).dot(x) - self.target[i];
        0.5 * (r * r + self.ridge / self.sample_count() as f64 * x.dot(x))
    }

    /// Gradient of `f_i`, the quantity one SGD step descends.
    pub fn sample_gradient(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let r = self.data.row(i).dot(x) - self.target[i];
        let mut g = self.data.row(i).to_owned();
        g.mapv_inplace(|v| v * r);
        g + &(self.ridge / self.sample_count() as f64 * x)
    }
}

/// A quadratic statistic `R(x) = 1/2 x^t T x + u^t x + c` evaluated along
/// trajectories and inside Volterra kernels.
#[derive(Debug, Clone)]
pub struct QuadraticRisk {
    name: String,
    hessian: Array2<f64>,
    linear: Array1<f64>,
    constant: f64,
    convex: bool,
    /// `Some(eta^2)` when the risk has the signal-centered form
    /// `1/2 (x - beta)^t T (x - beta) + eta^2 / 2`; required by the annealed
    /// (model-averaged) gradient-flow formulas.
    noise_floor: Option<f64>,
}

impl QuadraticRisk {
    pub fn new(
        name: impl Into<String>,
        hessian: Array2<f64>,
        linear: Array1<f64>,
        constant: f64,
        convex: bool,
    ) -> Result<Self, ProblemError> {
        let d = hessian.nrows();
        if hessian.ncols() != d {
            return Err(ProblemError::DimensionMismatch {
                context: "hessian must be square",
                expected: d,
                got: hessian.ncols(),
            });
        }
        if linear.len() != d {
            return Err(ProblemError::DimensionMismatch {
                context: "linear term vs hessian",
                expected: d,
                got: linear.len(),
            });
        }
        let mut asym: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                asym = asym.max((hessian[[i, j]] - hessian[[j, i]]).abs());
                scale = scale.max(hessian[[i, j]].abs());
            }
        }
        if asym > 1e-12 * scale.max(1.0) {
            return Err(ProblemError::NotSymmetric { asym });
        }
        Ok(Self {
            name: name.into(),
            hessian,
            linear,
            constant,
            convex,
            noise_floor: None,
        })
    }

    /// Population risk `1/2 eta^2 + 1/2 (x - beta)^t Sigma (x - beta)`.
    pub fn population(
        name: impl Into<String>,
        covariance: Array2<f64>,
        signal: &Array1<f64>,
        noise_variance: f64,
    ) -> Result<Self, ProblemError> {
        let linear = -covariance.dot(signal);
        let constant = 0.5 * signal.dot(&covariance.dot(signal)) + 0.5 * noise_variance;
        Self::new(name, covariance, linear, constant, true)
            .map(|r| r.with_noise_floor(noise_variance))
    }

    /// Squared-distance statistic `1/2 |x - target|^2`.
    pub fn norm_distance(name: impl Into<String>, target: &Array1<f64>) -> Self {
        let d = target.len();
        Self::new(
            name,
            Array2::eye(d),
            -target.clone(),
            0.5 * target.dot(target),
            true,
        )
        .expect("identity hessian is symmetric")
        .with_noise_floor(0.0)
    }

    /// The empirical risk `L` itself as a quadratic statistic
    /// (`T = A^t A`, `u = -A^t b`, `c = 1/2 |b|^2`).
    pub fn empirical(name: impl Into<String>, problem: &ProblemInstance) -> Self {
        let gram = problem.data().t().dot(problem.data());
        let linear = -problem.data().t().dot(problem.target());
        let constant = 0.5 * problem.target().dot(problem.target());
        Self::new(name, gram, linear, constant, true).expect("gram matrix is symmetric")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn hessian(&self) -> &Array2<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &Array1<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Declare the risk signal-centered with the given `eta^2` floor.
    pub fn with_noise_floor(mut self, noise_variance: f64) -> Self {
        self.noise_floor = Some(noise_variance);
        self
    }

    pub fn noise_floor(&self) -> Option<f64> {
        self.noise_floor
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        0.5 * x.dot(&self.hessian.dot(x)) + self.linear.dot(x) + self.constant
    }
}

/// Generative target model `b = A beta + xi` (Gaussian design assumption).
///
/// `noise_scale` is the per-sample variance of `xi`, so `|xi|^2 ~ n * noise_scale`
/// and the in-distribution population noise level is `eta^2 = noise_scale`.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub signal: Array1<f64>,
    pub noise_scale: f64,
    pub init_scale: f64,
    pub covariance: Array2<f64>,
}

impl GenerativeModel {
    pub fn new(
        signal: Array1<f64>,
        noise_scale: f64,
        init_scale: f64,
        covariance: Array2<f64>,
    ) -> Result<Self, ProblemError> {
        if noise_scale < 0.0 || init_scale < 0.0 {
            return Err(ProblemError::NotPsd {
                value: noise_scale.min(init_scale),
            });
        }
        if covariance.nrows() != signal.len() || covariance.ncols() != signal.len() {
            return Err(ProblemError::DimensionMismatch {
                context: "covariance vs signal",
                expected: signal.len(),
                got: covariance.nrows(),
            });
        }
        Ok(Self {
            signal,
            noise_scale,
            init_scale,
            covariance,
        })
    }

    /// Expected squared signal norm `R = |beta|^2`.
    pub fn signal_norm2(&self) -> f64 {
        self.signal.dot(&self.signal)
    }

    /// `R~` such that `|xi|^2 = (n/d) R~`, i.e. `R~ = d * noise_scale`.
    pub fn noise_norm2(&self) -> f64 {
        self.signal.len() as f64 * self.noise_scale
    }

    /// `R^ = E |x0|^2`.
    pub fn init_norm2(&self) -> f64 {
        self.init_scale
    }
}

/// One-pass regression problem: fresh rows `a ~ N(0, Sigma_f)` and targets
/// `b = a . beta + eta z`, with streaming loss
/// `S(x) = 1/2 (x - beta)^t Sigma_f (x - beta) + 1/2 eta^2`.
#[derive(Debug, Clone)]
pub struct StreamingProblem {
    covariance: Array2<f64>,
    signal: Array1<f64>,
    noise_variance: f64,
}

impl StreamingProblem {
    pub(crate) fn from_parts(
        covariance: Array2<f64>,
        signal: Array1<f64>,
        noise_variance: f64,
    ) -> Self {
        Self {
            covariance,
            signal,
            noise_variance,
        }
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn signal(&self) -> &Array1<f64> {
        &self.signal
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn dim(&self) -> usize {
        self.signal.len()
    }

    /// Streaming loss `S(x)`; satisfies `S(beta) = eta^2 / 2`.
    pub fn loss(&self, x: &Array1<f64>) -> f64 {
        let diff = x - &self.signal;
        0.5 * diff.dot(&self.covariance.dot(&diff)) + 0.5 * self.noise_variance
    }

    pub fn gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        let diff = x - &self.signal;
        self.covariance.dot(&diff)
    }

    /// The streaming loss as a registered quadratic statistic.
    pub fn as_risk(&self, name: impl Into<String>) -> QuadraticRisk {
        QuadraticRisk::population(
            name,
            self.covariance.clone(),
            &self.signal,
            self.noise_variance,
        )
        .expect("covariance validated at construction")
    }
}

/// Which variant of the standardized ReLU activation to apply.
///
/// `MeanZero` subtracts `E max(Z,0) = (2 pi)^{-1/2}` so the activated entries
/// are centered for standard normal input; `Printed` subtracts `0.5 / pi`,
/// which does not center them but is kept for reproducing reported setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    MeanZero,
    Printed,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        let shift = match self {
            Activation::MeanZero => (2.0 * std::f64::consts::PI).sqrt().recip(),
            Activation::Printed => 0.5 / std::f64::consts::PI,
        };
        (z.max(0.0) - shift) / (0.5 - 0.5 / std::f64::consts::PI)
    }

    pub fn label(self) -> &'static str {
        match self {
            Activation::MeanZero => "mean-zero",
            Activation::Printed => "printed",
        }
    }
}

/// Random-features map configuration: `A = sigma(X W / sqrt(n0))`.
#[derive(Debug, Clone)]
pub struct RandomFeaturesConfig {
    pub weights: Array2<f64>,
    pub activation: Activation,
}

impl RandomFeaturesConfig {
    pub fn new(weights: Array2<f64>, activation: Activation) -> Result<Self, ProblemError> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(ProblemError::Empty);
        }
        check_finite(&weights)?;
        Ok(Self {
            weights,
            activation,
        })
    }

    pub fn raw_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }
}

pub(crate) fn check_finite(m: &Array2<f64>) -> Result<(), ProblemError> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(ProblemError::NonFinite { row, col });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let a = array![[0.7, -0.3, 1.1], [0.2, 0.9, -0.5]];
        let b = array![0.4, -1.2];
        let problem = ProblemInstance::new(a, b, 0.3, Array1::zeros(3)).unwrap();
        let x = array![0.5, -0.8, 0.25];
        for i in 0..2 {
            let g = problem.sample_gradient(i, &x);
            for k in 0..3 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (problem.sample_objective(i, &xp) - problem.sample_objective(i, &xm))
                    / (2.0 * h);
                let denom = g[k].abs().max(1.0);
                assert!(
                    ((g[k] - fd) / denom).abs() < 1e-6,
                    "component {k} of grad f_{i}: {} vs fd {}",
                    g[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let err = ProblemInstance::new(a, array![1.0], 0.0, array![0.0, 0.0]);
        assert!(matches!(
            err,
            Err(ProblemError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_negative_ridge_and_nonfinite() {
        let a = array![[1.0_f64]];
        assert!(matches!(
            ProblemInstance::new(a.clone(), array![1.0], -0.1, array![0.0]),
            Err(ProblemError::NegativeRidge(_))
        ));
        let bad = array![[f64::NAN]];
        assert!(matches!(
            ProblemInstance::new(bad, array![1.0], 0.0, array![0.0]),
            Err(ProblemError::NonFinite { .. })
        ));
    }

    #[test]
    fn population_risk_at_signal_is_noise_floor() {
        let sigma = Array2::eye(3) * 0.25;
        let beta = array![1.0, -2.0, 0.5];
        let risk = QuadraticRisk::population("pop", sigma, &beta, 0.08).unwrap();
        assert!((risk.value(&beta) - 0.04).abs() < 1e-14);
    }

    #[test]
    fn printed_activation_at_zero_matches_arithmetic() {
        // sigma(0) = (-0.5/pi) / (0.5 - 0.5/pi)
        let got = Activation::Printed.apply(0.0);
        assert!((got + 0.466_942_206_924_259_9).abs() < 1e-12, "{got}");
    }

    #[test]
    fn empirical_risk_as_quadratic_agrees() {
        let a = array![[0.7, -0.3], [0.2, 0.9], [1.0, 0.4]];
        let b = array![0.4, -1.2, 0.3];
        let problem = ProblemInstance::new(a, b, 0.0, Array1::zeros(2)).unwrap();
        let risk = QuadraticRisk::empirical("train", &problem);
        let x = array![0.3, -0.6];
        assert!((risk.value(&x) - problem.empirical_risk(&x)).abs() < 1e-13);
    }
}
