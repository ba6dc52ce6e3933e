//! Continuous-time diffusions whose quadratic statistics track SGD: the
//! homogenized SGD equation, its streaming analog, and the general class
//! `dX = -gamma(t) grad f(X) dt + gamma(t) sqrt(L(X) M + A) dB`.

mod noise;
mod sde;

pub use noise::{BasisMatrix, NoiseKind, NoiseModel};
pub use sde::{
    ensemble_paths, simulate_sld, simulate_streaming_hsgd, EnsembleStats, SdePath, SdeSystem,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("horizon must be nonnegative, got {0}")]
    BadHorizon(f64),
    #[error("noise covariance is not positive semidefinite (eigenvalue {value:.3e})")]
    NotPsd { value: f64 },
    #[error("dimension mismatch: noise model is {model} but system is {system}")]
    DimensionMismatch { model: usize, system: usize },
    #[error("{0}")]
    Problem(#[from] crate::problems::ProblemError),
}
