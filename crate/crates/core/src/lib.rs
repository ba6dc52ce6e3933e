//! Simulation and deterministic prediction of SGD risk trajectories on
//! high-dimensional ridge-regularized least squares.
//!
//! The crate has three layers:
//!
//! * **Simulators** — multi-pass SGD, one-pass (streaming) SGD, momentum
//!   gradient descent, and the homogenized SGD diffusion integrated with
//!   Euler–Maruyama ([`optimizers`], [`diffusion`]).
//! * **Deterministic theory** — gradient-flow forcing terms, spectral
//!   convolution kernels, and Picard solutions of the Volterra integral
//!   equations whose fixed points predict the empirical and population
//!   risk curves ([`volterra`]).
//! * **Closed forms** — kernel norms, limiting risks, Malthusian exponents,
//!   convergence rates, momentum polynomials, condition numbers, and the
//!   implicit-conditioning ratio ([`asymptotics`]).
//!
//! The [`harness`] module orchestrates seeded ensemble experiments that
//! cross-validate every formula against direct simulation and writes
//! plot-ready CSV/JSON artifacts.

pub mod asymptotics;
pub mod diffusion;
pub mod harness;
pub mod optimizers;
pub mod problems;
pub mod util;
pub mod volterra;

pub use problems::{
    GenerativeModel, ProblemInstance, QuadraticRisk, RandomFeaturesConfig, Spectrum,
    StreamingProblem,
};
