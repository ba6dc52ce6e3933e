//! Discrete-time algorithms: multi-pass SGD, streaming SGD, momentum gradient
//! descent with its polynomial representation, and gradient-flow closed forms.

mod flow;
mod momentum;
mod schedule;
mod sgd;
mod trajectory;

pub use flow::{
    gradient_flow_risks, AnnealedFlow, FlowMode, FlowRisks, GradientFlow, StreamingFlow,
};
pub use momentum::{
    eval_mgd_polynomials, run_momentum_gd, MomentumPolynomial,
};
pub use schedule::LearningSchedule;
pub use sgd::{run_sgd, run_streaming_sgd};
pub use trajectory::{TimeUnit, Trajectory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("learning rate must be nonnegative, got {0}")]
    NegativeRate(f64),
    #[error("momentum parameter must be nonnegative, got {0}")]
    NegativeMomentum(f64),
    #[error("schedule breakpoints must be strictly increasing and nonnegative")]
    BadBreakpoints,
    #[error("time units differ: {left:?} vs {right:?}; convert explicitly before comparing")]
    UnitMismatch { left: TimeUnit, right: TimeUnit },
    #[error("annealed mode requires generative-model parameters (R, R~, R^)")]
    MissingModel,
    #[error("{0}")]
    Problem(#[from] crate::problems::ProblemError),
}
