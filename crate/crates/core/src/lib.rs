//! Online value-function estimation with Gaussian-process temporal
//! differences on random Fourier features, plus the exact GP baseline,
//! benchmark environments, metrics and an experiment harness.

// Validators use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environments;
pub mod error;
pub mod gptd_exact;
pub mod harness;
pub mod kernel_rf;
pub mod linalg;
pub mod metrics;
pub mod os_egptd;
pub mod os_gptd;
pub mod rng;

pub use environments::{EnvironmentConfig, PuddleWorldConfig, RandomWalkConfig, Trajectory};
pub use error::{Error, Result};
pub use gptd_exact::{ExactGptd, OracleConfig, Prediction, TrajectoryBatch};
pub use harness::{EstimatorKind, ExperimentConfig};
pub use kernel_rf::{sample_frequencies, KernelFamily, KernelSpec, RFMap};
pub use os_egptd::{init_ensemble, EnsembleState, ExpertState};
pub use os_gptd::{OnlineGptd, PosteriorState, TransitionFeatures};
