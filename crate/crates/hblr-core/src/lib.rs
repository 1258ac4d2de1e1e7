//! Bayesian local-model regression for dynamical systems.
//!
//! The model covers the input space with a set of local linear models, each
//! gated by a Gaussian radial basis function with per-dimension length
//! scales. Training runs a variational EM loop: soft targets are shared out
//! among the local models, each model's weight posterior is solved in closed
//! form, per-feature precisions prune weights that carry no signal, and the
//! length scales follow an analytic gradient. Everything downstream of the
//! data is deterministic — the same inputs always produce the same model.
//!
//! The crate also ships two stochastic benchmark simulators (a mass-spring-
//! damper and an LQR-stabilized double inverted pendulum on a cart), a
//! control-aware segmentation layer that trains one committee of models per
//! response and operating region, and plain-text persistence for datasets
//! and trained models.

pub mod error;
pub mod features;
pub mod io;
pub mod posterior;
pub mod predictor;
pub mod segmentation;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
pub use features::{Center, FeatureVector, LengthScale, LAMBDA_FLOOR};
pub use posterior::{GammaPosterior, HiddenTargets, SharedScalars, WeightPosterior};
pub use predictor::{evaluate, predict_averaged, predict_with_variance, Metric, PredictiveDistribution};
pub use segmentation::{
    train_segmented, train_test_split, Dataset, Segment, SegmentedModel, TrainOptions, TrainReport,
};
pub use sim::{make_supervised, simulate_dipc, simulate_msd, SdeConfig, Trajectory};
pub use trainer::{
    fit_batch, initialize_local_models, BatchModel, FitReport, HyperParams, LocalModel,
};
