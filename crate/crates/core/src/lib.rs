//! Data-augmentation and bagging ensemble for seven-class skin-lesion
//! classification.
//!
//! The pipeline runs: augment each image `k` times, collect base-model
//! predictions per copy, draw `n` bagging slots per base model, fuse the
//! models with a learned 1×1 convolution, pool the slots and score with
//! balanced multiclass accuracy.

pub mod basemodels;
pub mod config;
mod csvutil;
pub mod ensemble;
pub mod error;
pub mod imageio;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod tensor;

pub use error::{Error, ExitKind, Result, StageExt};
pub use tensor::{ClassIndex, DenseArray, ProbabilityVector, NUM_CLASSES};
