//! Per-sensor classifier: a `D → 4 → 4 → 1` perceptron (ReLU hidden layers,
//! sigmoid output) trained with mini-batch SGD on binary cross-entropy, plus
//! stratified K-fold splitting and detection metrics.

mod kfold;
mod metrics;
mod mlp;
pub mod snapshot;

pub use kfold::{stratified_k_fold, Fold};
pub use metrics::{evaluate, metrics, ConfusionCounts, Metrics, DECISION_THRESHOLD};
pub use mlp::{
    init_default, init_random, train, DenseLayer, MlpCoefficients, Sample, TrainConfig,
    DEFAULT_COEFF_SEED, HIDDEN,
};
