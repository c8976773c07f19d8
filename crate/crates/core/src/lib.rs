//! Distributed spectrum occupancy detection with federated learning.
//!
//! The crate is organised as a pipeline:
//!
//! - [`signal`] synthesises labelled IQ campaigns (noise-only and multicarrier
//!   signal frames observed through a path-loss channel) and reads raw IQ captures.
//! - [`features`] turns a frame into the eigenvalue feature vector
//!   (correlation-matrix eigenvalues, max/min eigenvalue ratio, mean power,
//!   autocorrelation) and normalises it.
//! - [`model`] is a small 4-4-1 perceptron with backpropagation, stratified
//!   K-fold splitting and detection metrics.
//! - [`federation`] implements the coefficient exchange: every round each sensor
//!   blends its own model with inverse-distance-weighted neighbour models.
//! - [`experiment`] runs the local-only reference and the federated scenarios and
//!   aggregates the results into CSV reports.

pub mod error;
pub mod experiment;
pub mod features;
pub mod federation;
pub mod model;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
