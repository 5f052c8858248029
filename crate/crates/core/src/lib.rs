//! Federated learning simulator with a black-box membership-inference audit.
//!
//! The crate trains small dense classifiers across disjoint clients, fuses
//! them either by FedAvg or by retaining a single client's model per round,
//! and measures privacy as the accuracy of a shadow-model membership
//! inference attack against the global model.
//!
//! Layout:
//!
//! - [`data`]: IDX loading, synthetic blobs, client partitioning, member splits
//! - [`model`]: dense network, softmax cross-entropy, SGD, checkpoints
//! - [`federation`]: rounds, FedAvg and the single-client selection schemes
//! - [`attack`]: shadow models, attack classifier, threshold baseline
//! - [`metrics`]: client agreement, confidence histograms, Spearman correlation
//! - [`harness`]: experiment configs, sweeps, CSV/JSON output and reports

pub mod attack;
pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
pub use matrix::Matrix;
