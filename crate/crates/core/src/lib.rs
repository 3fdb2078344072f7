//! Deterministic federated-learning simulator with a neuron-level provenance
//! engine.
//!
//! A round of federated training fuses client models into a global model by a
//! data-size weighted average. Because that fusion is linear, every
//! pre-activation of the global model splits exactly into per-client shares.
//! [`provenance`] uses this to attribute a single prediction of the global
//! model to the clients that produced it: it keeps only the neurons that fired
//! on the input, weights each by the gradient of the predicted logit, and sums
//! the per-client shares into a ranked, softmax-normalized report.
//!
//! Module map:
//! - [`nn`]: small feed-forward engine (dense, conv, pooling, ReLU) with
//!   reverse-mode gradients and local SGD/FedProx training.
//! - [`data`]: IDX loading, synthetic blobs, Dirichlet partitioning, label
//!   flips.
//! - [`flsim`]: round orchestration, fusion, checkpoints and run directories.
//! - [`provenance`]: activated neurons, influence, fusion inversion, reports.
//! - [`expkit`]: provenance accuracy and the experiment protocols.

pub mod data;
pub mod error;
pub mod exec;
pub mod expkit;
pub mod flsim;
pub mod nn;
pub mod provenance;
pub mod seed;

pub use error::{Error, Result};
