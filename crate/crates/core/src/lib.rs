//! Privacy-preserving agricultural data sharing.
//!
//! A researcher fits a global PCA model on public data and publishes it with
//! per-component sensitivities. Each participant projects its private rows
//! with that model, adds Laplace noise under a local ε budget and submits the
//! result to a sandbox. The sandbox clusters the shares, recommends
//! collaborators and drives federated training; [`eval`] measures the
//! resulting privacy (membership-inference power) and utility.

pub mod data;
pub mod error;
pub mod eval;
pub mod federated;
pub mod hash;
pub mod ldp;
pub mod linalg;
pub mod models;
pub mod num17;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod sandbox;

pub use error::{Error, Result};
