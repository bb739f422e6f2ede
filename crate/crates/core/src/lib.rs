//! Multilayer-perceptron regression trained by population-based optimizers.
//!
//! A network's weights and biases are packed into one flat vector
//! ([`mlp`]); the training objective is the mean squared error over the
//! training rows ([`objective`]). That vector is optimized either by the
//! Imperialist Competitive Algorithm ([`ica`]) or by a real-coded genetic
//! algorithm ([`ga`]). [`dataset`] handles ingestion, cleaning,
//! normalization and splitting of the seven-column earthquake table, and
//! [`metrics`] scores trained networks.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod ga;
pub mod ica;
pub mod kv;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};
pub use mlp::{MlpTopology, ParamVector};
pub use optim::{Bounds, Country, Objective, RunTrace};
