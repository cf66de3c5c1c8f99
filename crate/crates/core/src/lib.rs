//! Desk-scale federated graph learning simulator.
//!
//! The crate is organized around a small number of subsystems:
//!
//! - [`graph`]: graph data model, TU-format text ingestion, synthetic
//!   generators and dataset splitting.
//! - [`encode`]: per-node structural vectors (degree one-hot plus random
//!   walk return probabilities) and structure statistics.
//! - [`nn`]: a dense-tensor numeric core with reverse-mode automatic
//!   differentiation, the GNN layer zoo and the Adam optimizer.
//! - [`model`]: the dual-densely connected two-channel network, its
//!   decoupled and single-channel variants, and parameter checkpoints.
//! - [`fed`]: the simulated federation (server, clients, round loop) with
//!   the Local / FedAvg / FedProx / FedDense strategies.
//! - [`resource`]: analytic and measured FLOP, parameter and payload
//!   accounting.
//! - [`hetero`]: pairwise Jensen-Shannon divergence heatmaps over
//!   per-dataset feature and structure distributions.
//! - [`experiment`]: configuration files, repetition orchestration and
//!   metrics/summary emission.

pub mod encode;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod graph;
pub mod hetero;
pub mod model;
pub mod nn;
pub mod resource;

pub use error::{Error, Result};
pub use graph::{Graph, GraphDataset, SplitDataset};
pub use model::{DdcParameters, ModelConfig, ModelVariant};
pub use nn::{Scalar, Tensor};
