//! Normalized hierarchical SVMs for single- and multi-label classification
//! over tree and DAG label taxonomies.
//!
//! Each node `n` of the taxonomy carries a weight vector `W_n` and a
//! normalization weight `α_n`; a label (an ancestor-closed node set) scores
//! `Σ_{n∈y} √α_n W_n·x`. [`alpha`] computes `α`, [`inference`] finds the
//! best and most violating labels, [`training`] runs Pegasos-style
//! subgradient descent, [`ssvm`] learns `α` jointly with the weights, and
//! [`shared_norm`] bounds the shared Frobenius norm those weights induce.

pub mod alpha;
pub mod data;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod optim;
pub mod shared_norm;
pub mod ssvm;
pub mod taxonomy;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use taxonomy::{Label, MinimalGraph, NodeId, Taxonomy};
