//! Fisher inheritance unlearning over model-inheritance graphs.
//!
//! A network of models that inherit parameters from one another (federated
//! rounds, incremental or transfer chains, data-parallel sub-tasks) is held as
//! a DAG ([`umig::Umig`]). To forget a set of class labels, the discovery
//! nodes that first saw those labels compute an unlearning Fisher matrix over
//! the forgotten data; every node reachable from them then merges the
//! unlearning matrices it can trace back to and dampens the last-layer
//! parameters whose importance to the forgotten data dominates their
//! importance to the node's own training data. No step depends on any other
//! node's updated parameters, so all nodes are processed in parallel.
//!
//! Modules, bottom-up:
//!
//! - [`dataset`]: labeled feature matrices, synthetic blobs, splits, shards.
//! - [`model`]: the last-layer linear-softmax classifier and SGD training.
//! - [`fim`]: diagonal empirical Fisher, merging, and dampening.
//! - [`umig`]: the inheritance graph, discovery, and topology generators.
//! - [`engine`]: the unlearning orchestrator, baselines, and reports.

pub mod dataset;
pub mod engine;
mod error;
pub mod fim;
pub(crate) mod io;
pub mod model;
pub mod seed;
pub mod umig;

pub use error::{Error, Result};
