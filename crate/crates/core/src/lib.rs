//! Deep collaborative embedding for information cascade prediction.
//!
//! Nodes of a social network are embedded by a set of per-cascade
//! autoencoders whose encodings are fused into one vector per node, with
//! Laplacian penalties pulling together nodes that co-occur in cascades or
//! share an edge. Embedding distances then rank the nodes a new cascade is
//! likely to reach.

pub mod cascade;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod prediction;
pub mod synthgen;
pub mod training;

pub use error::{DceError, Result};
