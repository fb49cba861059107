//! Size-shift regularization for message-passing graph classifiers.
//!
//! Training graphs are coarsened ahead of time; during training the model is
//! penalized by the central moment discrepancy between the node embeddings
//! it produces for a graph and for the graph's coarsened versions. Models are
//! then evaluated on graphs much larger than any seen in training.

mod binio;
pub mod coarsen;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod seed;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod tudataset;

pub use error::{Error, Result};
