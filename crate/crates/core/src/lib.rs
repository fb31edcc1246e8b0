//! Nonparametric link prediction on sequences of graph snapshots.

pub mod baselines;
pub mod cli;
pub mod datacube;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod graph_store;
pub mod lsh;
pub mod predictor;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use graph_store::{GraphSequence, NodeId, Snapshot};
