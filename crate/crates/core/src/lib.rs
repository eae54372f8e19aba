//! Graph contrastive learning with a meta-learned edge-reweighting augmenter.
//!
//! Modules, bottom up: [`autodiff`] (tape-based reverse mode with
//! second-order support), [`graph`] (TU datasets, features, batching,
//! splits), [`gnn`] (GIN encoder), [`augmenter`], [`losses`], [`train`]
//! (alternating contrast and meta steps), [`eval`] (linear probe protocol),
//! plus [`checkpoint`] and [`gradcheck`].

pub mod augmenter;
pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use eval::{EmbeddingTable, ProbeResult};
pub use gnn::{ModelDims, ModelParams};
pub use graph::{Dataset, GraphBatch};
pub use train::{Hyperparams, MetricsLog, Mode};
