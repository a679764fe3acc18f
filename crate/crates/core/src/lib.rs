//! Feature-sliced parallel GCN training.
//!
//! Node features are cut (or fused) into `p` narrow column slabs. Each slab is
//! handed to an independent GCN worker that sees the whole graph structure,
//! and the workers' output representations are concatenated on a master for
//! classification. Workers never talk to each other: the only transfers are the
//! scatter of inputs and the gather of representations (plus their gradients
//! on the way back).
//!
//! Module map:
//!
//! * [`graph`]: CSR adjacency, attributed graphs, dataset IO, synthetic graphs.
//! * [`tensor`]: dense matrices, seeded RNG streams, kernels with explicit gradients.
//! * [`slicing`]: slice strategy generation, feature slicing, feature fusion.
//! * [`nn`]: GCN layers, MLP heads, slice encoding, Adam, cosine schedule, parameter counts.
//! * [`engine`]: the threaded training orchestrator, evaluation metrics and reports.

pub mod engine;
pub mod error;
pub mod graph;
pub mod nn;
pub mod slicing;
pub mod tensor;

pub use error::{Error, Result};
