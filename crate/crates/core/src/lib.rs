//! Subgraph-oriented learnable augmentation for graph contrastive learning.
//!
//! Graphs are partitioned into densely connected subgraphs once, before
//! training. Two learnable view generators then pick one of five
//! augmentation strategies per subgraph through hard Gumbel-Softmax draws,
//! apply it, and assemble an augmented graph that stays connected to the
//! generator parameters in the computation record. A GIN encoder is trained
//! on the resulting view pairs with an NT-Xent objective plus a similarity
//! penalty that pushes the two generators apart.
//!
//! Module map:
//!
//! - [`autodiff`]: reverse-mode differentiation over dense `f64` arrays.
//! - [`graph`]: graphs, datasets, TUDataset ingestion, synthetic corpora, batching.
//! - [`partition`]: Louvain, Girvan–Newman, modularity, partition caches.
//! - [`encoder`]: GIN encoder with readouts and projection head.
//! - [`viewgen`]: strategy selector, augmentation operators and view assembler.
//! - [`losses`]: NT-Xent, view similarity and classification losses.
//! - [`train`]: Adam, training loops, linear probe, reports and checkpoints.
//! - [`cli`]: the command-line front end.

pub mod autodiff;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod losses;
pub mod partition;
pub mod rng;
pub mod train;
pub mod viewgen;

pub use error::{Error, Result};
