//! Token-swapping graph transformer for node classification.
//!
//! The crate is `no_std` and needs only `alloc`. It covers graph handling,
//! personalized-PageRank propagation, k-NN token tables with token swapping,
//! a small reverse-mode tensor engine, the transformer model with its
//! losses, and the training loop. File formats and the command-line driver
//! live in the companion `swapgt` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adjacency;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod propagation;
pub mod rng;
pub mod sbm;
pub mod split;
pub mod tokenizer;
pub mod train;

pub use adjacency::NormalizedAdjacency;
pub use error::{Error, Result};
pub use graph::{edge_homophily, EdgeReport, Graph};
pub use propagation::{ppr_propagate, PropagationConfig};
pub use sbm::{generate_sbm, SbmSpec};
pub use split::{make_split, Role, SplitAssignment, SplitKind};
pub use train::{run_experiment, train_one, TrainConfig, Variant};
