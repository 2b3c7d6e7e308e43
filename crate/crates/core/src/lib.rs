//! Graph structure self-contrasting (GSSC).
//!
//! An MLP-only node classifier. Graph structure never enters the forward
//! pass; it only shapes the supervision signal through a contrastive
//! smoothness loss computed over a learned, sparsified subgraph. Training
//! alternates between the MLP backbone (lower level) and the sparsifier
//! (upper level, maximizing subgraph homophily under pseudo-labels).
//!
//! Module map:
//! - [`graph`]: graph data model, on-disk format, SBM generation, corruption.
//! - [`nn`]: dense kernels, the MLP backbone, heads, gradient checking,
//!   optimizers and checkpoints.
//! - [`sparsifier`]: edge probabilities, fusion and Gumbel subgraph sampling.
//! - [`contrast`]: edge batches, negative sampling and the self-contrasting losses.
//! - [`trainer`]: bi-level training loop, evaluation, metrics, latency bench.
//! - [`study`]: correlation and training-evolution experiments.

pub mod contrast;
pub mod error;
pub mod graph;
pub mod nn;
pub mod sparsifier;
pub mod study;
pub mod trainer;

pub use contrast::{EdgeBatch, LossReport};
pub use error::{Error, Result};
pub use graph::{EdgeNoiseSplit, Graph, Homophily, NoiseKind, NoiseSpec, SbmParams, Splits};
pub use nn::{Backbone, BackboneGrad, ForwardMode};
pub use sparsifier::{SparsifiedSubgraph, Sparsifier};
pub use trainer::{MetricsRecord, ObjectiveMode, OptimizerKind, TrainConfig, TrainOutcome};
