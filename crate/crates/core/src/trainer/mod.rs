//! Bi-level training: the backbone learns on sampled subgraphs, the
//! sparsifier learns to make those subgraphs homophilous.

mod config;
mod eval;
mod metrics;
mod objective;
mod train;

pub use crate::nn::OptimizerKind;
pub use config::{ObjectiveMode, TrainConfig};
pub use eval::{bench_latency, evaluate, LatencyStats, Split};
pub use metrics::{read_jsonl, write_jsonl, MetricsRecord, Phase};
pub use objective::{homophily_objective, Relaxation};
pub use train::{
    lower_step, pseudo_labels, train, train_with, upper_step, BestModel, LowerOutcome, TrainOutcome,
    UpperOutcome,
};
