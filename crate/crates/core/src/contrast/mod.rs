//! Structural self-contrasting: edge batches, negative sampling and losses.

mod batch;
mod loss;

pub use batch::{enumerate_batch, epoch_batches, sample_edge_batch, EdgeBatch, NegativeSampler};
pub(crate) use loss::accuracy_of;
pub use loss::{
    classification_loss, evaluate_batch, explicit_weight_loss, interpolate_augment, log_sum_exp_smoothness,
    smoothness_loss,
    BatchEvaluation, LossConfig, LossReport,
};
