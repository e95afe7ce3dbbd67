//! Contrastive retriever training.

mod batch;
mod data;
mod losses;
mod negatives;
pub mod gradcheck;
mod trainer;

pub use batch::{batch_loss, batch_loss_and_grad, kink_arguments, Batch, BceSlots, Corpus, Gradients, LossBreakdown, TripletSlots};
pub use data::*;
pub use losses::*;
pub use negatives::*;
pub use trainer::{split_indices, train, write_loss_csv, LossRow, Split, TrainOutcome};

use thiserror::Error;

use crate::encoder::EncoderError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("BCE loss needs at least one negative")]
    NoNegatives,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: u64,
        batch: usize,
        detail: String,
    },
    #[error("entity pool has no candidates for relation `{0}`")]
    EmptyPool(String),
    #[error("entity pool for relation `{relation}` only contains the original entity `{entity}`")]
    PoolOnlyContainsOriginal { relation: String, entity: String },
    #[error("checkpoint does not match the encoder being trained: {0}")]
    IncompatibleState(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
