//! The recurrent speed regressor.
//!
//! Architecture: LSTM → bidirectional LSTM → bidirectional LSTM → dense,
//! many-to-many over 20-step windows. Forward-direction states are carried
//! from window to window per lane; backward directions start from zero in
//! every window. Gradients are truncated at window edges.

mod config;
mod io;
mod loss;
pub(crate) mod lstm;
mod model;
mod optim;
mod stream;
mod train;

pub use config::{lstm_param_count, ModelConfig};
pub use io::{
    load_weights, load_weights_expecting, save_weights, weights_from_bytes, weights_to_bytes,
    WEIGHTS_MAGIC,
};
pub use loss::{masked_mse, masked_rmse};
pub use lstm::{DirTrace, LstmDir};
pub use model::{Gradients, LaneState, RecurrentState, SpeedModel, StepOutput};
pub use optim::Adam;
pub use stream::{predict_stream, SpeedStream};
pub use train::{batch_losses, evaluate, train, train_with, EpochRecord, History, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset has no training windows")]
    EmptyDataset,
    #[error("stream has {0} samples, need at least one window")]
    StreamTooShort(usize),
    #[error("weight file I/O: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("weight file checksum mismatch")]
    ChecksumMismatch,
    #[error("weight file has config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("weight file malformed: {0}")]
    InvalidFormat(String),
    #[error("training diverged in epoch {epoch}: loss non-finite or far above the label scale")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
}
