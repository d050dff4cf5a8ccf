//! Hybrid CNN-BiLSTM multi-output estimator: architecture, weighted loss,
//! training loop and evaluation.
//!
//! Input windows pass through two convolution → batch norm → ReLU → max-pool
//! blocks, then a bidirectional LSTM whose final states feed a dropout layer,
//! a shared dense layer and three heads: displacement (tanh), speed logits and
//! direction logits.

mod checkpoint;
mod config;
mod loss;
mod metrics;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{Backbone, ConvBlock, ModelConfig, TaskWeights, WEIGHT_BOUNDS};
pub use loss::{batch_loss, loss_ce, loss_l1, loss_total, BatchLoss};
pub use metrics::{argmax, fitness, EvalVector, Metrics, Prediction};
pub use model::{Model, OutputGrads, Outputs, Pass, StateEstimate, Tape};
pub use train::{
    assemble_batch, evaluate, predict, train, train_from, train_observed, train_step, EpochMetrics, EpochRecord, TrainConfig,
    TrainOutcome, TrainStatus,
};
