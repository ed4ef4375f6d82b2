//! Loss, optimizer, schedule, metrics, checkpoints and the training loop.

pub mod checkpoint;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod trainer;

pub use checkpoint::{read_checkpoint_header, Checkpoint, CheckpointHeader, TrainState};
pub use loss::{cross_entropy, cross_entropy_op, softmax_rows};
pub use metrics::{accuracy, binary_auc, macro_auc, MetricsReport};
pub use optim::{Adam, TrainConfig};
pub use trainer::{evaluate, train, train_step, Dataset, TrainOutcome};
