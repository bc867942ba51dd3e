//! Losses, optimizer, synthetic data, the training loop and streaming
//! inference.

mod adam;
mod inference;
mod loss;
mod synthetic;
mod trainer;

pub use adam::{AdamConfig, LrSchedule, OptimizerState};
pub use inference::{sliding_window_infer, sliding_window_tracking, sliding_window_with, window_ranges};
pub use loss::{global_value, local_value, loss_global, loss_local, loss_total};
pub use synthetic::{
    make_synthetic_sequence, DatasetSpec, Pattern, SyntheticSequence, SyntheticSequenceSpec,
};
pub use trainer::{
    loss_csv, train, window_gradient, window_index, window_loss, LossRecord, TrainConfig, WindowGradient,
    WindowLoss, LOSS_CSV_HEADER,
};
