//! Joint training: objective and gradients, Adam, checkpoints, the epoch
//! loop, and a finite-difference gradient audit.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod objective;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use gradcheck::{
    gradcheck, gradcheck_with, micro_problem, relative_error, relu_margin, GradcheckReport,
    TensorCheck, GRADCHECK_STEP, GRADCHECK_TOLERANCE, KINK_MARGIN,
};
pub use objective::{gradients, joint_loss, mi_loss_mean, GradientSet, LossParts};
pub use trainer::{train, train_prepared, EpochLog, TrainOutcome};
