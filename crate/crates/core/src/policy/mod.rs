//! Recurrent Gaussian policy trained with REINFORCE.

pub mod adam;
pub mod lstm;
pub mod reinforce;

use thiserror::Error;

use crate::controls::ControlError;
use crate::lindblad::LindbladError;

pub use adam::{Adam, AdamConfig};
pub use lstm::{Architecture, ForwardCache, ParamBlock, PolicyNetwork, N_OUTPUTS};
pub use reinforce::{
    reinforce_loss, rollout_reward, sample_actions, sink_free_transfer, sink_rate_for, train,
    train_with_progress, EpochStats, LearningCurve, ReinforceLoss, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("architecture needs at least one unit per layer")]
    InvalidArchitecture,
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("sigma must be positive and finite")]
    InvalidSigma,
    #[error("non-finite input or parameter")]
    NonFinite,
    #[error("network input times must be strictly increasing")]
    TimesNotIncreasing,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error(transparent)]
    Simulation(#[from] LindbladError),
    #[error(transparent)]
    Control(#[from] ControlError),
}
