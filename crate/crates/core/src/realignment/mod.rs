//! Contrastive realignment of embeddings with an optional downstream task,
//! at a scale that runs on a laptop in seconds.

pub mod data;
pub mod loss;
pub mod optim;
pub mod task;
pub mod trainer;

use thiserror::Error;

use crate::alignment_eval::EvalError;

#[derive(Debug, Error)]
pub enum RealignError {
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("batch has no translated pairs")]
    EmptyPairList,
    #[error("vector {0} of the batch is zero")]
    ZeroVector(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("every batch stream is empty")]
    AllStreamsEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub use data::{interleave, synth_bilingual, SynthBilingual, SynthConfig};
pub use loss::{contrastive_grad, contrastive_loss, contrastive_loss_grad, RealignBatch};
pub use optim::{Adam, AdamConfig, LinearSchedule};
pub use task::{task_loss_grad, ToyTaskHead};
pub use trainer::{joint_step, train_realign_demo, TrainMode, TrainState, TrainerConfig, Trajectory};
