//! Softmax policies and the pg, vsrl, eps-vsrl and plpg trainers.
//!
//! All trainers use a Monte-Carlo return-to-go with an optional baseline and
//! average the per-step gradient over the batch. plpg differentiates through
//! the shield and adds `alpha * grad log P(safe | s)`; by default the safety
//! term uses the base policy's safety `P_pi(safe | s)`, see [`SafetyTarget`].

mod checkpoint;
mod config;
mod policy;
mod trainer;
mod update;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use config::{Algorithm, Baseline, SafetyTarget, TrainerConfig};
pub use policy::{sample_index, softmax, softmax_backward, Forward, Observation, PolicyKind, PolicyParams};
pub use trainer::{default_shield, offsets_from_sensors, EpisodeSummary, TrainStats, Trainer};
pub use update::{
    batch_gradient, discounted_returns, pg_update, plpg_step_gradient, plpg_step_objective, plpg_update, returns_to_go,
    update, vsrl_update, BaselineTracker, Episode, EpisodeBatch, StepRecord, UpdateStats, LOG_CLAMP,
};

use crate::envs::EnvError;
use crate::shield::ShieldError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("policy parameters are not finite")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
}
