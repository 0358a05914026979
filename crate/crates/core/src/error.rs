use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("duplicate edge between nodes {0} and {1}")]
    DuplicateEdge(u32, u32),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("simulation diverged at t = {time:.4} s (|x|_inf = {norm:e})")]
    Divergence { time: f64, norm: f64 },

    #[error("backward pass requested before a forward evaluation recorded node {0}")]
    BackwardBeforeForward(usize),

    #[error("rollout left the admissible state region at step {step}")]
    RolloutFailed { step: usize },

    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAborted { epoch: usize, reason: String },

    #[error("no trial completed ({pruned} pruned, {failed} failed)")]
    NoCompletedTrial { pruned: usize, failed: usize },

    #[error("missing artifact: expected {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
