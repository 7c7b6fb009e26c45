//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors from corpus ingestion, synthesis, segmentation and splitting.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("unsupported wav encoding in {path}: {reason}")]
    Unsupported { path: String, reason: String },
    #[error("wav file {path} contains no audio data")]
    EmptyInput { path: String },
    #[error("invalid parameter {field}: {reason}")]
    Parameter { field: String, reason: String },
    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

/// Errors from spectrogram extraction and the tensor container format.
#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment of {got} samples is shorter than one frame ({need} samples)")]
    TooShort { got: usize, need: usize },
    #[error("invalid parameter {field}: {reason}")]
    Parameter { field: String, reason: String },
    #[error("non-finite value produced in {stage}")]
    NonFinite { stage: String },
    #[error("container i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed tensor container: {0}")]
    Container(String),
}

/// Errors from tensor kernels, the model, losses and the optimizer.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: String, detail: String },
    #[error("non-finite value detected in {op}")]
    NonFinite { op: String },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid parameter {field}: {reason}")]
    Parameter { field: String, reason: String },
    #[error("checkpoint i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
}

/// Errors from perturbation generation.
#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("cannot define snr for silent input (zero signal power)")]
    SilentInput,
    #[error("invalid parameter {field}: {reason}")]
    Parameter { field: String, reason: String },
}

/// Errors from the training orchestrator.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("numeric guard tripped at epoch {epoch}, batch {batch}: {source}")]
    NumericGuard {
        epoch: usize,
        batch: usize,
        #[source]
        source: NnError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("invalid configuration {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("artifact i/o error: {0}")]
    Io(#[from] std::io::Error),
}
