//! Training toolkit for underwater-acoustic target classification.
//!
//! The pipeline: ingest or synthesize ship-noise recordings, cut them into
//! overlapping windows, extract STFT / Mel / CQT spectrograms, and train a
//! compact residual classifier with attention pooling. Two mechanisms set
//! the toolkit apart from a plain classifier:
//!
//! - **Adaptive data pruning** — a linear pruning layer projects each
//!   sample's embedding to a low-dimensional score; when the pairwise
//!   cross-entropy of two in-batch scores falls below a threshold, one of
//!   the two segments is permanently excluded from training.
//! - **Smoothness-inducing regularization** — every epoch each training
//!   segment gets a freshly perturbed companion, and a symmetric KL term
//!   pulls the model's predictions on the pair together without ever
//!   letting the noisy sample touch the classification loss.
//!
//! See the guide under `book/` for a narrative walkthrough; its code
//! snippets compile and run as doc-tests of this crate.

pub mod cli;
pub mod corpus;
pub mod features;
pub mod nnkit;
pub mod pruning;
pub mod smoothreg;
pub mod trainer;
pub mod error;
pub mod rng;
