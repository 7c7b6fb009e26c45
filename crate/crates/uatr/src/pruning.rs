//! Adaptive data pruning.
//!
//! Each sample's pooled embedding passes through a linear pruning layer
//! whose softmax output is the pruning score. Within a batch, every
//! unordered score pair is compared by cross-entropy; a pair falling below
//! the threshold marks one member — chosen by coin flip — as permanently
//! excluded from training. Pruning stays disabled for the first warmup
//! epochs, and an early-stopping monitor guards against forgetting once
//! the training set starts shrinking.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::nnkit::{softmax_rows, Tensor};
use crate::rng;

/// Default warmup epochs before any pruning.
pub const DEFAULT_TAU: usize = 10;
/// Default pruning threshold; small enough to avoid aggressive pruning.
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Default early-stopping patience in epochs.
pub const DEFAULT_PATIENCE: usize = 10;
/// Floor under score entries before taking a log.
const SCORE_FLOOR: f64 = 1e-12;

/// A softmax-normalized pruning score for one segment.
#[derive(Debug, Clone)]
pub struct PruneScore {
    pub segment_id: usize,
    pub score: Vec<f64>,
}

/// Softmax scores for a batch of pruning-layer outputs.
pub fn prune_scores(prune_raw: &Tensor, segment_ids: &[usize]) -> Vec<PruneScore> {
    debug_assert_eq!(prune_raw.dims[0], segment_ids.len());
    softmax_rows(prune_raw)
        .into_iter()
        .zip(segment_ids)
        .map(|(score, &segment_id)| PruneScore { segment_id, score })
        .collect()
}

/// Cross-entropy `H(s_i, s_j) = -sum_k s_ik * log(max(s_jk, 1e-12))`.
///
/// `H(s_i, s_j) >= H(s_i, s_i)`, so values near zero require both scores
/// to be near-deterministic on the same coordinate.
pub fn pairwise_ce(s_i: &[f64], s_j: &[f64]) -> f64 {
    debug_assert_eq!(s_i.len(), s_j.len());
    -s_i.iter()
        .zip(s_j)
        .map(|(&a, &b)| a * b.max(SCORE_FLOOR).ln())
        .sum::<f64>()
}

/// One prune event, the unit of the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneRecord {
    pub epoch: usize,
    pub kept: usize,
    pub pruned: usize,
    pub ce: f64,
}

/// The set of trainable segments and everything pruned out of it.
#[derive(Debug, Clone)]
pub struct PruneState {
    active: BTreeSet<usize>,
    pruned: BTreeMap<usize, PruneRecord>,
    /// Warmup epochs during which no pruning happens.
    pub tau: usize,
    /// Pairwise cross-entropy threshold.
    pub epsilon: f64,
    /// Compare `min(H(s_i,s_j), H(s_j,s_i))` instead of `H(s_i,s_j)`.
    pub symmetric: bool,
    tie_break: ChaCha20Rng,
    log: Vec<PruneRecord>,
}

impl PruneState {
    pub fn new(training_ids: impl IntoIterator<Item = usize>, seed: u64) -> Self {
        Self {
            active: training_ids.into_iter().collect(),
            pruned: BTreeMap::new(),
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
            symmetric: false,
            tie_break: rng::stream("prune", seed),
            log: Vec::new(),
        }
    }

    pub fn with_thresholds(mut self, tau: usize, epsilon: f64) -> Self {
        self.tau = tau;
        self.epsilon = epsilon;
        self
    }

    pub fn active_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied()
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.contains(&id)
    }

    pub fn n_pruned(&self) -> usize {
        self.pruned.len()
    }

    /// Full audit log in prune order.
    pub fn log(&self) -> &[PruneRecord] {
        &self.log
    }

    /// Compares all score pairs of one batch and prunes below-threshold
    /// partners. Returns ids pruned by this call. No-op during warmup
    /// (`epoch <= tau`).
    ///
    /// Pairs are visited in batch order (i < j); a segment pruned earlier
    /// in the pass is skipped in later pairs, so any mutually matching
    /// group keeps at least one member.
    pub fn prune_batch(&mut self, scores: &[PruneScore], epoch: usize) -> Vec<usize> {
        if epoch <= self.tau {
            return Vec::new();
        }
        let mut newly_pruned = Vec::new();
        for i in 0..scores.len() {
            if !self.active.contains(&scores[i].segment_id) {
                continue;
            }
            for j in i + 1..scores.len() {
                let (si, sj) = (&scores[i], &scores[j]);
                if !self.active.contains(&si.segment_id) {
                    break; // i was pruned by an earlier pair in this pass
                }
                if !self.active.contains(&sj.segment_id) || si.segment_id == sj.segment_id {
                    continue;
                }
                let ce = if self.symmetric {
                    pairwise_ce(&si.score, &sj.score).min(pairwise_ce(&sj.score, &si.score))
                } else {
                    pairwise_ce(&si.score, &sj.score)
                };
                if ce < self.epsilon {
                    let prune_j = self.tie_break.gen_bool(0.5);
                    let (kept, victim) = if prune_j {
                        (si.segment_id, sj.segment_id)
                    } else {
                        (sj.segment_id, si.segment_id)
                    };
                    let record = PruneRecord {
                        epoch,
                        kept,
                        pruned: victim,
                        ce,
                    };
                    self.active.remove(&victim);
                    self.pruned.insert(victim, record.clone());
                    self.log.push(record);
                    newly_pruned.push(victim);
                }
            }
        }
        newly_pruned
    }
}

/// Decision returned by the early-stopping monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Terminates training once the validation loss stops improving.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    pub best_val_loss: Option<f64>,
    pub epochs_since_improve: usize,
    pub patience: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        Self {
            best_val_loss: None,
            epochs_since_improve: 0,
            patience,
        }
    }

    /// Strict decrease resets the counter; anything else (including a
    /// non-finite loss, which is logged and treated as no improvement)
    /// advances it. Signals `Stop` when the counter reaches the patience.
    pub fn update(&mut self, val_loss: f64) -> StopDecision {
        if !val_loss.is_finite() {
            log::warn!("non-finite validation loss treated as no improvement");
            self.epochs_since_improve += 1;
        } else {
            match self.best_val_loss {
                Some(best) if val_loss >= best => self.epochs_since_improve += 1,
                _ => {
                    self.best_val_loss = Some(val_loss);
                    self.epochs_since_improve = 0;
                }
            }
        }
        if self.epochs_since_improve >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
