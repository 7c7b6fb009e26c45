//! The experiment matrix: modes x prune x seeds over one shared split and
//! feature cache.

use crate::corpus::{AudioClip, DatasetSplit, Segment};
use crate::error::TrainError;
use crate::trainer::{train, FeatureCache, MatrixSection, RunArtifacts, TrainConfig, TrainMode};

/// Outcome of one matrix cell. Failures mark the cell without aborting
/// sibling cells.
pub struct CellResult {
    pub mode: TrainMode,
    pub prune: bool,
    pub seed_index: u64,
    pub outcome: Result<RunArtifacts, TrainError>,
}

/// One (mode, prune) row of the summary table.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub mode: TrainMode,
    pub prune: bool,
    pub n_runs: usize,
    pub n_failed: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub sample_passes_mean: f64,
    /// `1 - passes(prune) / passes(no-prune)` for the same mode, as a
    /// percentage; only on prune rows with a prune-off twin.
    pub reduction_pct: Option<f64>,
    pub wall_time_mean_s: f64,
}

pub struct MatrixSummary {
    pub rows: Vec<SummaryRow>,
}

impl MatrixSummary {
    /// Aligned text table, one row per (mode, prune).
    pub fn table_text(&self) -> String {
        let mut out = String::from(
            "mode        prune  acc_mean  acc_std  passes    reduction  wall_s\n",
        );
        for r in &self.rows {
            let reduction = r
                .reduction_pct
                .map(|p| format!("{p:.1}%"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<11} {:<6} {:<9.4} {:<8.4} {:<9.1} {:<10} {:.1}\n",
                r.mode.name(),
                if r.prune { "on" } else { "off" },
                r.accuracy_mean,
                r.accuracy_std,
                r.sample_passes_mean,
                reduction,
                r.wall_time_mean_s
            ));
        }
        out
    }
}

/// Runs every cell of the matrix. Cells share the split and feature cache;
/// the i-th seed repetition offsets all four named seed streams by i.
pub fn run_matrix(
    base: &TrainConfig,
    matrix: &MatrixSection,
    clips: &[AudioClip],
    segments: &[Segment],
    split: &DatasetSplit,
    cache: &FeatureCache,
) -> (Vec<CellResult>, MatrixSummary) {
    let mut cells = Vec::new();
    for &mode in &matrix.modes {
        for &prune in &matrix.prune {
            for seed_index in 0..matrix.n_seeds {
                let mut config = base.clone();
                config.mode = mode;
                config.prune = prune;
                config.seeds = base.seeds.offset(seed_index);
                let outcome =
                    train(&config, clips, segments, split, cache).map(|run| run.artifacts);
                if let Err(e) = &outcome {
                    log::warn!(
                        "cell ({}, prune={prune}, seed {seed_index}) failed: {e}",
                        mode.name()
                    );
                }
                cells.push(CellResult {
                    mode,
                    prune,
                    seed_index,
                    outcome,
                });
            }
        }
    }
    let summary = summarize(&cells, matrix);
    (cells, summary)
}

fn summarize(cells: &[CellResult], matrix: &MatrixSection) -> MatrixSummary {
    let stats = |mode: TrainMode, prune: bool| -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
        let mut accs = Vec::new();
        let mut passes = Vec::new();
        let mut walls = Vec::new();
        let mut failed = 0usize;
        for c in cells {
            if c.mode == mode && c.prune == prune {
                match &c.outcome {
                    Ok(a) => {
                        accs.push(a.accuracy);
                        passes.push(a.sample_passes as f64);
                        walls.push(a.wall_time_s);
                    }
                    Err(_) => failed += 1,
                }
            }
        }
        (accs, passes, walls, failed)
    };

    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let std = |v: &[f64]| {
        if v.len() < 2 {
            0.0
        } else {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
        }
    };

    let mut rows = Vec::new();
    for &mode in &matrix.modes {
        for &prune in &matrix.prune {
            let (accs, passes, walls, failed) = stats(mode, prune);
            let reduction_pct = if prune && matrix.prune.contains(&false) {
                let (_, off_passes, _, _) = stats(mode, false);
                if off_passes.is_empty() || passes.is_empty() {
                    None
                } else {
                    Some((1.0 - mean(&passes) / mean(&off_passes)) * 100.0)
                }
            } else {
                None
            };
            rows.push(SummaryRow {
                mode,
                prune,
                n_runs: accs.len() + failed,
                n_failed: failed,
                accuracy_mean: mean(&accs),
                accuracy_std: std(&accs),
                sample_passes_mean: mean(&passes),
                reduction_pct,
                wall_time_mean_s: mean(&walls),
            });
        }
    }
    MatrixSummary { rows }
}
