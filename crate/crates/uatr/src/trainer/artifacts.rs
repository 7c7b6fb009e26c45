//! Run artifacts and their on-disk emission.
//!
//! Everything written here is byte-deterministic for identical runs,
//! except `timing.txt`, which is informational and excluded from the
//! determinism contract.

use std::path::Path;

use crate::error::TrainError;

/// One row of the per-epoch curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub test_loss: f64,
    pub lr: f64,
    pub active_set_size: usize,
}

/// One prune event decorated with duplicate-group ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneLogRow {
    pub epoch: usize,
    pub kept: usize,
    pub pruned: usize,
    pub ce: f64,
    pub kept_dup: Option<u32>,
    pub pruned_dup: Option<u32>,
}

/// Everything a training run reports.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub curve: Vec<EpochRow>,
    /// Segment-level test accuracy of the selected model.
    pub accuracy: f64,
    /// Rows = true class, columns = prediction.
    pub confusion: Vec<Vec<usize>>,
    pub prune_log: Vec<PruneLogRow>,
    /// Cumulative (segment, epoch) training visits.
    pub sample_passes: u64,
    pub best_val_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Informational only; never part of deterministic output.
    pub wall_time_s: f64,
}

impl RunArtifacts {
    pub fn epochs_run(&self) -> usize {
        self.curve.len()
    }

    pub fn loss_curve_text(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\ttest_loss\tlr\tactive_set_size\n");
        for r in &self.curve {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.epoch, r.train_loss, r.val_loss, r.test_loss, r.lr, r.active_set_size
            ));
        }
        out
    }

    pub fn confusion_text(&self) -> String {
        let mut out = String::new();
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn prune_log_text(&self) -> String {
        let mut out = String::from("epoch\tkept\tpruned\tce\tkept_dup\tpruned_dup\n");
        for r in &self.prune_log {
            let kd = r.kept_dup.map(|g| g.to_string()).unwrap_or_default();
            let pd = r.pruned_dup.map(|g| g.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.epoch, r.kept, r.pruned, r.ce, kd, pd
            ));
        }
        out
    }

    pub fn metrics_text(&self) -> String {
        format!(
            "accuracy\t{}\nsample_passes\t{}\nepochs_run\t{}\nbest_val_epoch\t{}\nstopped_early\t{}\nprune_events\t{}\nprune_score_timing\tpre_update\n",
            self.accuracy,
            self.sample_passes,
            self.epochs_run(),
            self.best_val_epoch
                .map(|e| e.to_string())
                .unwrap_or_else(|| "none".into()),
            self.stopped_early,
            self.prune_log.len(),
        )
    }
}

/// Writes the deterministic artifact files plus the informational timing
/// file into `dir`.
pub fn write_run_artifacts(dir: impl AsRef<Path>, artifacts: &RunArtifacts) -> Result<(), TrainError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("loss_curve.tsv"), artifacts.loss_curve_text())?;
    std::fs::write(dir.join("confusion.tsv"), artifacts.confusion_text())?;
    std::fs::write(dir.join("prune_log.tsv"), artifacts.prune_log_text())?;
    std::fs::write(dir.join("metrics.tsv"), artifacts.metrics_text())?;
    std::fs::write(
        dir.join("timing.txt"),
        format!("wall_time_s\t{}\n", artifacts.wall_time_s),
    )?;
    Ok(())
}

/// Reads a loss-curve file back into rows.
pub fn read_loss_curve(path: impl AsRef<Path>) -> Result<Vec<EpochRow>, TrainError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(TrainError::Config {
                field: "loss_curve".into(),
                reason: format!("line {} has {} fields, expected 6", i + 1, fields.len()),
            });
        }
        let parse_f = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
        rows.push(EpochRow {
            epoch: fields[0].parse().unwrap_or(0),
            train_loss: parse_f(fields[1]),
            val_loss: parse_f(fields[2]),
            test_loss: parse_f(fields[3]),
            lr: parse_f(fields[4]),
            active_set_size: fields[5].parse().unwrap_or(0),
        });
    }
    Ok(rows)
}
