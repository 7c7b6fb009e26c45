//! Training configuration with full defaults.
//!
//! Every field has a default so a partial TOML file works; the CLI's
//! `--print-config` dumps the complete effective configuration.

use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::features::FeatureKind;
use crate::smoothreg::{PerturbKind, PerturbSpec};

/// Which objective the trainer assembles per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Cross-entropy on raw segments only.
    Baseline,
    /// Noisy companions appended to the cross-entropy batch as extra samples.
    ManualAug,
    /// Raw-only cross-entropy plus the symmetric KL regularizer on the
    /// raw/noisy logit pairs.
    SmoothReg,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::ManualAug => "manual_aug",
            TrainMode::SmoothReg => "smooth_reg",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "aug" | "manual_aug" => Ok(TrainMode::ManualAug),
            "smooth" | "smooth_reg" => Ok(TrainMode::SmoothReg),
            other => Err(format!("unknown mode '{other}' (expected baseline|aug|smooth)")),
        }
    }
}

/// The four named RNG streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    /// Shuffling of the training set each epoch.
    pub data: u64,
    /// Parameter initialization.
    pub init: u64,
    /// Pruning tie-breaks.
    pub prune: u64,
    /// Noisy-companion draws.
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            init: 2,
            prune: 3,
            noise: 4,
        }
    }
}

impl Seeds {
    /// Seeds for the i-th repetition of a matrix cell.
    pub fn offset(&self, i: u64) -> Self {
        Self {
            data: self.data.wrapping_add(i),
            init: self.init.wrapping_add(i),
            prune: self.prune.wrapping_add(i),
            noise: self.noise.wrapping_add(i),
        }
    }
}

/// Model architecture knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub stage_channels: Vec<usize>,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub prune_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            stage_channels: vec![16, 32, 64],
            embed_dim: 64,
            n_heads: 4,
            prune_dim: 16,
        }
    }
}

/// Perturbation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSection {
    pub snr_db_low: f64,
    pub snr_db_high: f64,
    pub kind: PerturbKind,
    pub redraw: bool,
    /// Draw one SNR per sample (true) or one per epoch shared by all
    /// samples (false).
    pub per_sample_snr: bool,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            snr_db_low: 5.0,
            snr_db_high: 30.0,
            kind: PerturbKind::GaussianWhite,
            redraw: true,
            per_sample_snr: true,
        }
    }
}

impl PerturbSection {
    pub fn to_spec(&self) -> PerturbSpec {
        PerturbSpec {
            snr_db_range: (self.snr_db_low, self.snr_db_high),
            kind: self.kind,
            redraw: self.redraw,
        }
    }
}

/// Experiment-matrix request: modes x prune x seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixSection {
    pub modes: Vec<TrainMode>,
    pub prune: Vec<bool>,
    pub n_seeds: u64,
}

impl Default for MatrixSection {
    fn default() -> Self {
        Self {
            modes: vec![TrainMode::Baseline, TrainMode::ManualAug, TrainMode::SmoothReg],
            prune: vec![false, true],
            n_seeds: 5,
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    // Features
    pub feature: String,
    pub frame_len_s: f64,
    pub hop_len_s: f64,
    pub seg_seconds: f64,
    pub hop_seconds: f64,
    pub n_mels: usize,
    pub mel_fmin_hz: f64,
    pub cqt_bins_per_octave: usize,
    pub cqt_fmin_hz: f64,

    // Objective
    pub mode: TrainMode,
    pub prune: bool,
    pub alpha: f64,
    pub epsilon: f64,
    pub tau: usize,
    pub patience: usize,
    /// Compare score pairs by min of both cross-entropy directions.
    pub symmetric_pairwise: bool,

    // Optimization
    pub lr: f64,
    pub warmup_epochs: f64,
    pub max_epoch: usize,
    pub batch_size: usize,

    // Split
    pub split_ratios: [f64; 3],

    pub seeds: Seeds,
    pub model: ModelSection,
    pub perturb: PerturbSection,
    pub matrix: Option<MatrixSection>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            feature: "mel".into(),
            frame_len_s: crate::features::DEFAULT_FRAME_LEN_S,
            hop_len_s: crate::features::DEFAULT_HOP_LEN_S,
            seg_seconds: crate::corpus::DEFAULT_SEG_SECONDS,
            hop_seconds: crate::corpus::DEFAULT_HOP_SECONDS,
            n_mels: crate::features::DEFAULT_N_MELS,
            mel_fmin_hz: 0.0,
            cqt_bins_per_octave: 12,
            cqt_fmin_hz: 50.0,
            mode: TrainMode::Baseline,
            prune: false,
            alpha: 2.0,
            epsilon: crate::pruning::DEFAULT_EPSILON,
            tau: crate::pruning::DEFAULT_TAU,
            patience: crate::pruning::DEFAULT_PATIENCE,
            symmetric_pairwise: false,
            lr: 5e-4,
            warmup_epochs: 5.0,
            max_epoch: 100,
            batch_size: 16,
            split_ratios: [0.7, 0.1, 0.2],
            seeds: Seeds::default(),
            model: ModelSection::default(),
            perturb: PerturbSection::default(),
            matrix: None,
        }
    }
}

impl TrainConfig {
    pub fn feature_kind(&self) -> Result<FeatureKind, TrainError> {
        self.feature.parse().map_err(|reason| TrainError::Config {
            field: "feature".into(),
            reason,
        })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let check = |ok: bool, field: &str, reason: &str| -> Result<(), TrainError> {
            if ok {
                Ok(())
            } else {
                Err(TrainError::Config {
                    field: field.into(),
                    reason: reason.into(),
                })
            }
        };
        self.feature_kind()?;
        check(self.alpha >= 0.0, "alpha", "must be non-negative")?;
        check(self.epsilon > 0.0, "epsilon", "must be positive")?;
        check(self.lr > 0.0, "lr", "must be positive")?;
        check(self.batch_size >= 2, "batch_size", "need at least 2 for pairwise comparisons")?;
        check(self.max_epoch >= 1, "max_epoch", "must be at least 1")?;
        check(
            self.warmup_epochs > 0.0 && self.warmup_epochs < self.max_epoch as f64,
            "warmup_epochs",
            "must lie inside (0, max_epoch)",
        )?;
        check(
            self.perturb.snr_db_low <= self.perturb.snr_db_high,
            "perturb.snr_db_low",
            "must not exceed snr_db_high",
        )?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let config: Self = toml::from_str(text).map_err(|e| TrainError::Config {
            field: "config".into(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialized configuration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.epsilon, 1e-5);
        assert_eq!(c.tau, 10);
        assert_eq!(c.patience, 10);
        assert_eq!(c.lr, 5e-4);
        assert_eq!(c.warmup_epochs, 5.0);
        assert_eq!(c.max_epoch, 100);
        assert_eq!(c.frame_len_s, 0.050);
        assert_eq!(c.hop_len_s, 0.025);
        assert_eq!(c.seg_seconds, 30.0);
        assert_eq!(c.hop_seconds, 15.0);
        assert_eq!(c.n_mels, 300);
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.perturb.snr_db_low, 5.0);
        assert_eq!(c.perturb.snr_db_high, 30.0);
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let mut c = TrainConfig::default();
        c.mode = TrainMode::SmoothReg;
        c.prune = true;
        c.matrix = Some(MatrixSection::default());
        let text = c.to_toml();
        let back = TrainConfig::from_toml(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = TrainConfig::from_toml("alpha = 1.5\nmode = \"smooth_reg\"\n").unwrap();
        assert_eq!(c.alpha, 1.5);
        assert_eq!(c.mode, TrainMode::SmoothReg);
        assert_eq!(c.epsilon, 1e-5);
    }

    #[test]
    fn invalid_fields_are_rejected_with_the_field_name() {
        let err = TrainConfig::from_toml("alpha = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn digest_tracks_content() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.alpha = 3.0;
        assert_ne!(a.digest(), b.digest());
    }
}
