//! Time-frequency feature extraction: STFT power, Mel and CQT spectrograms,
//! normalization, and the on-disk tensor container.

mod container;
mod cqt;
mod mel;
mod normalize;
mod stft;

pub use container::{read_container, write_container, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use cqt::{cqt_spectrogram, default_cqt_bins, CqtParams};
pub use mel::{mel_filterbank, mel_spectrogram, hz_to_mel, mel_to_hz};
pub use normalize::normalize;
pub use stft::{dft_full, hann_window, stft_power};

/// Default analysis frame length in seconds.
pub const DEFAULT_FRAME_LEN_S: f64 = 0.050;
/// Default hop between frames in seconds.
pub const DEFAULT_HOP_LEN_S: f64 = 0.025;
/// Default number of Mel filter banks.
pub const DEFAULT_N_MELS: usize = 300;

/// Which transform produced a spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    StftPower,
    Mel,
    Cqt,
}

impl FeatureKind {
    pub fn tag(self) -> u32 {
        match self {
            FeatureKind::StftPower => 0,
            FeatureKind::Mel => 1,
            FeatureKind::Cqt => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(FeatureKind::StftPower),
            1 => Some(FeatureKind::Mel),
            2 => Some(FeatureKind::Cqt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::StftPower => "stft",
            FeatureKind::Mel => "mel",
            FeatureKind::Cqt => "cqt",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stft" => Ok(FeatureKind::StftPower),
            "mel" => Ok(FeatureKind::Mel),
            "cqt" => Ok(FeatureKind::Cqt),
            other => Err(format!("unknown feature kind '{other}' (expected stft|mel|cqt)")),
        }
    }
}

/// A frames x bins real matrix with its framing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Row-major values, `frames * bins` long.
    pub values: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub kind: FeatureKind,
    pub frame_len_s: f64,
    pub hop_len_s: f64,
    pub sample_rate: u32,
    /// Bin center frequencies in Hz (STFT/CQT) or Mel-band index (Mel).
    pub bin_labels: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }
}
