//! Corpus handling: WAV ingestion, synthetic ship-noise generation,
//! segmentation into fixed-length windows, and leakage-free dataset splits.

mod manifest;
mod segment;
mod split;
mod synth;
mod wav;

pub use manifest::{read_manifest, write_manifest, write_segment_index, ManifestEntry};
pub use segment::{segment_clip, segment_corpus, DEFAULT_HOP_SECONDS, DEFAULT_SEG_SECONDS};
pub use split::{split_dataset, DatasetSplit};
pub use synth::{make_synth_corpus, synth_clip, SynthClassSpec, SynthCorpusConfig};
pub use wav::{load_wav, write_wav_16bit};

use crate::error::CorpusError;

/// A labeled mono waveform with its sample rate and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Amplitude samples, nominal range [-1, 1].
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub sample_rate: u32,
    /// Class id in `0..n_classes`.
    pub label: usize,
    /// Opaque recording identifier; splits never separate segments of one source.
    pub source_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        label: usize,
        source_id: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        if samples.is_empty() {
            return Err(CorpusError::Parameter {
                field: "samples".into(),
                reason: "clip must contain at least one sample".into(),
            });
        }
        if sample_rate == 0 {
            return Err(CorpusError::Parameter {
                field: "sample_rate".into(),
                reason: "sample rate must be positive".into(),
            });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(CorpusError::Parameter {
                field: "samples".into(),
                reason: "all samples must be finite".into(),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            label,
            source_id: source_id.into(),
        })
    }

    /// Duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A clip together with its duplicate-group ground truth (synthetic corpora only).
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub clip: AudioClip,
    /// Ground-truth duplicate group; singleton groups mark unique clips.
    pub dup_group: Option<u32>,
}

/// A fixed-length window reference into a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Index of the clip in the corpus clip list.
    pub clip: usize,
    /// Start offset in samples.
    pub start: usize,
    /// Window length in samples.
    pub length: usize,
    /// Class id, always equal to the clip's label.
    pub label: usize,
    /// Ground-truth duplicate group (synthetic corpora only).
    pub dup_group: Option<u32>,
}

impl Segment {
    /// The waveform slice this segment refers to.
    pub fn waveform<'a>(&self, clips: &'a [AudioClip]) -> &'a [f64] {
        &clips[self.clip].samples[self.start..self.start + self.length]
    }
}
