//! Fixed-length windowing of clips into training segments.

use crate::corpus::{AudioClip, CorpusEntry, Segment};
use crate::error::CorpusError;

/// Default window length in seconds.
pub const DEFAULT_SEG_SECONDS: f64 = 30.0;
/// Default hop between window starts in seconds.
pub const DEFAULT_HOP_SECONDS: f64 = 15.0;

/// Cuts one clip into overlapping windows.
///
/// Yields `floor((T - seg) / hop) + 1` segments for clip duration `T >= seg`,
/// otherwise none (short clips are logged and skipped, never padded).
pub fn segment_clip(
    clip: &AudioClip,
    clip_index: usize,
    seg_seconds: f64,
    hop_seconds: f64,
    dup_group: Option<u32>,
) -> Result<Vec<Segment>, CorpusError> {
    if seg_seconds <= 0.0 {
        return Err(CorpusError::Parameter {
            field: "seg_seconds".into(),
            reason: "must be positive".into(),
        });
    }
    if hop_seconds <= 0.0 || hop_seconds > seg_seconds {
        return Err(CorpusError::Parameter {
            field: "hop_seconds".into(),
            reason: "must satisfy 0 < hop <= seg".into(),
        });
    }

    let fs = clip.sample_rate as f64;
    let seg = (seg_seconds * fs).round() as usize;
    let hop = (hop_seconds * fs).round() as usize;
    let n = clip.samples.len();

    if seg == 0 || hop == 0 {
        return Err(CorpusError::Parameter {
            field: "seg_seconds".into(),
            reason: "window rounds to zero samples at this rate".into(),
        });
    }
    if n < seg {
        log::warn!(
            "clip {} is shorter than one window ({:.1}s < {:.1}s); no segments",
            clip.source_id,
            clip.duration_s(),
            seg_seconds
        );
        return Ok(Vec::new());
    }

    let count = (n - seg) / hop + 1;
    Ok((0..count)
        .map(|i| Segment {
            clip: clip_index,
            start: i * hop,
            length: seg,
            label: clip.label,
            dup_group,
        })
        .collect())
}

/// Segments every clip of a corpus, carrying duplicate-group ground truth through.
pub fn segment_corpus(
    entries: &[CorpusEntry],
    seg_seconds: f64,
    hop_seconds: f64,
) -> Result<Vec<Segment>, CorpusError> {
    let mut out = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        out.extend(segment_clip(&e.clip, i, seg_seconds, hop_seconds, e.dup_group)?);
    }
    Ok(out)
}
