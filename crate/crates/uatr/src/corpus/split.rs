//! Leakage-free dataset splitting.
//!
//! Splits are assigned per recording (source_id), never per segment:
//! overlapped windows from one recording are near-duplicates by
//! construction and would leak across segment-level splits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::corpus::{AudioClip, Segment};
use crate::error::CorpusError;
use crate::rng;

/// Disjoint train/val/test segment lists (indices into the segment slice).
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: [f64; 3],
    /// Stratification warnings (classes that could not populate every split).
    pub warnings: Vec<String>,
}

/// Assigns sources to splits, stratified by class, deterministic under `seed`.
///
/// Classes with a single source put it in train and record a warning;
/// classes with two sources populate train and test only.
pub fn split_dataset(
    clips: &[AudioClip],
    segments: &[Segment],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if ratios.iter().any(|&r| r <= 0.0) {
        return Err(CorpusError::Parameter {
            field: "ratios".into(),
            reason: "all ratios must be positive".into(),
        });
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Parameter {
            field: "ratios".into(),
            reason: "ratios must sum to 1".into(),
        });
    }

    // class -> ordered distinct sources (BTreeMap for a deterministic base order).
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for seg in segments {
        let clip = &clips[seg.clip];
        let sources = by_class.entry(seg.label).or_default();
        if !sources.contains(&clip.source_id.as_str()) {
            sources.push(&clip.source_id);
        }
    }

    let mut split_rng = rng::stream("split", seed);
    let mut assignment: BTreeMap<&str, usize> = BTreeMap::new(); // source -> split index
    let mut warnings = Vec::new();

    for (class, mut sources) in by_class {
        sources.sort_unstable();
        sources.shuffle(&mut split_rng);
        let n = sources.len();

        let counts = match n {
            1 => {
                warnings.push(format!(
                    "class {class} has a single source; all segments assigned to train"
                ));
                [1, 0, 0]
            }
            2 => {
                warnings.push(format!(
                    "class {class} has two sources; validation split left empty"
                ));
                [1, 0, 1]
            }
            _ => {
                // One source per split guaranteed, remainder by largest deficit.
                let mut counts = [1usize, 1, 1];
                for _ in 0..n - 3 {
                    let deficits: Vec<f64> = (0..3)
                        .map(|i| ratios[i] * n as f64 - counts[i] as f64)
                        .collect();
                    let best = (0..3)
                        .max_by(|&a, &b| deficits[a].partial_cmp(&deficits[b]).unwrap())
                        .unwrap();
                    counts[best] += 1;
                }
                counts
            }
        };

        let mut iter = sources.into_iter();
        for (split, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                if let Some(src) = iter.next() {
                    assignment.insert(src, split);
                }
            }
        }
    }

    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        ratios,
        warnings,
    };
    for (i, seg) in segments.iter().enumerate() {
        let source = clips[seg.clip].source_id.as_str();
        match assignment.get(source) {
            Some(0) => split.train.push(i),
            Some(1) => split.val.push(i),
            Some(2) => split.test.push(i),
            _ => unreachable!("every segment's source was assigned"),
        }
    }
    Ok(split)
}
