//! Tab-separated manifest and segment-index files.
//!
//! Manifest: one record per clip — `path  label  source_id  dup_group`
//! (dup_group empty for real recordings). Segment index: one record per
//! segment — `clip  start  length  label  dup_group`.

use std::path::Path;

use crate::corpus::Segment;
use crate::error::CorpusError;

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub source_id: String,
    pub dup_group: Option<u32>,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> std::io::Result<()> {
    let mut out = String::from("path\tlabel\tsource_id\tdup_group\n");
    for e in entries {
        let dup = e.dup_group.map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!("{}\t{}\t{}\t{}\n", e.path, e.label, e.source_id, dup));
    }
    std::fs::write(path, out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with("path\t") {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(CorpusError::Manifest {
                line: i + 1,
                reason: format!("expected at least 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let label = fields[1].parse().map_err(|_| CorpusError::Manifest {
            line: i + 1,
            reason: format!("label '{}' is not an integer", fields[1]),
        })?;
        let dup_group = match fields.get(3).copied().unwrap_or("") {
            "" => None,
            s => Some(s.parse().map_err(|_| CorpusError::Manifest {
                line: i + 1,
                reason: format!("dup_group '{s}' is not an integer"),
            })?),
        };
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            label,
            source_id: fields[2].to_string(),
            dup_group,
        });
    }
    Ok(entries)
}

pub fn write_segment_index(path: impl AsRef<Path>, segments: &[Segment]) -> std::io::Result<()> {
    let mut out = String::from("clip\tstart\tlength\tlabel\tdup_group\n");
    for s in segments {
        let dup = s.dup_group.map(|g| g.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.clip, s.start, s.length, s.label, dup
        ));
    }
    std::fs::write(path, out)
}
