//! Model checkpoints.
//!
//! Layout (all little-endian): magic `"UCKP"`, version u32, 32-byte SHA-256
//! digest of the canonical architecture string, then every parameter blob
//! as f32 in declaration order. Loading refuses any digest mismatch, so a
//! checkpoint can never silently deserialize into a different architecture.
//! Optimizer moments are not persisted.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::NnError;
use crate::nnkit::model::{ModelConfig, ModelState};

const MAGIC: &[u8; 4] = b"UCKP";
const VERSION: u32 = 1;

fn config_digest(config: &ModelConfig) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(config.canonical().as_bytes());
    hasher.finalize().into()
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ModelState) -> Result<(), NnError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&config_digest(&model.config));
    for p in &model.params {
        for &v in &p.value.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads parameters into a freshly initialized state for `config`.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    config: ModelConfig,
) -> Result<ModelState, NnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    if bytes.len() < 40 || &bytes[0..4] != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    if bytes[8..40] != config_digest(&config) {
        return Err(NnError::Checkpoint(
            "architecture digest mismatch: checkpoint was written for a different config".into(),
        ));
    }

    let mut model = ModelState::init(config, 0)?;
    let mut at = 40usize;
    for p in &mut model.params {
        for slot in &mut p.value.data {
            let Some(raw) = bytes.get(at..at + 4) else {
                return Err(NnError::Checkpoint("parameter blob truncated".into()));
            };
            *slot = f32::from_le_bytes(raw.try_into().unwrap()) as f64;
            at += 4;
        }
    }
    if at != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes after parameters".into()));
    }
    model.step = 0;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::model::ModelConfig;

    #[test]
    fn save_load_round_trip_at_f32() {
        let model = ModelState::init(ModelConfig::tiny(3, 8), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uckp");
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path, ModelConfig::tiny(3, 8)).unwrap();
        for (a, b) in model.params.iter().zip(&back.params) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.value.data.iter().zip(&b.value.data) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn digest_mismatch_is_refused() {
        let model = ModelState::init(ModelConfig::tiny(3, 8), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uckp");
        save_checkpoint(&path, &model).unwrap();
        match load_checkpoint(&path, ModelConfig::tiny(4, 8)) {
            Err(NnError::Checkpoint(msg)) => assert!(msg.contains("digest")),
            other => panic!("expected digest rejection, got {other:?}"),
        }
    }
}
