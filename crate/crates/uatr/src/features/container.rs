//! The spectrogram tensor container.
//!
//! Fixed little-endian layout, bit-exact across platforms:
//!
//! ```text
//! magic    4 bytes  "ACSP"
//! version  u32
//! kind     u32      0 = stft_power, 1 = mel, 2 = cqt
//! frames   u32
//! bins     u32
//! data     frames * bins f32, row-major
//! frame_len_s  f64
//! hop_len_s    f64
//! sample_rate  u32
//! ```
//!
//! Values are stored as f32; in-memory spectrograms are f64, so a write
//! narrows precision once and a read widens losslessly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::FeatureError;
use crate::features::{FeatureKind, Spectrogram};

pub const CONTAINER_MAGIC: &[u8; 4] = b"ACSP";
pub const CONTAINER_VERSION: u32 = 1;

pub fn write_container(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<(), FeatureError> {
    let mut out = Vec::with_capacity(24 + spec.values.len() * 4 + 20);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&spec.kind.tag().to_le_bytes());
    out.extend_from_slice(&(spec.frames as u32).to_le_bytes());
    out.extend_from_slice(&(spec.bins as u32).to_le_bytes());
    for &v in &spec.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.extend_from_slice(&spec.frame_len_s.to_le_bytes());
    out.extend_from_slice(&spec.hop_len_s.to_le_bytes());
    out.extend_from_slice(&spec.sample_rate.to_le_bytes());

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Spectrogram, FeatureError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    let take = |at: usize, len: usize| -> Result<&[u8], FeatureError> {
        bytes
            .get(at..at + len)
            .ok_or_else(|| FeatureError::Container("file truncated".into()))
    };
    let read_u32 = |at: usize| -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(take(at, 4)?.try_into().unwrap()))
    };

    if take(0, 4)? != CONTAINER_MAGIC {
        return Err(FeatureError::Container("bad magic".into()));
    }
    let version = read_u32(4)?;
    if version != CONTAINER_VERSION {
        return Err(FeatureError::Container(format!(
            "unsupported version {version}"
        )));
    }
    let kind = FeatureKind::from_tag(read_u32(8)?)
        .ok_or_else(|| FeatureError::Container("unknown kind tag".into()))?;
    let frames = read_u32(12)? as usize;
    let bins = read_u32(16)? as usize;

    let data_len = frames * bins * 4;
    let data = take(20, data_len)?;
    let values: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    let meta = 20 + data_len;
    let frame_len_s = f64::from_le_bytes(take(meta, 8)?.try_into().unwrap());
    let hop_len_s = f64::from_le_bytes(take(meta + 8, 8)?.try_into().unwrap());
    let sample_rate = read_u32(meta + 16)?;
    if bytes.len() != meta + 20 {
        return Err(FeatureError::Container("trailing bytes".into()));
    }

    let bin_labels = match kind {
        FeatureKind::Mel => (0..bins).map(|m| m as f64).collect(),
        FeatureKind::StftPower => {
            let nfft = (frame_len_s * sample_rate as f64).round();
            (0..bins)
                .map(|k| k as f64 * sample_rate as f64 / nfft)
                .collect()
        }
        // CQT parameters are not stored; labels are reconstructed by the
        // caller when needed.
        FeatureKind::Cqt => (0..bins).map(|k| k as f64).collect(),
    };

    Ok(Spectrogram {
        values,
        frames,
        bins,
        kind,
        frame_len_s,
        hop_len_s,
        sample_rate,
        bin_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_spec() -> Spectrogram {
        Spectrogram {
            values: (0..24).map(|i| i as f64 * 0.5).collect(),
            frames: 4,
            bins: 6,
            kind: FeatureKind::Mel,
            frame_len_s: 0.05,
            hop_len_s: 0.025,
            sample_rate: 4000,
            bin_labels: (0..6).map(|m| m as f64).collect(),
        }
    }

    #[test]
    fn round_trip_preserves_everything_at_f32() {
        let spec = sample_spec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.acsp");
        write_container(&path, &spec).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.frames, 4);
        assert_eq!(back.bins, 6);
        assert_eq!(back.kind, FeatureKind::Mel);
        assert_eq!(back.frame_len_s, 0.05);
        assert_eq!(back.hop_len_s, 0.025);
        assert_eq!(back.sample_rate, 4000);
        for (a, b) in spec.values.iter().zip(&back.values) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn writes_are_byte_identical() {
        let spec = sample_spec();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.acsp"), dir.path().join("b.acsp"));
        write_container(&p1, &spec).unwrap();
        write_container(&p2, &spec).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let spec = sample_spec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.acsp");
        write_container(&path, &spec).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_container(&path),
            Err(FeatureError::Container(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = sample_spec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.acsp");
        write_container(&path, &spec).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_container(&path),
            Err(FeatureError::Container(_))
        ));
    }
}
