//! Minimal PCM WAV reader and writer.
//!
//! Supports 8/16/24/32-bit integer and 32-bit float PCM, mono or stereo.
//! Stereo is downmixed by channel mean. No resampling.

use std::io::Write;
use std::path::Path;

use crate::corpus::AudioClip;
use crate::error::CorpusError;

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> CorpusError {
    CorpusError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Loads a PCM WAV file as a mono clip with samples scaled to [-1, 1].
///
/// `label` and `source_id` are attached as-is; the sample rate comes from
/// the file header.
pub fn load_wav(
    path: impl AsRef<Path>,
    label: usize,
    source_id: impl Into<String>,
) -> Result<AudioClip, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let clip = decode_wav(&bytes, path)?;
    AudioClip::new(clip.0, clip.1, label, source_id)
}

/// Decodes WAV bytes into (mono samples, sample_rate).
fn decode_wav(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, u32), CorpusError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err(path, "missing RIFF/WAVE header"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;

    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body_start + 16 > bytes.len() {
                    return Err(format_err(path, "fmt chunk truncated"));
                }
                let audio_format = read_u16(bytes, body_start);
                let channels = read_u16(bytes, body_start + 2);
                let rate = read_u32(bytes, body_start + 4);
                let bits = read_u16(bytes, body_start + 14);
                fmt = Some((audio_format, channels, rate, bits));
            }
            b"data" => {
                if body_start + size > bytes.len() {
                    return Err(format_err(path, "data chunk truncated"));
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
    }

    let (audio_format, channels, rate, bits) =
        fmt.ok_or_else(|| format_err(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| format_err(path, "missing data chunk"))?;

    if rate == 0 {
        return Err(format_err(path, "sample rate is zero"));
    }
    if !(1..=2).contains(&channels) {
        return Err(CorpusError::Unsupported {
            path: path.display().to_string(),
            reason: format!("{channels} channels (only mono/stereo supported)"),
        });
    }
    let bytes_per_sample = match (audio_format, bits) {
        (FMT_PCM, 8) => 1,
        (FMT_PCM, 16) => 2,
        (FMT_PCM, 24) => 3,
        (FMT_PCM, 32) => 4,
        (FMT_IEEE_FLOAT, 32) => 4,
        _ => {
            return Err(CorpusError::Unsupported {
                path: path.display().to_string(),
                reason: format!("format tag {audio_format} with {bits} bits per sample"),
            })
        }
    };

    if data.is_empty() {
        return Err(CorpusError::EmptyInput {
            path: path.display().to_string(),
        });
    }
    let frame_bytes = bytes_per_sample * channels as usize;
    if data.len() % frame_bytes != 0 {
        return Err(format_err(path, "data chunk is not a whole number of frames"));
    }

    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f64;
        for c in 0..channels as usize {
            let at = f * frame_bytes + c * bytes_per_sample;
            let v = match (audio_format, bits) {
                (FMT_PCM, 8) => (data[at] as f64 - 128.0) / 128.0,
                (FMT_PCM, 16) => {
                    i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0
                }
                (FMT_PCM, 24) => {
                    let raw = (data[at] as i32)
                        | ((data[at + 1] as i32) << 8)
                        | ((data[at + 2] as i8 as i32) << 16);
                    raw as f64 / 8_388_608.0
                }
                (FMT_PCM, 32) => {
                    i32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]])
                        as f64
                        / 2_147_483_648.0
                }
                (FMT_IEEE_FLOAT, 32) => f32::from_le_bytes([
                    data[at],
                    data[at + 1],
                    data[at + 2],
                    data[at + 3],
                ]) as f64,
                _ => unreachable!(),
            };
            acc += v;
        }
        samples.push(acc / channels as f64);
    }

    Ok((samples, rate))
}

/// Writes a mono clip as 16-bit PCM WAV.
pub fn write_wav_16bit(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let n = clip.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);

    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FMT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }

    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes_16bit(channels: u16, rate: u32, frames: &[Vec<i16>]) -> Vec<u8> {
        let data_bytes = (frames.len() * channels as usize * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
        out.extend_from_slice(&(channels * 2).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_bytes.to_le_bytes());
        for frame in frames {
            for &s in frame {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn mono_16bit_header_passthrough() {
        let frames: Vec<Vec<i16>> = (0..48_000).map(|i| vec![(i % 100) as i16]).collect();
        let bytes = wav_bytes_16bit(1, 16_000, &frames);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mono.wav");
        std::fs::write(&path, bytes).unwrap();
        let clip = load_wav(&path, 0, "src").unwrap();
        assert_eq!(clip.samples.len(), 48_000);
        assert_eq!(clip.sample_rate, 16_000);
    }

    #[test]
    fn stereo_opposite_channels_downmix_to_zero() {
        let frames: Vec<Vec<i16>> = (0..1000)
            .map(|i| {
                let v = ((i * 37) % 1000) as i16;
                vec![v, -v]
            })
            .collect();
        let bytes = wav_bytes_16bit(2, 8000, &frames);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        std::fs::write(&path, bytes).unwrap();
        let clip = load_wav(&path, 0, "src").unwrap();
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn truncated_data_chunk_is_format_error() {
        let frames: Vec<Vec<i16>> = (0..100).map(|i| vec![i as i16]).collect();
        let mut bytes = wav_bytes_16bit(1, 8000, &frames);
        bytes.truncate(bytes.len() - 10);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        std::fs::write(&path, bytes).unwrap();
        match load_wav(&path, 0, "src") {
            Err(CorpusError::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_encoding_is_reported() {
        let frames: Vec<Vec<i16>> = (0..10).map(|i| vec![i as i16]).collect();
        let mut bytes = wav_bytes_16bit(1, 8000, &frames);
        // Patch the format tag to a-law (6).
        bytes[20] = 6;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alaw.wav");
        std::fs::write(&path, bytes).unwrap();
        match load_wav(&path, 0, "src") {
            Err(CorpusError::Unsupported { .. }) => {}
            other => panic!("expected unsupported error, got {other:?}"),
        }
    }

    #[test]
    fn empty_data_chunk_is_empty_input() {
        let bytes = wav_bytes_16bit(1, 8000, &[]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        std::fs::write(&path, bytes).unwrap();
        match load_wav(&path, 0, "src") {
            Err(CorpusError::EmptyInput { .. }) => {}
            other => panic!("expected empty-input error, got {other:?}"),
        }
    }

    #[test]
    fn float32_round_trip_values() {
        // Hand-built float WAV with known values.
        let vals: Vec<f32> = vec![0.0, 0.5, -0.5, 0.25];
        let data_bytes = (vals.len() * 4) as u32;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36 + data_bytes).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&3u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&4000u32.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&32u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&data_bytes.to_le_bytes());
        for v in &vals {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f32.wav");
        std::fs::write(&path, bytes).unwrap();
        let clip = load_wav(&path, 0, "src").unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5, -0.5, 0.25]);
    }

    #[test]
    fn writer_reader_round_trip() {
        let clip = AudioClip::new(
            (0..4000).map(|i| (i as f64 / 4000.0).sin() * 0.8).collect(),
            4000,
            1,
            "rt",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        write_wav_16bit(&path, &clip).unwrap();
        let back = load_wav(&path, 1, "rt").unwrap();
        assert_eq!(back.samples.len(), clip.samples.len());
        assert_eq!(back.sample_rate, 4000);
        for (a, b) in clip.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1.0 / 16000.0, "{a} vs {b}");
        }
    }
}
