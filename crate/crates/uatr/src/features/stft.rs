//! Short-time Fourier transform power spectrograms.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::FeatureError;
use crate::features::{FeatureKind, Spectrogram};

/// Periodic Hann window of length `n`.
///
/// The periodic form keeps the window's spectrum confined to DFT bins
/// 0 and +-1, so a constant input leaks no energy past bin 1.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}

/// Windowed power spectrogram over bins `0..=nfft/2`, with `nfft` equal to
/// the frame length (no zero-padding), so bin k sits exactly at
/// `k * sample_rate / nfft` Hz.
pub fn stft_power(
    samples: &[f64],
    sample_rate: u32,
    frame_len_s: f64,
    hop_len_s: f64,
) -> Result<Spectrogram, FeatureError> {
    if frame_len_s <= 0.0 || hop_len_s <= 0.0 || hop_len_s > frame_len_s {
        return Err(FeatureError::Parameter {
            field: "frame/hop".into(),
            reason: "need 0 < hop <= frame".into(),
        });
    }
    let fs = sample_rate as f64;
    let nfft = (frame_len_s * fs).round() as usize;
    let hop = (hop_len_s * fs).round() as usize;
    if nfft == 0 || hop == 0 {
        return Err(FeatureError::Parameter {
            field: "frame/hop".into(),
            reason: "frame or hop rounds to zero samples".into(),
        });
    }
    if samples.len() < nfft {
        return Err(FeatureError::TooShort {
            got: samples.len(),
            need: nfft,
        });
    }

    let n_frames = (samples.len() - nfft) / hop + 1;
    let n_bins = nfft / 2 + 1;
    let window = hann_window(nfft);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0f64, 0.0); nfft];

    let mut values = Vec::with_capacity(n_frames * n_bins);
    for f in 0..n_frames {
        let start = f * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for bin in buf.iter().take(n_bins) {
            values.push(bin.norm_sqr());
        }
    }

    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            stage: "stft_power".into(),
        });
    }

    Ok(Spectrogram {
        values,
        frames: n_frames,
        bins: n_bins,
        kind: FeatureKind::StftPower,
        frame_len_s,
        hop_len_s,
        sample_rate,
        bin_labels: (0..n_bins).map(|k| k as f64 * fs / nfft as f64).collect(),
    })
}

/// Full-spectrum unwindowed DFT of one frame; used by the Parseval checks.
#[doc(hidden)]
pub fn dft_full(frame: &[f64]) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame.len());
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::TAU;

    /// Naive O(n^2) windowed DFT power oracle.
    fn naive_stft_frame(frame: &[f64], window: &[f64]) -> Vec<f64> {
        let n = frame.len();
        let n_bins = n / 2 + 1;
        (0..n_bins)
            .map(|k| {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for (i, (&x, &w)) in frame.iter().zip(window).enumerate() {
                    let ang = -TAU * k as f64 * i as f64 / n as f64;
                    re += x * w * ang.cos();
                    im += x * w * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_oracle_on_random_frames() {
        let mut rng = crate::rng::stream("test.stft", 1);
        for _ in 0..5 {
            let samples: Vec<f64> = (0..400).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let spec = stft_power(&samples, 4000, 0.05, 0.025).unwrap();
            let window = hann_window(200);
            for f in 0..spec.frames {
                let oracle = naive_stft_frame(&samples[f * 100..f * 100 + 200], &window);
                for (b, &expect) in oracle.iter().enumerate() {
                    let got = spec.at(f, b);
                    let scale = expect.abs().max(1.0);
                    assert!(
                        (got - expect).abs() / scale < 1e-9,
                        "frame {f} bin {b}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn dc_input_concentrates_below_bin_two() {
        let samples = vec![0.7f64; 600];
        let spec = stft_power(&samples, 4000, 0.05, 0.025).unwrap();
        for f in 0..spec.frames {
            assert!(spec.at(f, 0) > 1.0);
            let peak = spec.at(f, 0);
            for b in 2..spec.bins {
                assert!(
                    spec.at(f, b) < peak * 1e-20,
                    "bin {b} has energy {}",
                    spec.at(f, b)
                );
            }
        }
    }

    #[test]
    fn one_khz_tone_peaks_at_bin_fifty() {
        let fs = 4000u32;
        let samples: Vec<f64> = (0..120_000)
            .map(|i| (TAU * 1000.0 * i as f64 / fs as f64).sin())
            .collect();
        let spec = stft_power(&samples, fs, 0.05, 0.025).unwrap();
        assert_eq!(spec.frames, 1199);
        for f in 0..spec.frames {
            let row = spec.row(f);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 50, "frame {f}");
        }
    }

    #[test]
    fn frame_count_formula() {
        let samples = vec![0.0f64; 120_000];
        let spec = stft_power(&samples, 4000, 0.05, 0.025).unwrap();
        assert_eq!(spec.frames, 1199);
        assert_eq!(spec.bins, 101);
    }

    #[test]
    fn too_short_segment_is_rejected() {
        let samples = vec![0.0f64; 100];
        assert!(matches!(
            stft_power(&samples, 4000, 0.05, 0.025),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn parseval_holds_for_the_dft_kernel() {
        let mut rng = crate::rng::stream("test.parseval", 2);
        for _ in 0..10 {
            let frame: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let spectrum = dft_full(&frame);
            let lhs: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
            let rhs: f64 = 200.0 * frame.iter().map(|x| x * x).sum::<f64>();
            assert!((lhs - rhs).abs() / rhs < 1e-6, "{lhs} vs {rhs}");
        }
    }
}
