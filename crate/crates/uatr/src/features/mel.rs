//! Mel filterbank reduction of STFT power spectrograms.

use crate::error::FeatureError;
use crate::features::{FeatureKind, Spectrogram};

/// Hz to Mel, HTK convention.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Mel to Hz, HTK convention.
pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filter matrix, `n_mels` rows by `bin_freqs.len()` columns.
///
/// Centers are uniform on the Mel scale between `fmin` and `fmax`; each
/// triangle is evaluated at the given bin center frequencies. Peaks aim
/// at 1.0 (no area normalization).
pub fn mel_filterbank(
    bin_freqs: &[f64],
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    if n_mels == 0 {
        return Err(FeatureError::Parameter {
            field: "n_mels".into(),
            reason: "must be at least 1".into(),
        });
    }
    if !(0.0..fmax).contains(&fmin) {
        return Err(FeatureError::Parameter {
            field: "fmin/fmax".into(),
            reason: "need 0 <= fmin < fmax".into(),
        });
    }
    // Each filter needs its own peak bin for the bank to resolve
    // distinct bands; the grid has n_mels + 2 edges over the bins.
    if n_mels + 2 > bin_freqs.len() {
        return Err(FeatureError::Parameter {
            field: "n_mels".into(),
            reason: format!(
                "{} filters exceed the distinct-center capacity of {} bins",
                n_mels,
                bin_freqs.len()
            ),
        });
    }

    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut bank = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row: Vec<f64> = bin_freqs
            .iter()
            .map(|&f| {
                let up = (f - lo) / (center - lo);
                let down = (hi - f) / (hi - center);
                up.min(down).max(0.0)
            })
            .collect();
        bank.push(row);
    }
    Ok(bank)
}

/// Applies a Mel filterbank to an STFT power spectrogram.
pub fn mel_spectrogram(
    stft_spec: &Spectrogram,
    n_mels: usize,
    fmin: f64,
    fmax: Option<f64>,
) -> Result<Spectrogram, FeatureError> {
    if stft_spec.kind != FeatureKind::StftPower {
        return Err(FeatureError::Parameter {
            field: "stft_spec".into(),
            reason: "mel reduction requires an stft_power input".into(),
        });
    }
    let fmax = fmax.unwrap_or(stft_spec.sample_rate as f64 / 2.0);
    let bank = mel_filterbank(&stft_spec.bin_labels, n_mels, fmin, fmax)?;

    let mut values = Vec::with_capacity(stft_spec.frames * n_mels);
    for f in 0..stft_spec.frames {
        let row = stft_spec.row(f);
        for filter in &bank {
            values.push(row.iter().zip(filter).map(|(&p, &w)| p * w).sum());
        }
    }

    Ok(Spectrogram {
        values,
        frames: stft_spec.frames,
        bins: n_mels,
        kind: FeatureKind::Mel,
        frame_len_s: stft_spec.frame_len_s,
        hop_len_s: stft_spec.hop_len_s,
        sample_rate: stft_spec.sample_rate,
        bin_labels: (0..n_mels).map(|m| m as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::stft_power;

    fn stft_16k() -> Spectrogram {
        // fs 16 kHz, 50 ms frames: nfft 800, 401 bins.
        let samples = vec![0.3f64; 3200];
        stft_power(&samples, 16_000, 0.05, 0.025).unwrap()
    }

    #[test]
    fn default_bank_has_300_rows() {
        let spec = stft_16k();
        let out = mel_spectrogram(&spec, 300, 0.0, None).unwrap();
        assert_eq!(out.bins, 300);
        let bank = mel_filterbank(&spec.bin_labels, 300, 0.0, 8000.0).unwrap();
        assert_eq!(bank.len(), 300);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut spec = stft_16k();
        spec.values.iter_mut().for_each(|v| *v = 0.0);
        let out = mel_spectrogram(&spec, 40, 0.0, None).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_unit_power_frame_yields_filter_row_sums() {
        let mut spec = stft_16k();
        spec.values.iter_mut().for_each(|v| *v = 1.0);
        let out = mel_spectrogram(&spec, 40, 0.0, None).unwrap();
        // Direct matrix-row-summation oracle.
        let bank = mel_filterbank(&spec.bin_labels, 40, 0.0, 8000.0).unwrap();
        let sums: Vec<f64> = bank.iter().map(|row| row.iter().sum()).collect();
        for f in 0..out.frames {
            for (m, &expect) in sums.iter().enumerate() {
                assert!((out.at(f, m) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn capacity_overflow_is_a_parameter_error() {
        // 101 bins cannot carry 300 distinct filter centers.
        let samples = vec![0.3f64; 400];
        let spec = stft_power(&samples, 4000, 0.05, 0.025).unwrap();
        assert_eq!(spec.bins, 101);
        assert!(matches!(
            mel_spectrogram(&spec, 300, 0.0, None),
            Err(FeatureError::Parameter { .. })
        ));
    }

    #[test]
    fn filters_are_nonnegative_and_unimodal() {
        let spec = stft_16k();
        let bank = mel_filterbank(&spec.bin_labels, 120, 0.0, 8000.0).unwrap();
        for row in &bank {
            assert!(row.iter().all(|&w| w >= 0.0));
            // Unimodal: never rises again after it starts falling (on the
            // support of the filter).
            let mut falling = false;
            for w in row.windows(2) {
                if w[1] < w[0] {
                    falling = true;
                } else if w[1] > w[0] && falling && w[0] > 0.0 {
                    panic!("filter rises after falling");
                }
            }
        }
    }

    #[test]
    fn wrong_input_kind_is_rejected() {
        let mut spec = stft_16k();
        spec.kind = FeatureKind::Mel;
        assert!(mel_spectrogram(&spec, 40, 0.0, None).is_err());
    }
}
