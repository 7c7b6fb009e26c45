//! Constant-Q transform spectrograms.
//!
//! Geometrically spaced analysis bins with length-varying Hann-windowed
//! complex kernels, one magnitude per (frame, bin). Frames share the STFT
//! framing grid so CQT and STFT features of one segment align in time;
//! kernels are centered on each frame's center and read zeros past the
//! segment bounds.

use std::f64::consts::TAU;

use crate::error::FeatureError;
use crate::features::{FeatureKind, Spectrogram};

#[derive(Debug, Clone)]
pub struct CqtParams {
    pub bins_per_octave: usize,
    pub fmin_hz: f64,
    /// Number of bins; `None` fills the range up to (but below) Nyquist.
    pub n_bins: Option<usize>,
    pub frame_len_s: f64,
    pub hop_len_s: f64,
}

impl Default for CqtParams {
    fn default() -> Self {
        Self {
            bins_per_octave: 12,
            fmin_hz: 50.0,
            n_bins: None,
            frame_len_s: crate::features::DEFAULT_FRAME_LEN_S,
            hop_len_s: crate::features::DEFAULT_HOP_LEN_S,
        }
    }
}

/// Largest bin count keeping `fmin * 2^(n/B)` below Nyquist.
pub fn default_cqt_bins(sample_rate: u32, bins_per_octave: usize, fmin_hz: f64) -> usize {
    let nyquist = sample_rate as f64 / 2.0;
    let max = bins_per_octave as f64 * (nyquist / fmin_hz).log2();
    // Strict inequality: back off when the bound lands on an integer.
    let n = max.ceil() as usize;
    if fmin_hz * 2f64.powf(n as f64 / bins_per_octave as f64) < nyquist {
        n
    } else {
        n - 1
    }
}

pub fn cqt_spectrogram(
    samples: &[f64],
    sample_rate: u32,
    params: &CqtParams,
) -> Result<Spectrogram, FeatureError> {
    let fs = sample_rate as f64;
    let nyquist = fs / 2.0;
    if params.bins_per_octave == 0 {
        return Err(FeatureError::Parameter {
            field: "bins_per_octave".into(),
            reason: "must be at least 1".into(),
        });
    }
    if params.fmin_hz <= 0.0 {
        return Err(FeatureError::Parameter {
            field: "fmin_hz".into(),
            reason: "must be positive".into(),
        });
    }
    let n_bins = params
        .n_bins
        .unwrap_or_else(|| default_cqt_bins(sample_rate, params.bins_per_octave, params.fmin_hz));
    if n_bins == 0
        || params.fmin_hz * 2f64.powf(n_bins as f64 / params.bins_per_octave as f64) >= nyquist
    {
        return Err(FeatureError::Parameter {
            field: "n_bins".into(),
            reason: format!(
                "fmin * 2^(n_bins/bins_per_octave) must stay below Nyquist ({nyquist} Hz)"
            ),
        });
    }

    let frame = (params.frame_len_s * fs).round() as usize;
    let hop = (params.hop_len_s * fs).round() as usize;
    if frame == 0 || hop == 0 || hop > frame {
        return Err(FeatureError::Parameter {
            field: "frame/hop".into(),
            reason: "need 0 < hop <= frame".into(),
        });
    }
    if samples.len() < frame {
        return Err(FeatureError::TooShort {
            got: samples.len(),
            need: frame,
        });
    }

    let q = 1.0 / (2f64.powf(1.0 / params.bins_per_octave as f64) - 1.0);
    let centers: Vec<f64> = (0..n_bins)
        .map(|k| params.fmin_hz * 2f64.powf(k as f64 / params.bins_per_octave as f64))
        .collect();

    // Precompute one windowed complex kernel per bin.
    struct Kernel {
        len: usize,
        re: Vec<f64>,
        im: Vec<f64>,
        norm: f64,
    }
    let kernels: Vec<Kernel> = centers
        .iter()
        .map(|&f| {
            let len = ((q * fs / f).round() as usize).max(2);
            let window = crate::features::hann_window(len);
            let mut re = Vec::with_capacity(len);
            let mut im = Vec::with_capacity(len);
            for (i, &w) in window.iter().enumerate() {
                let ang = -TAU * f * i as f64 / fs;
                re.push(w * ang.cos());
                im.push(w * ang.sin());
            }
            let norm = window.iter().sum::<f64>();
            Kernel { len, re, im, norm }
        })
        .collect();

    let n_frames = (samples.len() - frame) / hop + 1;
    let mut values = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let center = t * hop + frame / 2;
        for kernel in &kernels {
            let start = center as isize - (kernel.len / 2) as isize;
            let (mut acc_re, mut acc_im) = (0.0f64, 0.0f64);
            for i in 0..kernel.len {
                let idx = start + i as isize;
                if idx < 0 || idx as usize >= samples.len() {
                    continue;
                }
                let x = samples[idx as usize];
                acc_re += x * kernel.re[i];
                acc_im += x * kernel.im[i];
            }
            values.push((acc_re * acc_re + acc_im * acc_im).sqrt() / kernel.norm);
        }
    }

    if values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            stage: "cqt_spectrogram".into(),
        });
    }

    Ok(Spectrogram {
        values,
        frames: n_frames,
        bins: n_bins,
        kind: FeatureKind::Cqt,
        frame_len_s: params.frame_len_s,
        hop_len_s: params.hop_len_s,
        sample_rate,
        bin_labels: centers,
    })
}
