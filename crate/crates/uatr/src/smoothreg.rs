//! Noisy-companion generation for smoothness-inducing regularization.
//!
//! Perturbation happens in the waveform domain; companions are then
//! re-featurized with the same parameters as their base segments. By
//! default every (segment, epoch) pair redraws its own SNR and noise, so
//! the regularizer sees a fresh neighborhood of each sample each epoch.

use rand::Rng;

use crate::error::PerturbError;
use crate::rng;

/// Perturbation family. Gaussian white noise is the only implemented kind;
/// the enum is the extension point for pulse or spectral-shift variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    GaussianWhite,
}

/// How noisy companions are drawn.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PerturbSpec {
    /// Inclusive SNR range in dB; each draw is uniform over it.
    pub snr_db_range: (f64, f64),
    pub kind: PerturbKind,
    /// Redraw per (segment, epoch); `false` fixes one companion per segment.
    pub redraw: bool,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            snr_db_range: (5.0, 30.0),
            kind: PerturbKind::GaussianWhite,
            redraw: true,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<(), PerturbError> {
        if self.snr_db_range.0 > self.snr_db_range.1 {
            return Err(PerturbError::Parameter {
                field: "snr_db_range".into(),
                reason: "low bound exceeds high bound".into(),
            });
        }
        Ok(())
    }
}

/// A perturbed companion waveform; transient, never persisted.
#[derive(Debug, Clone)]
pub struct NoisySegment {
    pub segment_id: usize,
    pub snr_db: f64,
    pub epoch: usize,
    pub samples: Vec<f64>,
}

/// Adds white noise at exactly `snr_db` against the realized noise power.
///
/// The drawn noise is first decorrelated from the signal within the
/// realization, which makes both the SNR and the additive power identity
/// `P_out = P_signal * (1 + 10^(-snr/10))` exact to float precision.
pub fn add_white_noise(x: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>, PerturbError> {
    let n = x.len() as f64;
    let p_signal = x.iter().map(|&v| v * v).sum::<f64>() / n;
    if p_signal == 0.0 {
        return Err(PerturbError::SilentInput);
    }

    let mut noise_rng = rng::substream("perturb.white", seed, &[]);
    let mut noise: Vec<f64> = (0..x.len())
        .map(|_| standard_normal(&mut noise_rng))
        .collect();

    // Remove the component along the signal so powers add exactly.
    let dot: f64 = noise.iter().zip(x).map(|(&w, &v)| w * v).sum();
    let xx: f64 = x.iter().map(|&v| v * v).sum();
    for (w, &v) in noise.iter_mut().zip(x) {
        *w -= dot / xx * v;
    }

    let p_noise = noise.iter().map(|&w| w * w).sum::<f64>() / n;
    if p_noise == 0.0 {
        return Err(PerturbError::Parameter {
            field: "input".into(),
            reason: "degenerate input leaves no noise dimensions".into(),
        });
    }
    let gain = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();

    Ok(x.iter().zip(&noise).map(|(&v, &w)| v + gain * w).collect())
}

fn standard_normal(rng: &mut rand_chacha::ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draws one companion for a segment waveform. The SNR is uniform over the
/// spec's range, independently per (segment, epoch) unless `redraw` is off.
pub fn draw_noisy(
    segment_id: usize,
    waveform: &[f64],
    spec: &PerturbSpec,
    epoch: usize,
    noise_seed: u64,
) -> Result<NoisySegment, PerturbError> {
    spec.validate()?;
    let epoch_key = if spec.redraw { epoch as u64 } else { 0 };
    let mut draw_rng = rng::substream("perturb.draw", noise_seed, &[epoch_key, segment_id as u64]);
    let (lo, hi) = spec.snr_db_range;
    let snr_db = if lo == hi {
        lo
    } else {
        draw_rng.gen_range(lo..hi)
    };
    let white_seed: u64 = draw_rng.gen();
    let samples = match spec.kind {
        PerturbKind::GaussianWhite => add_white_noise(waveform, snr_db, white_seed)?,
    };
    Ok(NoisySegment {
        segment_id,
        snr_db,
        epoch,
        samples,
    })
}

/// One companion per segment, errors propagated per segment.
pub fn draw_noisy_batch(
    segments: &[(usize, &[f64])],
    spec: &PerturbSpec,
    epoch: usize,
    noise_seed: u64,
) -> Result<Vec<NoisySegment>, PerturbError> {
    segments
        .iter()
        .map(|&(id, wave)| draw_noisy(id, wave, spec, epoch, noise_seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_wave(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (std::f64::consts::TAU * 120.0 * i as f64 / 4000.0).sin() * 0.8)
            .collect()
    }

    fn power(x: &[f64]) -> f64 {
        x.iter().map(|&v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn realized_snr_is_exact() {
        let x = test_wave(4000);
        for snr in [5.0, 12.5, 30.0] {
            let y = add_white_noise(&x, snr, 7).unwrap();
            let noise: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let measured = 10.0 * (power(&x) / power(&noise)).log10();
            assert!((measured - snr).abs() < 0.01, "measured {measured} vs {snr}");
        }
    }

    #[test]
    fn output_power_identity_holds_tightly() {
        let x = test_wave(4000);
        for snr in [5.0, 17.5, 30.0] {
            let y = add_white_noise(&x, snr, 3).unwrap();
            let expect = power(&x) * (1.0 + 10f64.powf(-snr / 10.0));
            let got = power(&y);
            assert!(
                ((got - expect) / expect).abs() < 1e-9,
                "snr {snr}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn infinite_snr_limit_returns_the_input() {
        let x = test_wave(1000);
        let y = add_white_noise(&x, 300.0, 5).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_inputs_are_bit_identical_across_runs() {
        let x = test_wave(500);
        let a = add_white_noise(&x, 15.0, 99).unwrap();
        let b = add_white_noise(&x, 15.0, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn silent_input_cannot_define_snr() {
        assert!(matches!(
            add_white_noise(&[0.0; 100], 10.0, 0),
            Err(PerturbError::SilentInput)
        ));
    }

    #[test]
    fn epochs_redraw_different_companions() {
        let x = test_wave(800);
        let spec = PerturbSpec::default();
        let a = draw_noisy(3, &x, &spec, 1, 42).unwrap();
        let b = draw_noisy(3, &x, &spec, 2, 42).unwrap();
        assert_ne!(a.snr_db, b.snr_db);
        assert_ne!(a.samples, b.samples);
    }

    #[test]
    fn redraw_off_freezes_the_companion() {
        let x = test_wave(800);
        let spec = PerturbSpec {
            redraw: false,
            ..PerturbSpec::default()
        };
        let a = draw_noisy(3, &x, &spec, 1, 42).unwrap();
        let b = draw_noisy(3, &x, &spec, 9, 42).unwrap();
        assert_eq!(a.snr_db, b.snr_db);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn snr_draws_are_uniform_over_the_range() {
        // Monte-Carlo mean of U[5, 30] over 10^4 draws.
        let x = test_wave(64);
        let spec = PerturbSpec::default();
        let mut sum = 0.0;
        for id in 0..10_000usize {
            sum += draw_noisy(id, &x, &spec, 0, 1).unwrap().snr_db;
        }
        let mean = sum / 10_000.0;
        assert!((mean - 17.5).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn batch_propagates_per_segment_errors() {
        let x = test_wave(100);
        let silent = vec![0.0; 100];
        let segments: Vec<(usize, &[f64])> = vec![(0, &x[..]), (1, &silent[..])];
        assert!(draw_noisy_batch(&segments, &PerturbSpec::default(), 0, 0).is_err());
    }
}
