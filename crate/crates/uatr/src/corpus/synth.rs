//! Synthetic ship-like signal generation with controllable duplication.
//!
//! Each class is a stack of harmonics over a fundamental, amplitude-modulated
//! at a slow rhythm rate, with optional broadband noise and slow frequency
//! drift. Clips generated from the same deterministic seed share their
//! periodic part exactly, which is how duplicate groups are injected.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::corpus::{AudioClip, CorpusEntry};
use crate::error::CorpusError;
use crate::rng;

/// Generator parameters for one synthetic class.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthClassSpec {
    /// Fundamental frequency in Hz.
    pub fundamental_hz: f64,
    /// Number of harmonics (counting the fundamental).
    pub n_harmonics: usize,
    /// Per-harmonic amplitude ratio; harmonic k has amplitude decay^(k-1).
    pub harmonic_decay: f64,
    /// Rhythm-modulation rate in Hz; 0 disables amplitude modulation.
    pub am_rate_hz: f64,
    /// Linear amplitude of added white noise; 0 keeps the clip deterministic.
    pub broadband_level: f64,
    /// Relative per-second frequency jitter; 0 keeps the signal exactly periodic.
    pub drift: f64,
}

/// Depth of the rhythm amplitude modulation when `am_rate_hz > 0`.
const AM_DEPTH: f64 = 0.5;

impl SynthClassSpec {
    fn validate(&self, sample_rate: u32) -> Result<(), CorpusError> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.fundamental_hz <= 0.0 {
            return Err(CorpusError::Parameter {
                field: "fundamental_hz".into(),
                reason: "must be positive".into(),
            });
        }
        if self.n_harmonics == 0 {
            return Err(CorpusError::Parameter {
                field: "n_harmonics".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.fundamental_hz * self.n_harmonics as f64 >= nyquist {
            return Err(CorpusError::Parameter {
                field: "n_harmonics".into(),
                reason: format!(
                    "highest harmonic {} Hz reaches the Nyquist frequency {} Hz",
                    self.fundamental_hz * self.n_harmonics as f64,
                    nyquist
                ),
            });
        }
        for (name, v) in [
            ("harmonic_decay", self.harmonic_decay),
            ("am_rate_hz", self.am_rate_hz),
            ("broadband_level", self.broadband_level),
            ("drift", self.drift),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(CorpusError::Parameter {
                    field: name.into(),
                    reason: "must be finite and non-negative".into(),
                });
            }
        }
        Ok(())
    }
}

/// Synthesizes one clip. Bit-identical output for identical
/// (spec, duration, rate, seed).
pub fn synth_clip(
    spec: &SynthClassSpec,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioClip, CorpusError> {
    let samples = synth_samples(spec, duration_s, sample_rate, seed, seed)?;
    AudioClip::new(samples, sample_rate, 0, format!("synth-{seed}"))
}

/// Core generator with separate seeds for the deterministic periodic part
/// and the broadband noise. Duplicate-group members share `det_seed` and
/// differ only in `noise_seed`.
pub(crate) fn synth_samples(
    spec: &SynthClassSpec,
    duration_s: f64,
    sample_rate: u32,
    det_seed: u64,
    noise_seed: u64,
) -> Result<Vec<f64>, CorpusError> {
    if duration_s <= 0.0 || !duration_s.is_finite() {
        return Err(CorpusError::Parameter {
            field: "duration_s".into(),
            reason: "must be positive".into(),
        });
    }
    spec.validate(sample_rate)?;

    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut det_rng = rng::substream("synth.det", det_seed, &[]);

    // Per-harmonic random initial phases keep distinct sources distinct
    // even when their spectra coincide.
    let phases: Vec<f64> = (0..spec.n_harmonics)
        .map(|_| det_rng.gen::<f64>() * TAU)
        .collect();
    let am_phase = det_rng.gen::<f64>() * TAU;

    // Frequency drift: piecewise-linear multiplier with one knot per second.
    let n_knots = duration_s.ceil() as usize + 2;
    let knots: Vec<f64> = (0..n_knots)
        .map(|_| 1.0 + spec.drift * standard_normal(&mut det_rng))
        .collect();

    let mut out = vec![0.0f64; n];
    if spec.drift == 0.0 {
        // Stateless phase formula: exactly periodic.
        for (i, y) in out.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let mut v = 0.0;
            let mut amp = 1.0;
            for (k, &ph) in phases.iter().enumerate() {
                let f = spec.fundamental_hz * (k + 1) as f64;
                v += amp * (TAU * f * t + ph).sin();
                amp *= spec.harmonic_decay;
            }
            *y = v;
        }
    } else {
        // Accumulated phase under the drifting frequency multiplier.
        let mut acc: Vec<f64> = phases.clone();
        for (i, y) in out.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let j = t.floor() as usize;
            let frac = t - t.floor();
            let mult = knots[j] * (1.0 - frac) + knots[j + 1] * frac;
            let mut v = 0.0;
            let mut amp = 1.0;
            for (k, ph) in acc.iter_mut().enumerate() {
                v += amp * ph.sin();
                let f = spec.fundamental_hz * (k + 1) as f64 * mult;
                *ph += TAU * f / fs;
                amp *= spec.harmonic_decay;
            }
            *y = v;
        }
    }

    if spec.am_rate_hz > 0.0 {
        for (i, y) in out.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *y *= 1.0 + AM_DEPTH * (TAU * spec.am_rate_hz * t + am_phase).sin();
        }
    }

    // Peak-normalize the periodic part to 0.9 so duplicate-group members
    // share it exactly regardless of their individual noise draws.
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.9 / peak;
        for y in &mut out {
            *y *= g;
        }
    }

    if spec.broadband_level > 0.0 {
        let mut noise_rng = rng::substream("synth.noise", noise_seed, &[]);
        for y in &mut out {
            *y += spec.broadband_level * standard_normal(&mut noise_rng);
        }
    }

    Ok(out)
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Configuration for a full synthetic corpus.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthCorpusConfig {
    /// One spec per class; the class id is the index.
    pub specs: Vec<SynthClassSpec>,
    /// Number of clips generated per class.
    pub clips_per_class: usize,
    /// Fraction of each class's clips that belong to multi-member
    /// duplicate groups. Must be in [0, 1).
    pub duplication_rate: f64,
    /// Number of members per duplicate group.
    pub dup_group_size: usize,
    /// Duration of each clip in seconds.
    pub clip_seconds: f64,
    /// Sample rate shared by all clips.
    pub sample_rate: u32,
    /// Relative per-source jitter applied to the class fundamental, so
    /// distinct sources within a class stay distinguishable.
    pub source_jitter: f64,
    /// Broadband level override for duplicate-group members; `Some(0.0)`
    /// makes group members bit-identical while unique clips keep the
    /// class's broadband noise.
    pub dup_broadband_level: Option<f64>,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            specs: Vec::new(),
            clips_per_class: 16,
            duplication_rate: 0.0,
            dup_group_size: 2,
            clip_seconds: 30.0,
            sample_rate: 4000,
            source_jitter: 0.1,
            dup_broadband_level: None,
        }
    }
}

/// Generates a labeled clip set with duplicate-group ground truth.
///
/// Members of one duplicate group share the same deterministic periodic
/// part and the same `source_id` (so dataset splits keep them together);
/// they differ only in their broadband noise redraw. Every clip carries a
/// dup-group id; unique clips get singleton groups.
pub fn make_synth_corpus(
    config: &SynthCorpusConfig,
    seed: u64,
) -> Result<Vec<CorpusEntry>, CorpusError> {
    if config.specs.is_empty() {
        return Err(CorpusError::Parameter {
            field: "specs".into(),
            reason: "at least one class spec is required".into(),
        });
    }
    if !(0.0..1.0).contains(&config.duplication_rate) {
        return Err(CorpusError::Parameter {
            field: "duplication_rate".into(),
            reason: "must be in [0, 1)".into(),
        });
    }
    if config.dup_group_size < 2 {
        return Err(CorpusError::Parameter {
            field: "dup_group_size".into(),
            reason: "groups need at least 2 members".into(),
        });
    }

    let mut entries = Vec::new();
    let mut next_group: u32 = 0;
    let mut corpus_rng = rng::stream("corpus", seed);

    for (class, spec) in config.specs.iter().enumerate() {
        spec.validate(config.sample_rate)?;

        let n_dup_members = (config.duplication_rate * config.clips_per_class as f64).round()
            as usize;
        let n_groups = n_dup_members / config.dup_group_size;
        let members_in_groups = n_groups * config.dup_group_size;
        let n_unique = config.clips_per_class - members_in_groups;

        // One "source" is either a unique clip or a whole duplicate group.
        // Every source gets its own jittered variant of the class spec;
        // duplicate-group members share theirs.
        let mut source_idx = 0usize;
        let emit = |jittered: &SynthClassSpec,
                    det_seed: u64,
                    noise_seed: u64,
                    dup_group: u32,
                    source: usize,
                    entries: &mut Vec<CorpusEntry>|
         -> Result<(), CorpusError> {
            let samples = synth_samples(
                jittered,
                config.clip_seconds,
                config.sample_rate,
                det_seed,
                noise_seed,
            )?;
            let clip = AudioClip::new(
                samples,
                config.sample_rate,
                class,
                format!("c{class}s{source}"),
            )?;
            entries.push(CorpusEntry {
                clip,
                dup_group: Some(dup_group),
            });
            Ok(())
        };

        let jittered_spec = |rng: &mut rand_chacha::ChaCha20Rng| {
            let j = config.source_jitter;
            let draw = |rng: &mut rand_chacha::ChaCha20Rng| rng.gen::<f64>() * 2.0 - 1.0;
            SynthClassSpec {
                fundamental_hz: spec.fundamental_hz * (1.0 + j * draw(rng)),
                am_rate_hz: spec.am_rate_hz * (1.0 + 2.0 * j * draw(rng)).max(0.0),
                harmonic_decay: (spec.harmonic_decay * (1.0 + j * draw(rng))).max(0.0),
                ..spec.clone()
            }
        };

        for _ in 0..n_groups {
            let mut variant = jittered_spec(&mut corpus_rng);
            if let Some(level) = config.dup_broadband_level {
                variant.broadband_level = level;
            }
            let det_seed: u64 = corpus_rng.gen();
            let group = next_group;
            next_group += 1;
            for _ in 0..config.dup_group_size {
                let noise_seed: u64 = corpus_rng.gen();
                emit(&variant, det_seed, noise_seed, group, source_idx, &mut entries)?;
            }
            source_idx += 1;
        }
        for _ in 0..n_unique {
            let variant = jittered_spec(&mut corpus_rng);
            let det_seed: u64 = corpus_rng.gen();
            let noise_seed: u64 = corpus_rng.gen();
            let group = next_group;
            next_group += 1;
            emit(&variant, det_seed, noise_seed, group, source_idx, &mut entries)?;
            source_idx += 1;
        }
    }

    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_spec() -> SynthClassSpec {
        SynthClassSpec {
            fundamental_hz: 100.0,
            n_harmonics: 1,
            harmonic_decay: 1.0,
            am_rate_hz: 0.0,
            broadband_level: 0.0,
            drift: 0.0,
        }
    }

    #[test]
    fn seeded_determinism_is_bit_identical() {
        let spec = SynthClassSpec {
            broadband_level: 0.05,
            drift: 0.01,
            n_harmonics: 4,
            harmonic_decay: 0.7,
            am_rate_hz: 2.0,
            ..tone_spec()
        };
        let a = synth_clip(&spec, 2.0, 4000, 42).unwrap();
        let b = synth_clip(&spec, 2.0, 4000, 42).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn pure_tone_peaks_at_expected_dft_bin() {
        // Direct DFT oracle on the synthesized output.
        let clip = synth_clip(&tone_spec(), 1.0, 4000, 7).unwrap();
        let n = clip.samples.len();
        let mut best_bin = 0;
        let mut best_mag = 0.0;
        for k in 0..n / 2 {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (i, &x) in clip.samples.iter().enumerate() {
                let ang = -TAU * k as f64 * i as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            let mag = re * re + im * im;
            if mag > best_mag {
                best_mag = mag;
                best_bin = k;
            }
        }
        // 100 Hz over a 1 s window at 4 kHz lands on bin 100.
        assert_eq!(best_bin, 100);
    }

    #[test]
    fn duration_gives_expected_sample_count() {
        let clip = synth_clip(&tone_spec(), 60.0, 4000, 1).unwrap();
        assert_eq!(clip.samples.len(), 240_000);
    }

    #[test]
    fn aliasing_precondition_is_rejected() {
        let spec = SynthClassSpec {
            fundamental_hz: 300.0,
            n_harmonics: 10, // 3000 Hz > Nyquist at fs 4000
            ..tone_spec()
        };
        assert!(matches!(
            synth_clip(&spec, 1.0, 4000, 0),
            Err(CorpusError::Parameter { .. })
        ));
    }

    #[test]
    fn zero_duplication_yields_singletons() {
        let config = SynthCorpusConfig {
            specs: vec![tone_spec(), tone_spec()],
            clips_per_class: 5,
            duplication_rate: 0.0,
            clip_seconds: 0.1,
            ..Default::default()
        };
        let entries = make_synth_corpus(&config, 3).unwrap();
        assert_eq!(entries.len(), 10);
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            assert!(seen.insert(e.dup_group.unwrap()), "groups must be singleton");
        }
    }

    #[test]
    fn half_duplication_creates_multi_member_groups() {
        let config = SynthCorpusConfig {
            specs: vec![tone_spec()],
            clips_per_class: 40,
            duplication_rate: 0.5,
            dup_group_size: 4,
            clip_seconds: 0.05,
            ..Default::default()
        };
        let entries = make_synth_corpus(&config, 9).unwrap();
        let mut counts = std::collections::HashMap::new();
        for e in &entries {
            *counts.entry(e.dup_group.unwrap()).or_insert(0usize) += 1;
        }
        let in_multi: usize = counts.values().filter(|&&c| c > 1).sum();
        assert!(in_multi >= 20, "expected >= 20 clips in multi-member groups");
    }

    #[test]
    fn noiseless_dup_members_are_sample_identical() {
        let config = SynthCorpusConfig {
            specs: vec![SynthClassSpec {
                drift: 0.02,
                n_harmonics: 3,
                harmonic_decay: 0.6,
                am_rate_hz: 1.5,
                ..tone_spec()
            }],
            clips_per_class: 4,
            duplication_rate: 0.9,
            dup_group_size: 2,
            clip_seconds: 0.5,
            ..Default::default()
        };
        let entries = make_synth_corpus(&config, 11).unwrap();
        let mut by_group = std::collections::HashMap::new();
        for e in &entries {
            by_group
                .entry(e.dup_group.unwrap())
                .or_insert_with(Vec::new)
                .push(&e.clip.samples);
        }
        let mut found_multi = false;
        for members in by_group.values() {
            if members.len() > 1 {
                found_multi = true;
                for m in &members[1..] {
                    assert_eq!(*m, members[0]);
                }
            }
        }
        assert!(found_multi);
    }

    #[test]
    fn noisy_dup_members_share_deterministic_part() {
        // With broadband noise, members differ, but subtracting the shared
        // periodic part (regenerated noiselessly) must leave pure noise of
        // the configured level.
        let spec = SynthClassSpec {
            broadband_level: 0.1,
            n_harmonics: 2,
            harmonic_decay: 0.5,
            ..tone_spec()
        };
        let a = synth_samples(&spec, 0.5, 4000, 77, 1).unwrap();
        let b = synth_samples(&spec, 0.5, 4000, 77, 2).unwrap();
        let noiseless = SynthClassSpec {
            broadband_level: 0.0,
            ..spec
        };
        let det = synth_samples(&noiseless, 0.5, 4000, 77, 0).unwrap();
        assert_ne!(a, b);
        let res_a: f64 = a
            .iter()
            .zip(&det)
            .map(|(x, d)| (x - d) * (x - d))
            .sum::<f64>()
            / a.len() as f64;
        let res_b: f64 = b
            .iter()
            .zip(&det)
            .map(|(x, d)| (x - d) * (x - d))
            .sum::<f64>()
            / b.len() as f64;
        // Residual power should be close to broadband_level^2.
        assert!((res_a.sqrt() - 0.1).abs() < 0.02, "res_a {res_a}");
        assert!((res_b.sqrt() - 0.1).abs() < 0.02, "res_b {res_b}");
    }
}
