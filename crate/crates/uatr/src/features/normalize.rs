//! Log compression and per-spectrogram standardization.

use crate::error::FeatureError;
use crate::features::Spectrogram;

/// `log(1 + v)` followed by standardization to mean 0, population std 1.
///
/// Constant spectrograms map to all zeros. `log1p` keeps silent bins finite
/// where a plain log would produce negative infinity.
pub fn normalize(spec: &Spectrogram) -> Result<Spectrogram, FeatureError> {
    if spec.values.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            stage: "normalize input".into(),
        });
    }
    if spec.values.iter().any(|&v| v <= -1.0) {
        return Err(FeatureError::Parameter {
            field: "values".into(),
            reason: "log(1 + v) undefined for v <= -1".into(),
        });
    }

    let logged: Vec<f64> = spec.values.iter().map(|&v| v.ln_1p()).collect();
    let constant = logged.iter().all(|&v| v == logged[0]);
    let values = if constant {
        vec![0.0; logged.len()]
    } else {
        let n = logged.len() as f64;
        let mean = logged.iter().sum::<f64>() / n;
        let var = logged.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        logged.iter().map(|&v| (v - mean) / std).collect()
    };

    Ok(Spectrogram {
        values,
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    fn spec_from(values: Vec<f64>, bins: usize) -> Spectrogram {
        let frames = values.len() / bins;
        Spectrogram {
            values,
            frames,
            bins,
            kind: FeatureKind::StftPower,
            frame_len_s: 0.05,
            hop_len_s: 0.025,
            sample_rate: 4000,
            bin_labels: (0..bins).map(|b| b as f64).collect(),
        }
    }

    #[test]
    fn output_is_standardized() {
        let values: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin().abs() * 3.0).collect();
        let out = normalize(&spec_from(values, 10)).unwrap();
        let n = out.values.len() as f64;
        let mean = out.values.iter().sum::<f64>() / n;
        let var = out.values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_input_maps_to_zeros() {
        let out = normalize(&spec_from(vec![4.2; 60], 6)).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_input_never_changes_shape() {
        let values: Vec<f64> = (0..120).map(|i| (i as f64).sqrt()).collect();
        let a = normalize(&spec_from(values.clone(), 12)).unwrap();
        let b = normalize(&spec_from(values.iter().map(|v| v * 10.0).collect(), 12)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.bins, b.bins);
        assert_ne!(a.values, b.values);
    }
}
