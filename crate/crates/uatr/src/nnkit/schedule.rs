//! Warmup-cosine learning-rate schedule.

use std::f64::consts::PI;

/// Linear ramp from 0 to `base_lr` over the first `warmup` epochs, then a
/// cosine decay to 0 at `max_epoch`. `epoch` may be fractional.
pub fn lr_schedule(epoch: f64, base_lr: f64, warmup: f64, max_epoch: f64) -> f64 {
    debug_assert!((0.0..=max_epoch).contains(&epoch));
    if epoch <= warmup {
        base_lr * epoch / warmup
    } else {
        base_lr * 0.5 * (1.0 + (PI * (epoch - warmup) / (max_epoch - warmup)).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: f64 = 5e-4;

    #[test]
    fn warmup_endpoint_reaches_base_lr() {
        assert_eq!(lr_schedule(5.0, BASE, 5.0, 100.0), BASE);
    }

    #[test]
    fn final_epoch_reaches_zero() {
        assert!(lr_schedule(100.0, BASE, 5.0, 100.0).abs() < 1e-19);
    }

    #[test]
    fn warmup_midpoint_is_linear() {
        assert!((lr_schedule(2.5, BASE, 5.0, 100.0) - 2.5e-4).abs() < 1e-19);
    }

    #[test]
    fn cosine_midpoint_is_half_base() {
        // (100 - 5) / 2 + 5 = 52.5
        assert!((lr_schedule(52.5, BASE, 5.0, 100.0) - BASE / 2.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_is_monotone_after_warmup() {
        let mut prev = lr_schedule(5.0, BASE, 5.0, 100.0);
        for e in 6..=100 {
            let lr = lr_schedule(e as f64, BASE, 5.0, 100.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }
}
