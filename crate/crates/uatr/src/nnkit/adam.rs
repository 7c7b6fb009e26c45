//! Bias-corrected Adam.

use crate::error::NnError;
use crate::nnkit::model::ModelState;
use crate::nnkit::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One optimizer step over all parameters. `grads` must align with
/// `model.params`; the step counter advances once per call.
pub fn adam_step(
    model: &mut ModelState,
    grads: &[Tensor],
    lr: f64,
    hp: &AdamParams,
) -> Result<(), NnError> {
    if grads.len() != model.params.len() {
        return Err(NnError::Shape {
            op: "adam_step".into(),
            detail: format!("{} grads for {} params", grads.len(), model.params.len()),
        });
    }
    for (g, p) in grads.iter().zip(&model.params) {
        if g.dims != p.value.dims {
            return Err(NnError::Shape {
                op: "adam_step".into(),
                detail: format!("grad {:?} vs param {} {:?}", g.dims, p.name, p.value.dims),
            });
        }
        g.assert_finite("adam_step")?;
    }

    model.step += 1;
    let t = model.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);

    for ((param, grad), (m, v)) in model
        .params
        .iter_mut()
        .zip(grads)
        .zip(model.adam_m.iter_mut().zip(model.adam_v.iter_mut()))
    {
        for i in 0..grad.data.len() {
            let g = grad.data[i];
            m.data[i] = hp.beta1 * m.data[i] + (1.0 - hp.beta1) * g;
            v.data[i] = hp.beta2 * v.data[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            param.value.data[i] -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
        param.value.assert_finite("adam_step")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::model::{ModelConfig, Param};

    /// A model with a single scalar parameter.
    fn scalar_model(value: f64) -> ModelState {
        ModelState {
            config: ModelConfig::tiny(2, 4),
            params: vec![Param {
                name: "w".into(),
                value: Tensor::scalar(value),
            }],
            adam_m: vec![Tensor::scalar(0.0)],
            adam_v: vec![Tensor::scalar(0.0)],
            step: 0,
        }
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut model = scalar_model(1.5);
        for _ in 0..10 {
            adam_step(&mut model, &[Tensor::scalar(0.0)], 0.01, &AdamParams::default()).unwrap();
        }
        assert_eq!(model.params[0].value.item(), 1.5);
        assert_eq!(model.step, 10);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let mut model = scalar_model(0.0);
        let lr = 3e-3;
        adam_step(&mut model, &[Tensor::scalar(1.0)], lr, &AdamParams::default()).unwrap();
        let moved = -model.params[0].value.item();
        // Bias correction makes m_hat = v_hat = 1 on step 1.
        assert!((moved - lr).abs() < lr * 1e-6, "moved {moved}");
    }

    #[test]
    fn three_step_trajectory_matches_hand_recurrence() {
        let mut model = scalar_model(1.0);
        let lr = 0.1;
        let hp = AdamParams::default();
        let grads = [0.5, -0.2, 0.8];

        // Independent spreadsheet-style oracle of the same recurrence.
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 1.0f64);
        let mut expected = Vec::new();
        for (t, &g) in grads.iter().enumerate() {
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let m_hat = m / (1.0 - hp.beta1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - hp.beta2.powi(t as i32 + 1));
            theta -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);
            expected.push(theta);
        }

        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut model, &[Tensor::scalar(g)], lr, &hp).unwrap();
            let got = model.params[0].value.item();
            assert!(
                (got - expected[t]).abs() < 1e-15,
                "step {t}: {got} vs {}",
                expected[t]
            );
        }
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut model = scalar_model(0.0);
        assert!(matches!(
            adam_step(
                &mut model,
                &[Tensor::scalar(f64::NAN)],
                0.01,
                &AdamParams::default()
            ),
            Err(NnError::NonFinite { .. })
        ));
    }
}
