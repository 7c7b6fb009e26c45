//! Loss assembly: classification cross-entropy plus the symmetric KL
//! regularizer between raw and noisy logits.

use crate::error::NnError;
use crate::nnkit::graph::{softmax_row, Graph, NodeId, PROB_FLOOR};
use crate::nnkit::tensor::Tensor;

/// Builds the training objective on the tape:
///
/// ```text
/// L = CE(z, y) + alpha * (KL(z, z_noisy) + KL(z_noisy, z))
/// ```
///
/// With `alpha == 0` the objective is the cross-entropy node alone — any
/// noisy forward pass already on the tape stays outside the loss ancestry
/// and contributes exactly nothing to the gradients.
pub fn total_loss(
    graph: &mut Graph,
    logits: NodeId,
    noisy_logits: Option<NodeId>,
    labels: &[usize],
    alpha: f64,
) -> Result<NodeId, NnError> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(NnError::Parameter {
            field: "alpha".into(),
            reason: "regularization weight must be finite and non-negative".into(),
        });
    }
    let ce = graph.cross_entropy(logits, labels)?;
    if alpha == 0.0 {
        return Ok(ce);
    }
    let noisy = noisy_logits.ok_or_else(|| NnError::Parameter {
        field: "noisy_logits".into(),
        reason: "required when alpha > 0".into(),
    })?;
    let kl_forward = graph.kl_div(logits, noisy)?;
    let kl_reverse = graph.kl_div(noisy, logits)?;
    graph.weighted_sum(&[(ce, 1.0), (kl_forward, alpha), (kl_reverse, alpha)])
}

/// Mean cross-entropy of a logits tensor against labels, without a tape.
pub fn cross_entropy_value(logits: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let &[n, c] = &logits.dims[..] else {
        return Err(NnError::Shape {
            op: "cross_entropy".into(),
            detail: format!("expected n x C logits, got {:?}", logits.dims),
        });
    };
    if labels.len() != n {
        return Err(NnError::Shape {
            op: "cross_entropy".into(),
            detail: format!("{n} rows vs {} labels", labels.len()),
        });
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(NnError::Label { label: y, classes: c });
        }
        let row = &logits.data[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / n as f64)
}

/// Value-level symmetric softmax KL term, matching the tape op.
pub fn kl_value(z: &Tensor, zt: &Tensor) -> Result<f64, NnError> {
    if z.dims != zt.dims || z.dims.len() != 2 {
        return Err(NnError::Shape {
            op: "kl_div".into(),
            detail: format!("{:?} vs {:?}", z.dims, zt.dims),
        });
    }
    let (n, c) = (z.dims[0], z.dims[1]);
    let mut total = 0.0;
    for i in 0..n {
        let p = softmax_row(&z.data[i * c..(i + 1) * c]);
        let pt = softmax_row(&zt.data[i * c..(i + 1) * c]);
        for (pc, ptc) in p.iter().zip(&pt) {
            total += pc * (pc.max(PROB_FLOOR).ln() - ptc.max(PROB_FLOOR).ln());
        }
    }
    Ok(total / n as f64)
}

/// Softmax of every row of an `n x C` tensor.
pub fn softmax_rows(t: &Tensor) -> Vec<Vec<f64>> {
    let (n, c) = (t.dims[0], t.dims[1]);
    (0..n)
        .map(|i| softmax_row(&t.data[i * c..(i + 1) * c]))
        .collect()
}
