//! Softmax cross-entropy and classification accuracy.
//!
//! The loss is computed through a max-shifted log-sum-exp, so arbitrarily
//! large logits stay finite; its gradient w.r.t. the logits is the familiar
//! `softmax - onehot`. Batch versions average over samples, and the batch
//! gradient carries the `1/B` factor so downstream code can backpropagate it
//! unscaled.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Cross-entropy of a single sample.
///
/// `logits` is rank-1 with one entry per class. Returns the loss and
/// `dL/dlogits` (same shape).
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    if logits.rank() != 1 {
        return Err(Error::Dim(format!(
            "cross_entropy expects rank-1 logits, got shape {:?}",
            logits.shape()
        )));
    }
    let classes = logits.len();
    if classes == 0 {
        return Err(Error::Dim("cross_entropy needs at least one class".into()));
    }
    if label >= classes {
        return Err(Error::InvalidArg(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    let row = logits.data();
    let mut grad = vec![0.0; classes];
    let loss = ce_row(row, label, &mut grad)?;
    Ok((loss, Tensor::new(vec![classes], grad)?))
}

/// Mean cross-entropy over a batch.
///
/// `logits` is `[batch, classes]`, `labels` one entry per row. Returns the
/// mean loss and `dL/dlogits` scaled by `1/batch`.
pub fn cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, classes) = match logits.shape() {
        &[b, c] => (b, c),
        other => {
            return Err(Error::Dim(format!(
                "cross_entropy_batch expects [batch, classes] logits, got {other:?}"
            )))
        }
    };
    if batch == 0 || classes == 0 {
        return Err(Error::Dim(format!(
            "cross_entropy_batch got empty logits {:?}",
            logits.shape()
        )));
    }
    if labels.len() != batch {
        return Err(Error::Dim(format!(
            "{batch} logit rows vs {} labels",
            labels.len()
        )));
    }
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidArg(format!(
                "label {label} at row {i} out of range for {classes} classes"
            )));
        }
        let row = &logits.data()[i * classes..(i + 1) * classes];
        total += ce_row(row, label, &mut grad[i * classes..(i + 1) * classes])?;
    }
    let inv = 1.0 / batch as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "batch cross-entropy produced non-finite loss {loss}"
        )));
    }
    Ok((loss, Tensor::new(vec![batch, classes], grad)?))
}

/// One row: loss via max-shifted log-sum-exp, gradient written into `grad`.
fn ce_row(row: &[f64], label: usize, grad: &mut [f64]) -> Result<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
    if !m.is_finite() {
        return Err(Error::Numeric(format!("logits contain non-finite max {m}")));
    }
    let sum: f64 = row.iter().map(|&x| (x - m).exp()).sum();
    let lse = m + sum.ln();
    let loss = lse - row[label];
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "cross-entropy produced non-finite loss {loss}"
        )));
    }
    for (g, &x) in grad.iter_mut().zip(row.iter()) {
        *g = (x - lse).exp();
    }
    grad[label] -= 1.0;
    Ok(loss)
}

/// Argmax class per row of `[batch, classes]` logits; ties take the lowest
/// index so predictions are deterministic.
pub fn predictions(logits: &Tensor) -> Result<Vec<usize>> {
    let (batch, classes) = match logits.shape() {
        &[b, c] if c > 0 => (b, c),
        other => {
            return Err(Error::Dim(format!(
                "predictions expects [batch, classes] logits, got {other:?}"
            )))
        }
    };
    let mut out = Vec::with_capacity(batch);
    for i in 0..batch {
        let row = &logits.data()[i * classes..(i + 1) * classes];
        let mut best = 0;
        for (j, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = j;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Fraction of matching entries between predictions and ground truth.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Dim(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidArg("accuracy of an empty set".into()));
    }
    let hits = predicted
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, 0).unwrap();
        assert_eq!(loss, std::f64::consts::LN_2);
        assert_eq!(grad.data(), &[-0.5, 0.5]);
    }

    // Frozen values from an independent softmax/log-sum-exp computation.
    #[test]
    fn single_sample_frozen_values() {
        let logits = Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, 2).unwrap();
        assert!(close(loss, 0.4076059644443806, 1e-15));
        assert!(close(grad.data()[0], 0.09003057317038043, 1e-15));
        assert!(close(grad.data()[1], 0.24472847105479759, 1e-15));
        assert!(close(grad.data()[2], -0.3347590442251783, 1e-15));
        // Gradient rows always sum to softmax-total minus one = 0.
        assert!(close(grad.sum(), 0.0, 1e-15));
    }

    #[test]
    fn batch_mean_and_scaled_gradient() {
        let logits = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 0.5, -0.5, 0.0]).unwrap();
        let (loss, grad) = cross_entropy_batch(&logits, &[2, 0]).unwrap();
        assert!(close(loss, 0.5439378175430576, 1e-15));
        let expect = [
            0.04501528658519022,
            0.12236423552739879,
            -0.16737952211258916,
            -0.246759804472173,
            0.09316186161292378,
            0.1535979428592492,
        ];
        for (g, e) in grad.data().iter().zip(expect.iter()) {
            assert!(close(*g, *e, 1e-15));
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_vec(vec![10.0, -10.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, 0).unwrap();
        assert!(close(loss, 2.061153026033935e-9, 1e-22));
        assert!(grad.data().iter().all(|g| g.is_finite()));

        // A shift of 800 would overflow exp without the max subtraction.
        let logits = Tensor::from_vec(vec![800.0, 0.0]).unwrap();
        let (loss, grad) = cross_entropy(&logits, 1).unwrap();
        assert_eq!(loss, 800.0);
        assert_eq!(grad.data(), &[1.0, -1.0]);
    }

    #[test]
    fn label_and_shape_validation() {
        let logits = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            cross_entropy(&logits, 2),
            Err(Error::InvalidArg(_))
        ));
        let batch = Tensor::zeros(vec![2, 2]).unwrap();
        assert!(matches!(
            cross_entropy_batch(&batch, &[0]),
            Err(Error::Dim(_))
        ));
        assert!(matches!(
            cross_entropy_batch(&batch, &[0, 5]),
            Err(Error::InvalidArg(_))
        ));
        let rank1 = Tensor::from_vec(vec![0.0]).unwrap();
        assert!(matches!(
            cross_entropy_batch(&rank1, &[0]),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn predictions_break_ties_low() {
        let logits = Tensor::new(
            vec![3, 3],
            vec![0.1, 0.9, 0.3, 2.0, 2.0, 1.0, -1.0, -3.0, -0.5],
        )
        .unwrap();
        assert_eq!(predictions(&logits).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 0, 3, 4]).unwrap(), 0.75);
        assert_eq!(accuracy(&[0], &[0]).unwrap(), 1.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }
}
