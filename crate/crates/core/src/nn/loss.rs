//! Sparse categorical cross-entropy over softmax probabilities.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Probability floor before taking the log.
pub const PROB_CLIP: f64 = 1e-12;

/// Mean negative log-likelihood of the true classes, plus the combined
/// softmax + cross-entropy gradient with respect to the logits:
/// `(p - onehot(label)) / batch`.
///
/// `probabilities` is `[batch, classes]`, rows already softmax-normalized.
pub fn sparse_cce<F: Scalar>(
    probabilities: &Tensor<F>,
    labels: &[usize],
) -> Result<(F, Tensor<F>)> {
    let [batch, classes] = match probabilities.shape() {
        [b, c] => [*b, *c],
        s => {
            return Err(Error::Shape(format!(
                "probabilities must be [batch, classes], got {s:?}"
            )))
        }
    };
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for batch of {batch}",
            labels.len()
        )));
    }
    let clip = F::from(PROB_CLIP).unwrap();
    let one = F::one();
    let batch_f = F::from(batch).unwrap();
    let mut grad = probabilities.clone();
    let gd = grad.data_mut();
    let mut loss = F::zero();
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let p = probabilities.data()[i * classes + label];
        let p = if p < clip {
            clip
        } else if p > one {
            one
        } else {
            p
        };
        loss = loss - p.ln();
        gd[i * classes + label] = gd[i * classes + label] - one;
    }
    for g in gd.iter_mut() {
        *g = *g / batch_f;
    }
    Ok((loss / batch_f, grad))
}
