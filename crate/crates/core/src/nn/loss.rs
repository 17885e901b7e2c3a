use crate::dataset::ClassStats;
use crate::{Error, Result};

use super::layers::softmax;
use super::Scalar;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob<F: Scalar>(p: F) -> F {
    let lo = F::lit(PROB_CLAMP);
    p.max(lo).min(F::one() - lo)
}

/// Class-weighted binary cross-entropy of one prediction:
/// `-[B·log p + w·(1-B)·log(1-p)]`.
///
/// Returns the loss and its derivative with respect to the logit that
/// produced `p = sigmoid(logit)`.
pub fn bce_with_weight<F: Scalar>(p: F, label: bool, negative_weight: F) -> (F, F) {
    let pc = clamp_prob(p);
    if label {
        (-pc.ln(), p - F::one())
    } else {
        (-negative_weight * (F::one() - pc).ln(), negative_weight * p)
    }
}

/// Mean scaled loss over a batch with the negative class weighted by N/M.
pub fn weighted_bce<F: Scalar>(probs: &[F], labels: &[bool], stats: &ClassStats) -> Result<F> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(F::zero());
    }
    let w = F::lit(stats.negative_weight()?);
    let total: F = probs
        .iter()
        .zip(labels)
        .map(|(&p, &b)| bce_with_weight(p, b, w).0)
        .sum();
    Ok(total / F::lit(probs.len() as f64))
}

/// Softmax cross-entropy; returns the loss and the gradient w.r.t. the
/// logits.
pub fn cross_entropy<F: Scalar>(logits: &[F], class: usize) -> (F, Vec<F>) {
    let mut p = softmax(logits);
    let loss = -clamp_prob(p[class]).ln();
    p[class] -= F::one();
    (loss, p)
}
