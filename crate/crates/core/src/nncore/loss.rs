use serde::{Deserialize, Serialize};

use super::activation::{sigmoid, softmax};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability floor (and `1 - ceiling`) inside the log losses.
pub const PROBABILITY_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax over the logits, cross-entropy against a target distribution.
    SoftmaxCrossEntropySoftTarget,
    /// Independent sigmoid per label, binary cross-entropy averaged over labels.
    PerLabelBinaryCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub clip: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            clip: PROBABILITY_CLIP,
        }
    }

    /// Maps logits onto the probabilities the loss is defined over.
    pub fn output<T: Scalar>(&self, logits: &[T]) -> Vec<T> {
        match self.kind {
            LossKind::SoftmaxCrossEntropySoftTarget => softmax(logits),
            LossKind::PerLabelBinaryCrossEntropy => logits.iter().map(|&z| sigmoid(z)).collect(),
        }
    }

    /// Loss of one example and its gradient with respect to the logits.
    ///
    /// The gradient is exact for the clipped loss: a clipped probability
    /// contributes nothing.
    pub fn loss_and_logit_grad<T: Scalar>(&self, logits: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
        if logits.len() != target.len() {
            return Err(Error::shape(format!(
                "{} logits for a target of arity {}",
                logits.len(),
                target.len()
            )));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite logit in forward pass".into()));
        }
        let lo = T::of(self.clip);
        let hi = T::one() - lo;
        let inside = |p: T| p > lo && p < hi;
        let (loss, grad) = match self.kind {
            LossKind::SoftmaxCrossEntropySoftTarget => {
                let p = softmax(logits);
                let mut loss = T::zero();
                // dL/dp, then through the softmax Jacobian.
                let mut dp = vec![T::zero(); p.len()];
                for c in 0..p.len() {
                    if target[c] == T::zero() {
                        continue;
                    }
                    loss -= target[c] * p[c].max(lo).min(hi).ln();
                    if inside(p[c]) {
                        dp[c] = -target[c] / p[c];
                    }
                }
                let weighted: T = p.iter().zip(&dp).map(|(&pc, &g)| pc * g).sum();
                let grad = p.iter().zip(&dp).map(|(&pc, &g)| pc * (g - weighted)).collect();
                (loss, grad)
            }
            LossKind::PerLabelBinaryCrossEntropy => {
                let n = T::of(logits.len() as f64);
                let mut loss = T::zero();
                let mut grad = Vec::with_capacity(logits.len());
                for (&z, &t) in logits.iter().zip(target) {
                    let p = sigmoid(z);
                    let pc = p.max(lo).min(hi);
                    loss -= t * pc.ln() + (T::one() - t) * (T::one() - pc).ln();
                    grad.push(if inside(p) { (p - t) / n } else { T::zero() });
                }
                (loss / n, grad)
            }
        };
        if !loss.is_finite() {
            return Err(Error::Numerical("non-finite loss".into()));
        }
        Ok((loss, grad))
    }
}
