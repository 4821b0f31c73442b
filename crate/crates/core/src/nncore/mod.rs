//! Minimal dense network substrate with hand-written backprop.

pub mod activation;
pub mod dense;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod rmsprop;

pub use activation::{relu, sigmoid, softmax};
pub use dense::{dense_forward, DenseParams};
pub use loss::{LossKind, LossSpec, PROBABILITY_CLIP};
pub use matrix::Matrix;
pub use mlp::Mlp;
pub use rmsprop::{rmsprop_step, RmsPropConfig, RmsPropState};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat view over a model's parameter tensors, in a fixed order.
pub trait Parameters<T: Scalar> {
    fn tensors(&self) -> Vec<&[T]>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// A model whose loss gradient can be computed by backprop.
pub trait Differentiable<T: Scalar>: Parameters<T> + Sized {
    type Input;

    /// Same shapes, all zeros; the gradient accumulator.
    fn zeros_like(&self) -> Self;

    fn logits(&self, input: &Self::Input) -> Result<Vec<T>>;

    /// Runs the forward pass, asks `loss` for the loss and `∂L/∂logits`, and
    /// accumulates parameter gradients into `grads`. Returns the loss.
    fn accumulate_gradient(
        &self,
        input: &Self::Input,
        loss: &mut dyn FnMut(&[T]) -> Result<(T, Vec<T>)>,
        grads: &mut Self,
    ) -> Result<T>;
}

/// One training example: model input plus target distribution / label vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<I, T> {
    pub input: I,
    pub target: Vec<T>,
}

/// Mean loss over `batch` and its analytic gradient.
pub fn loss_and_grad<T, M>(model: &M, batch: &[&Example<M::Input, T>], loss: &LossSpec) -> Result<(T, M)>
where
    T: Scalar,
    M: Differentiable<T>,
{
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut grads = model.zeros_like();
    let mut total = T::zero();
    for example in batch {
        let mut f = |logits: &[T]| loss.loss_and_logit_grad(logits, &example.target);
        total += model.accumulate_gradient(&example.input, &mut f, &mut grads)?;
    }
    let inv = T::one() / T::of(batch.len() as f64);
    grads.scale(inv);
    let mean = total * inv;
    if !mean.is_finite() || !grads.all_finite() {
        return Err(Error::Numerical("non-finite loss or gradient".into()));
    }
    Ok((mean, grads))
}

impl<T: Scalar> Differentiable<T> for Mlp<T> {
    type Input = Vec<T>;

    fn zeros_like(&self) -> Self {
        Mlp::zeros_like(self)
    }

    fn logits(&self, input: &Vec<T>) -> Result<Vec<T>> {
        self.forward(input)
    }

    fn accumulate_gradient(
        &self,
        input: &Vec<T>,
        loss: &mut dyn FnMut(&[T]) -> Result<(T, Vec<T>)>,
        grads: &mut Self,
    ) -> Result<T> {
        let trace = self.forward_trace(input)?;
        let (value, grad_logits) = loss(trace.logits())?;
        self.backward(&trace, &grad_logits, grads)?;
        Ok(value)
    }
}
