use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::relu;
use super::dense::DenseParams;
use super::Parameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stack of dense layers with ReLU between them; the last layer emits logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<DenseParams<T>>,
}

/// Layer inputs recorded during the forward pass, needed for backprop.
pub struct MlpTrace<T> {
    inputs: Vec<Vec<T>>,
    logits: Vec<T>,
}

impl<T> MlpTrace<T> {
    pub fn logits(&self) -> &[T] {
        &self.logits
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<DenseParams<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(format!(
                    "layer emits {} values, next layer expects {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn xavier<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Self {
        let dims: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect();
        let layers = dims
            .windows(2)
            .map(|d| DenseParams::xavier(d[0], d[1], rng))
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseParams::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_trace(input)?.logits)
    }

    pub fn forward_trace(&self, input: &[T]) -> Result<MlpTrace<T>> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x)?;
            if i < last {
                y.iter_mut().for_each(|v| *v = relu(*v));
            }
            inputs.push(std::mem::replace(&mut x, y));
        }
        Ok(MlpTrace { inputs, logits: x })
    }

    /// Backpropagates `∂L/∂logits`, accumulating into `grads`; returns `∂L/∂input`.
    pub fn backward(&self, trace: &MlpTrace<T>, grad_logits: &[T], grads: &mut Self) -> Result<Vec<T>> {
        let mut grad = grad_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let input = &trace.inputs[i];
            grad = self.layers[i].backward(input, &grad, &mut grads.layers[i])?;
            if i > 0 {
                // `input` is the ReLU output of layer i-1; zero where it was inactive.
                for (g, &a) in grad.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
        }
        Ok(grad)
    }
}

impl<T: Scalar> Parameters<T> for Mlp<T> {
    fn tensors(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}
