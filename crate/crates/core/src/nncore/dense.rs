use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::Parameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Affine layer `y = W·x + b` with `W` of shape (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    /// Uniform Glorot initialization, zero bias.
    pub fn xavier<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| T::of(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            weight: Matrix::from_vec(output, input, data).expect("sized above"),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let mut out = self.weight.matvec(input)?;
        for (o, &b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, input: &[T], grad_output: &[T], grads: &mut Self) -> Result<Vec<T>> {
        grads.weight.add_outer(grad_output, input);
        for (g, &d) in grads.bias.iter_mut().zip(grad_output) {
            *g += d;
        }
        self.weight.matvec_transposed(grad_output)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.as_slice().iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

impl<T: Scalar> Parameters<T> for DenseParams<T> {
    fn tensors(&self) -> Vec<&[T]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

/// `params.weight · input + params.bias`
pub fn dense_forward<T: Scalar>(params: &DenseParams<T>, input: &[T]) -> Result<Vec<T>> {
    params.forward(input)
}
