use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl RmsPropConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.learning_rate) || !ok(self.decay) || !ok(self.epsilon) || self.decay >= 1.0 {
            return Err(Error::Config(format!("invalid RMSProp hyperparameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one accumulator per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState<T> {
    pub config: RmsPropConfig,
    pub accumulators: Vec<Vec<T>>,
    pub steps: u64,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(config: RmsPropConfig) -> Self {
        Self {
            config,
            accumulators: Vec::new(),
            steps: 0,
        }
    }

    /// `acc ← decay·acc + (1−decay)·g²;  θ ← θ − lr·g / (√acc + ε)`
    pub fn step<P: Parameters<T> + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if params.len() != grads.len() {
            return Err(Error::shape("parameter and gradient tensor counts differ"));
        }
        if self.accumulators.is_empty() {
            self.accumulators = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
        }
        if self.accumulators.len() != grads.len()
            || self
                .accumulators
                .iter()
                .zip(&grads)
                .zip(&params)
                .any(|((a, g), p)| a.len() != g.len() || p.len() != g.len())
        {
            return Err(Error::shape("optimizer state does not match parameter shapes"));
        }
        let lr = T::of(self.config.learning_rate);
        let decay = T::of(self.config.decay);
        let eps = T::of(self.config.epsilon);
        let keep = T::one() - decay;
        for ((acc, grad), param) in self.accumulators.iter_mut().zip(&grads).zip(params.iter_mut()) {
            for ((a, &g), p) in acc.iter_mut().zip(grad.iter()).zip(param.iter_mut()) {
                *a = decay * *a + keep * g * g;
                *p -= lr * g / (a.sqrt() + eps);
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// One RMSProp update of `params` with `grads`.
pub fn rmsprop_step<T: Scalar, P: Parameters<T> + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut RmsPropState<T>,
) -> Result<()> {
    state.step(params, grads)
}
