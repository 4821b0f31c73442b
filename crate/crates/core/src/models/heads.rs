use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{sigmoid, DenseParams, Differentiable, Mlp, Parameters};
use crate::scalar::Scalar;

/// Input of a head: concept scores plus, for SCBMT, the text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub concepts: Vec<T>,
    pub embedding: Option<Vec<T>>,
}

impl<T> ModelInput<T> {
    pub fn concepts(concepts: Vec<T>) -> Self {
        Self {
            concepts,
            embedding: None,
        }
    }

    pub fn fused(concepts: Vec<T>, embedding: Vec<T>) -> Self {
        Self {
            concepts,
            embedding: Some(embedding),
        }
    }
}

/// SCBM: `r = sigmoid(W_g c + b_g) ⊙ c`, `logits = MLP(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbmHead<T> {
    pub gate: DenseParams<T>,
    pub mlp: Mlp<T>,
}

/// Intermediate values of one SCBM forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ScbmForward<T> {
    pub gate: Vec<T>,
    /// The gated activation `r`, used as the explanation.
    pub activation: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> ScbmHead<T> {
    pub fn new(gate: DenseParams<T>, mlp: Mlp<T>) -> Result<Self> {
        if gate.input_dim() != gate.output_dim() {
            return Err(Error::shape(format!(
                "gate must be square, got {}→{}",
                gate.input_dim(),
                gate.output_dim()
            )));
        }
        if mlp.input_dim() != gate.output_dim() {
            return Err(Error::shape(format!(
                "MLP expects {} inputs, gate produces {}",
                mlp.input_dim(),
                gate.output_dim()
            )));
        }
        Ok(Self { gate, mlp })
    }

    pub fn xavier<R: Rng + ?Sized>(concepts: usize, hidden: &[usize], arity: usize, rng: &mut R) -> Self {
        Self {
            gate: DenseParams::xavier(concepts, concepts, rng),
            mlp: Mlp::xavier(concepts, hidden, arity, rng),
        }
    }

    pub fn lexicon_size(&self) -> usize {
        self.gate.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn forward(&self, c: &[T]) -> Result<ScbmForward<T>> {
        if c.len() != self.lexicon_size() {
            return Err(Error::shape(format!(
                "concept vector has {} entries, head expects {}",
                c.len(),
                self.lexicon_size()
            )));
        }
        let gate: Vec<T> = self.gate.forward(c)?.into_iter().map(sigmoid).collect();
        let activation: Vec<T> = gate.iter().zip(c).map(|(&g, &x)| g * x).collect();
        let logits = self.mlp.forward(&activation)?;
        Ok(ScbmForward {
            gate,
            activation,
            logits,
        })
    }
}

/// SCBMT: `logits = MLP([P c + q ; e])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScbmtHead<T> {
    pub projection: DenseParams<T>,
    pub mlp: Mlp<T>,
    pub embedding_dim: usize,
}

impl<T: Scalar> ScbmtHead<T> {
    pub fn new(projection: DenseParams<T>, mlp: Mlp<T>) -> Result<Self> {
        let embedding_dim = projection.output_dim();
        if mlp.input_dim() != 2 * embedding_dim {
            return Err(Error::shape(format!(
                "MLP expects {} inputs, fusion produces 2·{embedding_dim}",
                mlp.input_dim()
            )));
        }
        Ok(Self {
            projection,
            mlp,
            embedding_dim,
        })
    }

    pub fn xavier<R: Rng + ?Sized>(
        concepts: usize,
        embedding_dim: usize,
        hidden: &[usize],
        arity: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            projection: DenseParams::xavier(concepts, embedding_dim, rng),
            mlp: Mlp::xavier(2 * embedding_dim, hidden, arity, rng),
            embedding_dim,
        }
    }

    pub fn lexicon_size(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// The MLP input `[P c + q ; e]`.
    pub fn fuse(&self, c: &[T], e: &[T]) -> Result<Vec<T>> {
        if c.len() != self.lexicon_size() {
            return Err(Error::shape(format!(
                "concept vector has {} entries, head expects {}",
                c.len(),
                self.lexicon_size()
            )));
        }
        if e.len() != self.embedding_dim {
            return Err(Error::shape(format!(
                "embedding has dimension {}, head expects {}",
                e.len(),
                self.embedding_dim
            )));
        }
        let mut x = self.projection.forward(c)?;
        x.extend_from_slice(e);
        Ok(x)
    }

    pub fn forward(&self, c: &[T], e: &[T]) -> Result<Vec<T>> {
        self.mlp.forward(&self.fuse(c, e)?)
    }

    /// Concept-branch activations `P c + q`.
    pub fn concept_branch(&self, c: &[T]) -> Result<Vec<T>> {
        self.projection.forward(c)
    }
}

/// Either head, as stored in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head<T> {
    Scbm(ScbmHead<T>),
    Scbmt(ScbmtHead<T>),
}

impl<T: Scalar> Head<T> {
    pub fn lexicon_size(&self) -> usize {
        match self {
            Self::Scbm(h) => h.lexicon_size(),
            Self::Scbmt(h) => h.lexicon_size(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Scbm(h) => h.output_dim(),
            Self::Scbmt(h) => h.output_dim(),
        }
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        match self {
            Self::Scbm(_) => None,
            Self::Scbmt(h) => Some(h.embedding_dim),
        }
    }
}

fn require_embedding<T>(input: &ModelInput<T>) -> Result<&[T]> {
    input
        .embedding
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("SCBMT head needs an embedding for every input".into()))
}

impl<T: Scalar> Parameters<T> for ScbmHead<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.gate.tensors();
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.gate.tensors_mut();
        t.extend(self.mlp.tensors_mut());
        t
    }
}

impl<T: Scalar> Parameters<T> for ScbmtHead<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.projection.tensors();
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.projection.tensors_mut();
        t.extend(self.mlp.tensors_mut());
        t
    }
}

impl<T: Scalar> Parameters<T> for Head<T> {
    fn tensors(&self) -> Vec<&[T]> {
        match self {
            Self::Scbm(h) => h.tensors(),
            Self::Scbmt(h) => h.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Self::Scbm(h) => h.tensors_mut(),
            Self::Scbmt(h) => h.tensors_mut(),
        }
    }
}

impl<T: Scalar> Differentiable<T> for ScbmHead<T> {
    type Input = ModelInput<T>;

    fn zeros_like(&self) -> Self {
        Self {
            gate: DenseParams::zeros(self.gate.input_dim(), self.gate.output_dim()),
            mlp: self.mlp.zeros_like(),
        }
    }

    fn logits(&self, input: &ModelInput<T>) -> Result<Vec<T>> {
        Ok(self.forward(&input.concepts)?.logits)
    }

    fn accumulate_gradient(
        &self,
        input: &ModelInput<T>,
        loss: &mut dyn FnMut(&[T]) -> Result<(T, Vec<T>)>,
        grads: &mut Self,
    ) -> Result<T> {
        let c = &input.concepts;
        let fwd = self.forward(c)?;
        let trace = self.mlp.forward_trace(&fwd.activation)?;
        let (value, grad_logits) = loss(trace.logits())?;
        let grad_r = self.mlp.backward(&trace, &grad_logits, &mut grads.mlp)?;
        // r = g ⊙ c and g = σ(z): ∂L/∂z = ∂L/∂r · c · g(1 − g).
        let grad_z: Vec<T> = grad_r
            .iter()
            .zip(c)
            .zip(&fwd.gate)
            .map(|((&dr, &x), &g)| dr * x * g * (T::one() - g))
            .collect();
        self.gate.backward(c, &grad_z, &mut grads.gate)?;
        Ok(value)
    }
}

impl<T: Scalar> Differentiable<T> for ScbmtHead<T> {
    type Input = ModelInput<T>;

    fn zeros_like(&self) -> Self {
        Self {
            projection: DenseParams::zeros(self.projection.input_dim(), self.projection.output_dim()),
            mlp: self.mlp.zeros_like(),
            embedding_dim: self.embedding_dim,
        }
    }

    fn logits(&self, input: &ModelInput<T>) -> Result<Vec<T>> {
        self.forward(&input.concepts, require_embedding(input)?)
    }

    fn accumulate_gradient(
        &self,
        input: &ModelInput<T>,
        loss: &mut dyn FnMut(&[T]) -> Result<(T, Vec<T>)>,
        grads: &mut Self,
    ) -> Result<T> {
        let x = self.fuse(&input.concepts, require_embedding(input)?)?;
        let trace = self.mlp.forward_trace(&x)?;
        let (value, grad_logits) = loss(trace.logits())?;
        let grad_x = self.mlp.backward(&trace, &grad_logits, &mut grads.mlp)?;
        // Embeddings are frozen inputs; only the projected half flows back.
        self.projection
            .backward(&input.concepts, &grad_x[..self.embedding_dim], &mut grads.projection)?;
        Ok(value)
    }
}

impl<T: Scalar> Differentiable<T> for Head<T> {
    type Input = ModelInput<T>;

    fn zeros_like(&self) -> Self {
        match self {
            Self::Scbm(h) => Self::Scbm(h.zeros_like()),
            Self::Scbmt(h) => Self::Scbmt(h.zeros_like()),
        }
    }

    fn logits(&self, input: &ModelInput<T>) -> Result<Vec<T>> {
        match self {
            Self::Scbm(h) => h.logits(input),
            Self::Scbmt(h) => h.logits(input),
        }
    }

    fn accumulate_gradient(
        &self,
        input: &ModelInput<T>,
        loss: &mut dyn FnMut(&[T]) -> Result<(T, Vec<T>)>,
        grads: &mut Self,
    ) -> Result<T> {
        match (self, grads) {
            (Self::Scbm(h), Self::Scbm(g)) => h.accumulate_gradient(input, loss, g),
            (Self::Scbmt(h), Self::Scbmt(g)) => h.accumulate_gradient(input, loss, g),
            _ => Err(Error::shape("gradient accumulator is for a different head kind")),
        }
    }
}

/// Logits and gated activation of an SCBM head.
pub fn scbm_forward<T: Scalar>(head: &ScbmHead<T>, c: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let fwd = head.forward(c)?;
    Ok((fwd.logits, fwd.activation))
}

/// Logits of an SCBMT head.
pub fn scbmt_forward<T: Scalar>(head: &ScbmtHead<T>, c: &[T], e: &[T]) -> Result<Vec<T>> {
    head.forward(c, e)
}
