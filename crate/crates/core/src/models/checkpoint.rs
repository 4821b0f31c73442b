use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_arity, DecisionRules, Head};
use crate::error::{Error, Result};
use crate::lexicon::ConceptLexicon;
use crate::nncore::RmsPropState;
use crate::pipeline::train::{TrainConfig, TrainingHistory};
use crate::scalar::Scalar;
use crate::task::Task;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained head with everything needed to reuse or resume it.
///
/// Stored as JSON; every float is written in shortest round-trip form, so
/// save → load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ModelCheckpoint<T> {
    pub format_version: u32,
    /// `f32` or `f64`.
    pub scalar: String,
    pub task: Task,
    pub lexicon_version: String,
    pub concepts: Vec<String>,
    pub head: Head<T>,
    pub decision: DecisionRules,
    pub optimizer: RmsPropState<T>,
    pub config: TrainConfig,
    pub history: TrainingHistory,
}

impl<T: Scalar> ModelCheckpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ckpt: Self = serde_json::from_slice(bytes)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    /// Writes the checkpoint and returns its hash.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        // Check the scalar type before the body is parsed into the wrong one.
        #[derive(Deserialize)]
        struct Peek {
            format_version: u32,
            scalar: String,
        }
        let peek: Peek = serde_json::from_slice(&bytes)?;
        if peek.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                peek.format_version
            )));
        }
        if peek.scalar != T::NAME {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, loader expects {}",
                peek.scalar,
                T::NAME
            )));
        }
        Self::from_bytes(&bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint format {}", self.format_version)));
        }
        if self.scalar != T::NAME {
            return Err(Error::Config(format!("checkpoint scalar {} ≠ {}", self.scalar, T::NAME)));
        }
        if self.concepts.len() != self.head.lexicon_size() {
            return Err(Error::shape(format!(
                "checkpoint lists {} concepts for a head over {}",
                self.concepts.len(),
                self.head.lexicon_size()
            )));
        }
        check_arity(&self.head, self.task)
    }

    pub fn lexicon(&self) -> Result<ConceptLexicon> {
        ConceptLexicon::new(self.lexicon_version.clone(), self.concepts.clone())
    }
}
