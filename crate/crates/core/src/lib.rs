//! Concept-bottleneck sexism detection: LLM concept scoring, interpretable
//! heads, training, voting, explanations and metrics.

pub mod error;
pub mod evalmetrics;
pub mod explain;
pub mod lexicon;
pub mod models;
pub mod nncore;
pub mod pipeline;
pub mod scalar;
pub mod scorer;
pub mod synthetic;
pub mod task;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use task::{HardLabel, Task, TaskKind};

pub type Matrix = nncore::Matrix<f64>;
pub type DenseParams = nncore::DenseParams<f64>;
pub type Head = models::Head<f64>;
pub type ScbmHead = models::ScbmHead<f64>;
pub type ScbmtHead = models::ScbmtHead<f64>;
pub type ModelInput = models::ModelInput<f64>;
pub type Checkpoint = models::ModelCheckpoint<f64>;

pub type Matrix32 = nncore::Matrix<f32>;
pub type DenseParams32 = nncore::DenseParams<f32>;
pub type Head32 = models::Head<f32>;
pub type ScbmHead32 = models::ScbmHead<f32>;
pub type ScbmtHead32 = models::ScbmtHead<f32>;
pub type ModelInput32 = models::ModelInput<f32>;
pub type Checkpoint32 = models::ModelCheckpoint<f32>;
