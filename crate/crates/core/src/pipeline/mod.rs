//! Dataset ingestion, targets, sampling, training and voting.

pub mod dataset;
pub mod targets;
pub mod train;
pub mod undersample;
pub mod voting;
