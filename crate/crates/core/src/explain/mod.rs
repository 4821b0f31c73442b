//! Adjective-based explanations: per instance (local) and per class (global).

pub mod report;

use serde::{Deserialize, Serialize};

pub use report::{render_global, render_local, ReportFormat};

use crate::error::{Error, Result};
use crate::models::{predict, Head, ModelCheckpoint, ModelInput, ScbmHead};
use crate::pipeline::train::predict_instance;
use crate::scalar::Scalar;
use crate::task::{HardLabel, Task};

/// Default number of adjectives shown per explanation.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAdjective {
    pub adjective: String,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub instance_id: String,
    pub task: Task,
    pub predicted: HardLabel,
    /// Top-k adjectives by gated activation, largest first.
    pub adjectives: Vec<RankedAdjective>,
    pub lang: Option<String>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub task: Task,
    pub label: usize,
    /// Every adjective, ranked by mean activation.
    pub adjectives: Vec<RankedAdjective>,
    /// Correctly classified instances aggregated.
    pub support: usize,
    pub lang: Option<String>,
}

/// Indices of the `k` largest values; ties keep the lower index first.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn ranked(concepts: &[String], values: &[f64], k: usize) -> Vec<RankedAdjective> {
    top_k_indices(values, k)
        .into_iter()
        .map(|i| RankedAdjective {
            adjective: concepts[i].clone(),
            activation: values[i],
        })
        .collect()
}

fn scbm_head<T: Scalar>(ckpt: &ModelCheckpoint<T>) -> Result<&ScbmHead<T>> {
    match &ckpt.head {
        Head::Scbm(h) => Ok(h),
        Head::Scbmt(_) => Err(Error::Unsupported(
            "SCBMT heads have no relevance gate; use explain_concept_branch".into(),
        )),
    }
}

fn check_k(k: usize, size: usize) -> Result<()> {
    if k == 0 || k > size {
        return Err(Error::InvalidInput(format!("k must lie in 1..={size}, got {k}")));
    }
    Ok(())
}

/// Gated activation `r` of an SCBM checkpoint, as `f64`.
pub fn gated_activation<T: Scalar>(ckpt: &ModelCheckpoint<T>, concepts: &[T]) -> Result<Vec<f64>> {
    let fwd = scbm_head(ckpt)?.forward(concepts)?;
    Ok(fwd.activation.into_iter().map(Scalar::to_f64_lossy).collect())
}

/// Top-k adjectives by gated activation for one SCBM instance.
pub fn explain_instance<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    instance_id: &str,
    concepts: &[T],
    k: usize,
) -> Result<LocalExplanation> {
    check_k(k, ckpt.concepts.len())?;
    let activation = gated_activation(ckpt, concepts)?;
    let predicted = predict(&ckpt.head, &ModelInput::concepts(concepts.to_vec()), ckpt.task, &ckpt.decision)?.hard;
    Ok(LocalExplanation {
        instance_id: instance_id.to_string(),
        task: ckpt.task,
        predicted,
        adjectives: ranked(&ckpt.concepts, &activation, k),
        lang: None,
        text: None,
    })
}

/// Extension for SCBMT checkpoints: ranks the concept scores entering the
/// projection. These are not gated, so they say what the text is about
/// rather than what the head relied on.
pub fn explain_concept_branch<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    instance_id: &str,
    input: &ModelInput<T>,
    k: usize,
) -> Result<LocalExplanation> {
    check_k(k, ckpt.concepts.len())?;
    if input.concepts.len() != ckpt.concepts.len() {
        return Err(Error::shape(format!(
            "concept vector has {} entries, checkpoint has {} concepts",
            input.concepts.len(),
            ckpt.concepts.len()
        )));
    }
    let values: Vec<f64> = input.concepts.iter().map(|v| v.to_f64_lossy()).collect();
    let predicted = predict(&ckpt.head, input, ckpt.task, &ckpt.decision)?.hard;
    Ok(LocalExplanation {
        instance_id: instance_id.to_string(),
        task: ckpt.task,
        predicted,
        adjectives: ranked(&ckpt.concepts, &values, k),
        lang: None,
        text: None,
    })
}

/// Local explanation for one post from one input or six persona inputs.
///
/// With personas the label comes from the vote and the ranking from the mean
/// activation over the six. SCBMT heads fall back to the concept branch.
pub fn explain_post<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    instance_id: &str,
    inputs: &[ModelInput<T>],
    k: usize,
) -> Result<LocalExplanation> {
    check_k(k, ckpt.concepts.len())?;
    if inputs.is_empty() {
        return Err(Error::InvalidInput(format!("no inputs for `{instance_id}`")));
    }
    let predicted = predict_instance(&ckpt.head, instance_id, inputs, ckpt.task, &ckpt.decision)?.hard;
    let mut mean = vec![0.0; ckpt.concepts.len()];
    for input in inputs {
        let values = match &ckpt.head {
            Head::Scbm(_) => gated_activation(ckpt, &input.concepts)?,
            Head::Scbmt(_) => input.concepts.iter().map(|v| v.to_f64_lossy()).collect(),
        };
        if values.len() != mean.len() {
            return Err(Error::shape(format!(
                "concept vector has {} entries, checkpoint has {} concepts",
                values.len(),
                mean.len()
            )));
        }
        mean.iter_mut().zip(values).for_each(|(m, v)| *m += v);
    }
    let n = inputs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(LocalExplanation {
        instance_id: instance_id.to_string(),
        task: ckpt.task,
        predicted,
        adjectives: ranked(&ckpt.concepts, &mean, k),
        lang: None,
        text: None,
    })
}

/// One training instance for global aggregation: one input, or six persona
/// inputs (prediction by vote, activation averaged over the six).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInstance<T> {
    pub id: String,
    pub inputs: Vec<ModelInput<T>>,
    pub gold: HardLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub explanations: Vec<GlobalExplanation>,
    /// Classes skipped for lack of correctly classified instances.
    pub omitted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions {
    /// Also explain NON-SEXIST.
    pub include_negative: bool,
    pub lang: Option<String>,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            include_negative: false,
            lang: None,
        }
    }
}

/// Per class, the mean gated activation over training instances that carry
/// the class both in gold and in the prediction.
pub fn explain_global<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    instances: &[GlobalInstance<T>],
    options: &GlobalOptions,
) -> Result<GlobalReport> {
    scbm_head(ckpt)?;
    let task = ckpt.task;
    let d = ckpt.concepts.len();
    let mut sums = vec![vec![0.0; d]; task.arity()];
    let mut support = vec![0usize; task.arity()];
    for inst in instances {
        let predicted = predict_instance(&ckpt.head, &inst.id, &inst.inputs, task, &ckpt.decision)?.hard;
        let mut activation = vec![0.0; d];
        for input in &inst.inputs {
            for (a, r) in activation.iter_mut().zip(gated_activation(ckpt, &input.concepts)?) {
                *a += r;
            }
        }
        let n = inst.inputs.len() as f64;
        activation.iter_mut().for_each(|a| *a /= n);
        for label in 0..task.arity() {
            if predicted.contains(label) && inst.gold.contains(label) {
                support[label] += 1;
                for (s, a) in sums[label].iter_mut().zip(&activation) {
                    *s += a;
                }
            }
        }
    }
    let mut explanations = Vec::new();
    let mut omitted = Vec::new();
    for label in 0..task.arity() {
        if !options.include_negative && task.negative_class() == Some(label) {
            continue;
        }
        if support[label] == 0 {
            omitted.push(task.labels()[label].to_string());
            continue;
        }
        let means: Vec<f64> = sums[label].iter().map(|s| s / support[label] as f64).collect();
        explanations.push(GlobalExplanation {
            task,
            label,
            adjectives: ranked(&ckpt.concepts, &means, d),
            support: support[label],
            lang: options.lang.clone(),
        });
    }
    if !omitted.is_empty() {
        log::warn!("no correctly classified training instances for: {}", omitted.join(", "));
    }
    Ok(GlobalReport { explanations, omitted })
}
