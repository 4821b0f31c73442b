//! Combining the six per-persona predictions of one post.

use super::dataset::ANNOTATORS_PER_POST;
use crate::error::{Error, Result};
use crate::models::{predict, DecisionRules, Head, ModelInput, Prediction};
use crate::scalar::Scalar;
use crate::task::{HardLabel, Task, TaskKind};

/// Majority vote over six predictions.
///
/// Single-label: the most voted class; a binary tie goes to SEXIST, a
/// multiclass tie to the tied class with the highest mean soft score, then
/// the lowest index. Multilabel: labels predicted by more than three
/// personas, plus labels with exactly three votes whose mean probability
/// reaches the threshold. The soft output is the mean of the six.
pub fn vote(id: &str, task: Task, predictions: &[Prediction], rules: &DecisionRules) -> Result<Prediction> {
    if predictions.len() != ANNOTATORS_PER_POST {
        return Err(Error::AnnotationCount {
            id: id.to_string(),
            found: predictions.len(),
        });
    }
    let arity = task.arity();
    if let Some(p) = predictions.iter().find(|p| p.soft.len() != arity) {
        return Err(Error::shape(format!("prediction with {} outputs for task {task}", p.soft.len())));
    }
    let n = predictions.len() as f64;
    let soft: Vec<f64> = (0..arity)
        .map(|l| predictions.iter().map(|p| p.soft[l]).sum::<f64>() / n)
        .collect();
    let votes: Vec<usize> = (0..arity)
        .map(|l| predictions.iter().filter(|p| p.hard.contains(l)).count())
        .collect();
    let hard = match task.kind() {
        TaskKind::Binary | TaskKind::Multiclass => {
            let top = *votes.iter().max().expect("arity > 0");
            let tied: Vec<usize> = (0..arity).filter(|&l| votes[l] == top).collect();
            let winner = if tied.len() == 1 || task.kind() == TaskKind::Binary {
                tied[0]
            } else {
                let mut best = tied[0];
                for &l in &tied[1..] {
                    if soft[l] > soft[best] {
                        best = l;
                    }
                }
                best
            };
            HardLabel::Class(winner)
        }
        TaskKind::Multilabel => HardLabel::Labels(
            (0..arity)
                .filter(|&l| {
                    2 * votes[l] > ANNOTATORS_PER_POST
                        || (2 * votes[l] == ANNOTATORS_PER_POST && soft[l] >= rules.multilabel_threshold)
                })
                .collect(),
        ),
    };
    Ok(Prediction { soft, hard })
}

/// Predicts each persona input and votes.
pub fn infer_with_voting<T: Scalar>(
    head: &Head<T>,
    id: &str,
    inputs: &[ModelInput<T>],
    task: Task,
    rules: &DecisionRules,
) -> Result<Prediction> {
    if inputs.len() != ANNOTATORS_PER_POST {
        return Err(Error::AnnotationCount {
            id: id.to_string(),
            found: inputs.len(),
        });
    }
    let predictions = inputs
        .iter()
        .map(|x| predict(head, x, task, rules))
        .collect::<Result<Vec<_>>>()?;
    vote(id, task, &predictions, rules)
}
