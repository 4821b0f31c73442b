//! Training targets derived from the six annotator votes.

use serde::{Deserialize, Serialize};

use super::dataset::{AnnotatedPost, Annotation, ANNOTATORS_PER_POST};
use crate::error::{Error, Result};
use crate::task::{HardLabel, Task, TaskKind};

/// Vote fractions: per class (single-label tasks) or per label (task 1.3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub task: Task,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub soft: SoftTarget,
    pub hard: HardLabel,
}

/// Votes per class (or per label) over the six annotators.
pub fn vote_counts(post: &AnnotatedPost, task: Task) -> Result<Vec<usize>> {
    let missing = || Error::InvalidInput(format!("post `{}` has no task {task} labels", post.id));
    let mut counts = vec![0usize; task.arity()];
    for a in &post.annotations {
        match task.kind() {
            TaskKind::Multilabel => {
                for &l in a.task3.as_ref().ok_or_else(missing)? {
                    counts[l] += 1;
                }
            }
            _ => counts[a.class_vote(task).ok_or_else(missing)?] += 1,
        }
    }
    Ok(counts)
}

/// Class with the most votes; ties go to the lowest index, which for task
/// 1.1 is SEXIST.
fn majority(counts: &[usize]) -> usize {
    crate::task::argmax(counts)
}

pub fn derive_targets(post: &AnnotatedPost, task: Task) -> Result<Targets> {
    if post.annotations.len() != ANNOTATORS_PER_POST {
        return Err(Error::AnnotationCount {
            id: post.id.clone(),
            found: post.annotations.len(),
        });
    }
    let counts = vote_counts(post, task)?;
    let n = ANNOTATORS_PER_POST as f64;
    let distribution = counts.iter().map(|&k| k as f64 / n).collect();
    let hard = match task.kind() {
        TaskKind::Binary | TaskKind::Multiclass => HardLabel::Class(majority(&counts)),
        TaskKind::Multilabel => {
            let mut labels: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] * 2 > ANNOTATORS_PER_POST).collect();
            if labels.is_empty() {
                let task1 = vote_counts(post, Task::SexismIdentification)?;
                let best = majority(&counts);
                if majority(&task1) == 0 && counts[best] > 0 {
                    labels.push(best);
                }
            }
            HardLabel::Labels(labels)
        }
    };
    Ok(Targets {
        soft: SoftTarget { task, distribution },
        hard,
    })
}

/// One annotator's own label as a target vector: one-hot for single-label
/// tasks, 0/1 per label for task 1.3.
pub fn annotator_target(annotation: &Annotation, task: Task) -> Option<Vec<f64>> {
    let mut target = vec![0.0; task.arity()];
    match task.kind() {
        TaskKind::Multilabel => {
            for &l in annotation.task3.as_ref()? {
                target[l] = 1.0;
            }
        }
        _ => target[annotation.class_vote(task)?] = 1.0,
    }
    Some(target)
}

/// The target vector used for training: vote fractions when `soft`, else
/// one-hot (single-label) or 0/1 per label of the hard set (task 1.3).
pub fn training_target(targets: &Targets, soft: bool) -> Vec<f64> {
    if soft {
        return targets.soft.distribution.clone();
    }
    let mut t = vec![0.0; targets.soft.distribution.len()];
    match &targets.hard {
        HardLabel::Class(c) => t[*c] = 1.0,
        HardLabel::Labels(labels) => labels.iter().for_each(|&l| t[l] = 1.0),
    }
    t
}
