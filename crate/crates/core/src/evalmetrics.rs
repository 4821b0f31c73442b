//! Macro-F1 and soft cross-entropy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::PROBABILITY_CLIP;
use crate::task::{HardLabel, Task, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances carrying the label.
    pub support: usize,
    /// Some ratio had a zero denominator and was set to 0.
    pub zero_division: bool,
}

/// Per-label scores over the universe `0..arity`. For multilabel gold the
/// scores are the per-label binary ones.
pub fn per_class_scores(predictions: &[HardLabel], gold: &[HardLabel], labels: &[&str]) -> Result<Vec<ClassScores>> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    for h in predictions.iter().chain(gold) {
        let out_of_range = match h {
            HardLabel::Class(c) => *c >= labels.len(),
            HardLabel::Labels(ls) => ls.iter().any(|&l| l >= labels.len()),
        };
        if out_of_range {
            return Err(Error::InvalidInput(format!("label {h:?} outside a universe of {}", labels.len())));
        }
    }
    Ok(labels
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (p, g) in predictions.iter().zip(gold) {
                match (p.contains(l), g.contains(l)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
            ClassScores {
                label: name.to_string(),
                precision: precision.unwrap_or(0.0),
                recall: recall.unwrap_or(0.0),
                f1: f1.unwrap_or(0.0),
                support: tp + fn_,
                zero_division: precision.is_none() || recall.is_none() || f1.is_none(),
            }
        })
        .collect())
}

/// Unweighted mean of per-label F1 over the whole universe.
pub fn macro_f1(predictions: &[HardLabel], gold: &[HardLabel], labels: &[&str]) -> Result<f64> {
    let scores = per_class_scores(predictions, gold, labels)?;
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

/// Mean over instances of `−Σ gold·ln(pred)` (single-label) or of the mean
/// per-label binary cross-entropy (multilabel), natural log. Predictions are
/// clipped from below, and multilabel ones also from above. Terms with zero
/// gold weight contribute nothing.
pub fn soft_cross_entropy(predictions: &[Vec<f64>], gold: &[Vec<f64>], kind: TaskKind) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} gold targets",
            predictions.len(),
            gold.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no instances to score".into()));
    }
    let eps = PROBABILITY_CLIP;
    let term = |g: f64, p: f64| if g == 0.0 { 0.0 } else { -g * p.max(eps).ln() };
    let mut total = 0.0;
    for (p, g) in predictions.iter().zip(gold) {
        if p.len() != g.len() {
            return Err(Error::InvalidInput(format!(
                "prediction arity {} differs from gold arity {}",
                p.len(),
                g.len()
            )));
        }
        total += match kind {
            TaskKind::Binary | TaskKind::Multiclass => p.iter().zip(g).map(|(&p, &g)| term(g, p)).sum::<f64>(),
            TaskKind::Multilabel => {
                p.iter()
                    .zip(g)
                    .map(|(&p, &g)| {
                        let p = p.clamp(eps, 1.0 - eps);
                        term(g, p) + term(1.0 - g, 1.0 - p)
                    })
                    .sum::<f64>()
                    / p.len() as f64
            }
        };
    }
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: Task,
    pub n: usize,
    pub macro_f1: f64,
    pub cross_entropy: f64,
    pub per_class: Vec<ClassScores>,
    /// Any per-class ratio hit a zero denominator.
    pub zero_division: bool,
}

pub fn evaluate(
    task: Task,
    predictions: &[HardLabel],
    gold: &[HardLabel],
    soft_predictions: &[Vec<f64>],
    soft_gold: &[Vec<f64>],
) -> Result<EvalResult> {
    let per_class = per_class_scores(predictions, gold, task.labels())?;
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / per_class.len() as f64;
    let cross_entropy = soft_cross_entropy(soft_predictions, soft_gold, task.kind())?;
    Ok(EvalResult {
        task,
        n: predictions.len(),
        macro_f1,
        cross_entropy,
        zero_division: per_class.iter().any(|s| s.zero_division),
        per_class,
    })
}

/// Pooled results plus one block per language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pooled: EvalResult,
    pub per_language: BTreeMap<String, EvalResult>,
}

/// One evaluated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub lang: &'a str,
    pub predicted: HardLabel,
    pub gold: HardLabel,
    pub soft_predicted: Vec<f64>,
    pub soft_gold: Vec<f64>,
}

pub fn metrics_report(task: Task, items: &[Scored<'_>]) -> Result<MetricsReport> {
    let run = |subset: &[&Scored<'_>]| {
        let hp: Vec<_> = subset.iter().map(|s| s.predicted.clone()).collect();
        let hg: Vec<_> = subset.iter().map(|s| s.gold.clone()).collect();
        let sp: Vec<_> = subset.iter().map(|s| s.soft_predicted.clone()).collect();
        let sg: Vec<_> = subset.iter().map(|s| s.soft_gold.clone()).collect();
        evaluate(task, &hp, &hg, &sp, &sg)
    };
    let all: Vec<&Scored<'_>> = items.iter().collect();
    let pooled = run(&all)?;
    let mut langs: BTreeMap<String, Vec<&Scored<'_>>> = BTreeMap::new();
    for s in items {
        langs.entry(s.lang.to_string()).or_default().push(s);
    }
    let per_language = langs
        .into_iter()
        .map(|(l, subset)| run(&subset).map(|r| (l, r)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport { pooled, per_language })
}
