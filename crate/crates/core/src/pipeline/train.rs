//! Training loop with dev-set early stopping.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{AnnotatedPost, SplitManifest, ANNOTATORS_PER_POST};
use super::targets::{annotator_target, derive_targets, training_target};
use super::undersample::undersample;
use super::voting::infer_with_voting;
use crate::error::{Error, Result};
use crate::evalmetrics::macro_f1;
use crate::models::{
    check_arity, predict, DecisionRules, EmbeddingTable, Head, ModelCheckpoint, ModelInput, Prediction, ScbmHead,
    ScbmtHead, CHECKPOINT_FORMAT_VERSION,
};
use crate::nncore::{loss_and_grad, Example, LossSpec, RmsPropConfig, RmsPropState};
use crate::scalar::Scalar;
use crate::scorer::{PersonaMode, VectorTable};
use crate::task::{HardLabel, Task};

/// The single source of randomness for a run.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Scbm,
    Scbmt,
}

impl ModelKind {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "scbm" => Ok(Self::Scbm),
            "scbmt" => Ok(Self::Scbmt),
            other => Err(Error::Config(format!("unknown model `{other}` (expected scbm or scbmt)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scbm => "scbm",
            Self::Scbmt => "scbmt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub task: Task,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub persona_mode: PersonaMode,
    /// Class name to undersample in the training split.
    pub undersample: Option<String>,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    /// Train on vote fractions instead of hard labels.
    pub soft_targets: bool,
    pub decision: DecisionRules,
}

impl TrainConfig {
    pub fn defaults(model: ModelKind, task: Task, seed: u64) -> Self {
        let (learning_rate, epochs, patience) = match model {
            ModelKind::Scbm => (2e-3, 300, 20),
            ModelKind::Scbmt => (1e-5, 16, 3),
        };
        let rms = RmsPropConfig::default();
        Self {
            model,
            task,
            learning_rate,
            epochs,
            batch_size: 32,
            persona_mode: PersonaMode::None,
            undersample: None,
            patience,
            seed,
            hidden: vec![64],
            rmsprop_decay: rms.decay,
            rmsprop_epsilon: rms.epsilon,
            soft_targets: true,
            decision: DecisionRules::default(),
        }
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            epsilon: self.rmsprop_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        self.rmsprop()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.decision.validate()?;
        if let Some(class) = &self.undersample {
            self.undersample_class(class)?;
        }
        Ok(())
    }

    fn undersample_class(&self, name: &str) -> Result<usize> {
        self.task
            .label_index(name)
            .or_else(|| self.task.parse_class(name))
            .ok_or_else(|| Error::Config(format!("task {} has no class `{name}`", self.task)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub stopped_early: bool,
    pub train_instances: usize,
    pub train_examples: usize,
    pub dev_instances: usize,
    /// Training posts removed by undersampling.
    pub undersampled_away: usize,
}

/// Model inputs for each id: one (plain) or six (personas `"0"`..`"5"`).
pub fn collect_inputs<T: Scalar>(
    ids: &[String],
    vectors: &VectorTable,
    embeddings: Option<&EmbeddingTable>,
    mode: PersonaMode,
) -> Result<Vec<Vec<ModelInput<T>>>> {
    let by_instance = vectors.by_instance();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let rows = by_instance.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let wanted: Vec<Option<String>> = match mode {
            PersonaMode::None => vec![None],
            PersonaMode::PerAnnotator => (0..ANNOTATORS_PER_POST).map(|i| Some(i.to_string())).collect(),
        };
        let mut inputs = Vec::with_capacity(wanted.len());
        for persona in &wanted {
            match rows.iter().find(|v| &v.persona_id == persona) {
                Some(v) => {
                    let embedding = embeddings.and_then(|e| e.get(id)).map(|e| e.iter().map(|&x| T::of(x)).collect());
                    inputs.push(ModelInput {
                        concepts: v.scores_as(),
                        embedding,
                    });
                }
                None => missing.push(match persona {
                    Some(p) => format!("{id} (persona {p})"),
                    None => id.clone(),
                }),
            }
        }
        out.push(inputs);
    }
    if !missing.is_empty() {
        return Err(Error::Join {
            what: "instances without concept vectors".into(),
            ids: missing,
        });
    }
    if let Some(e) = embeddings {
        e.require(ids)?;
    }
    Ok(out)
}

/// Prediction for one post: direct, or majority vote over six personas.
pub fn predict_instance<T: Scalar>(
    head: &Head<T>,
    id: &str,
    inputs: &[ModelInput<T>],
    task: Task,
    rules: &DecisionRules,
) -> Result<Prediction> {
    match inputs {
        [single] => predict(head, single, task, rules),
        _ => infer_with_voting(head, id, inputs, task, rules),
    }
}

fn select_posts<'a>(posts: &'a [AnnotatedPost], ids: &[String], split: &str) -> Result<Vec<&'a AnnotatedPost>> {
    let index: HashMap<&str, &AnnotatedPost> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut missing = Vec::new();
    let selected = ids
        .iter()
        .filter_map(|id| {
            let p = index.get(id.as_str()).copied();
            if p.is_none() {
                missing.push(id.clone());
            }
            p
        })
        .collect();
    if missing.is_empty() {
        Ok(selected)
    } else {
        Err(Error::Join {
            what: format!("{split} split ids absent from the dataset"),
            ids: missing,
        })
    }
}

pub struct TrainOutcome<T> {
    pub checkpoint: ModelCheckpoint<T>,
}

/// Trains a head on the train split, keeping the parameters of the epoch
/// with the best dev macro-F1.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    posts: &[AnnotatedPost],
    vectors: &VectorTable,
    embeddings: Option<&EmbeddingTable>,
    splits: &SplitManifest,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let task = config.task;
    if config.model == ModelKind::Scbmt && embeddings.is_none() {
        return Err(Error::Config("the scbmt model needs an embeddings file".into()));
    }
    let embeddings = match config.model {
        ModelKind::Scbm => None,
        ModelKind::Scbmt => embeddings,
    };
    if splits.train.is_empty() || splits.dev.is_empty() {
        return Err(Error::Config("train and dev splits must both be non-empty".into()));
    }

    let mut train_posts: Vec<AnnotatedPost> = select_posts(posts, &splits.train, "train")?
        .into_iter()
        .cloned()
        .collect();
    let dev_posts = select_posts(posts, &splits.dev, "dev")?;
    let mut undersampled_away = 0;
    if let Some(class) = &config.undersample {
        let out = undersample(train_posts, task, config.undersample_class(class)?, config.seed)?;
        undersampled_away = out.removed;
        train_posts = out.posts;
    }

    let train_ids: Vec<String> = train_posts.iter().map(|p| p.id.clone()).collect();
    let dev_ids: Vec<String> = dev_posts.iter().map(|p| p.id.clone()).collect();
    let train_inputs = collect_inputs::<T>(&train_ids, vectors, embeddings, config.persona_mode)?;
    let dev_inputs = collect_inputs::<T>(&dev_ids, vectors, embeddings, config.persona_mode)?;

    let mut examples: Vec<Example<ModelInput<T>, T>> = Vec::new();
    for (post, inputs) in train_posts.iter().zip(train_inputs) {
        match config.persona_mode {
            PersonaMode::None => {
                let targets = derive_targets(post, task)?;
                let target = training_target(&targets, config.soft_targets);
                let input = inputs.into_iter().next().expect("one input");
                examples.push(Example {
                    input,
                    target: target.into_iter().map(T::of).collect(),
                });
            }
            PersonaMode::PerAnnotator => {
                for (annotation, input) in post.annotations.iter().zip(inputs) {
                    let target = annotator_target(annotation, task).ok_or_else(|| {
                        Error::InvalidInput(format!("post `{}` has no task {task} labels", post.id))
                    })?;
                    examples.push(Example {
                        input,
                        target: target.into_iter().map(T::of).collect(),
                    });
                }
            }
        }
    }
    let dev_gold: Vec<HardLabel> = dev_posts
        .iter()
        .map(|p| derive_targets(p, task).map(|t| t.hard))
        .collect::<Result<_>>()?;

    let mut rng = seeded_rng(config.seed);
    let lexicon_size = vectors.adjectives.len();
    let mut head = match config.model {
        ModelKind::Scbm => Head::Scbm(ScbmHead::xavier(lexicon_size, &config.hidden, task.arity(), &mut rng)),
        ModelKind::Scbmt => {
            let dim = embeddings.expect("checked above").dim;
            Head::Scbmt(ScbmtHead::xavier(lexicon_size, dim, &config.hidden, task.arity(), &mut rng))
        }
    };
    check_arity(&head, task)?;
    let loss = LossSpec::new(task.loss_kind());
    let mut optimizer = RmsPropState::new(config.rmsprop());

    let dev_f1 = |head: &Head<T>| -> Result<f64> {
        let predicted = dev_ids
            .iter()
            .zip(&dev_inputs)
            .map(|(id, inputs)| predict_instance(head, id, inputs, task, &config.decision).map(|p| p.hard))
            .collect::<Result<Vec<_>>>()?;
        macro_f1(&predicted, &dev_gold, task.labels())
    };

    let mut history = TrainingHistory {
        learning_rate: config.learning_rate,
        max_epochs: config.epochs,
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_macro_f1: f64::NEG_INFINITY,
        stopped_early: false,
        train_instances: train_posts.len(),
        train_examples: examples.len(),
        dev_instances: dev_posts.len(),
        undersampled_away,
    };
    let mut best = (head.clone(), optimizer.clone());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example<ModelInput<T>, T>> = chunk.iter().map(|&i| &examples[i]).collect();
            let (batch_loss, grads) = loss_and_grad(&head, &batch, &loss)?;
            optimizer.step(&mut head, &grads)?;
            total += batch_loss.to_f64_lossy() * batch.len() as f64;
        }
        let f1 = dev_f1(&head)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / examples.len() as f64,
            dev_macro_f1: f1,
        });
        log::info!("epoch {epoch}: loss {:.6}, dev macro-F1 {f1:.4}", total / examples.len() as f64);
        if f1 > history.best_dev_macro_f1 {
            history.best_dev_macro_f1 = f1;
            history.best_epoch = epoch;
            best = (head.clone(), optimizer.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = epoch < config.epochs;
                break;
            }
        }
    }

    let (head, optimizer) = best;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            scalar: T::NAME.to_string(),
            task,
            lexicon_version: vectors.lexicon_version.clone(),
            concepts: vectors.adjectives.clone(),
            head,
            decision: config.decision,
            optimizer,
            config: config.clone(),
            history,
        },
    })
}

/// Per-class counts of hard labels, for summaries.
pub fn class_counts(posts: &[AnnotatedPost], task: Task) -> Result<BTreeMap<&'static str, usize>> {
    let mut counts = BTreeMap::new();
    for p in posts {
        for name in derive_targets(p, task)?.hard.names(task) {
            *counts.entry(name).or_default() += 1;
        }
    }
    Ok(counts)
}
