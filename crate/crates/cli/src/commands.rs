//! The five subcommands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use scbm::evalmetrics::{metrics_report, MetricsReport, Scored};
use scbm::explain::{explain_global, explain_post, render_global, render_local, GlobalInstance, GlobalOptions, ReportFormat};
use scbm::lexicon::ConceptLexicon;
use scbm::models::{EmbeddingTable, Head, ModelCheckpoint, ModelInput, Prediction};
use scbm::pipeline::dataset::{ingest_dataset, AnnotatedPost, SplitManifest};
use scbm::pipeline::targets::derive_targets;
use scbm::pipeline::train::{collect_inputs, predict_instance, train, TrainConfig, TrainingHistory};
use scbm::scorer::{
    AffirmativeTokenSet, HttpBackend, MatchPolicy, MockBackend, PersonaMode, RetryPolicy, ScoreCache, Scorer,
    ScorerOptions, ScoringBackend, ScoringReport, VectorTable,
};
use scbm::{HardLabel, Task, TaskKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, RunConfig};
use crate::error::{CliError, CliResult};

pub const TEST_CASE: &str = "EXIST2025";
const DEFAULT_AFFIRMATIVE: [&str; 3] = ["Yes", "Si", "Sí"];

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn lexicon(config: &RunConfig) -> CliResult<ConceptLexicon> {
    Ok(match &config.paths.lexicon {
        Some(path) => ConceptLexicon::load(path)?,
        None => ConceptLexicon::builtin_default(),
    })
}

fn posts(config: &RunConfig) -> CliResult<Vec<AnnotatedPost>> {
    Ok(ingest_dataset(&config.paths.dataset, &config.fields)?)
}

fn backend(config: &RunConfig) -> CliResult<Box<dyn ScoringBackend>> {
    Ok(match config.backend.kind {
        BackendKind::Mock => Box::new(MockBackend),
        BackendKind::Http => {
            let token = config.backend.token();
            if token.is_none() {
                log::warn!("{} is not set; calling the endpoint without a token", config.backend.token_env);
            }
            Box::new(HttpBackend::new(config.backend.http_config()?, token))
        }
    })
}

fn scorer_options(config: &RunConfig) -> CliResult<ScorerOptions> {
    let mut tokens: Vec<String> = DEFAULT_AFFIRMATIVE.iter().map(|t| t.to_string()).collect();
    tokens.extend(config.backend.affirmative_tokens.iter().flatten().cloned());
    Ok(ScorerOptions {
        affirm: AffirmativeTokenSet::new(tokens, MatchPolicy::FoldCaseAndTrim)?,
        retry: RetryPolicy {
            max_attempts: config.backend.max_attempts,
            ..RetryPolicy::default()
        },
        concurrency: config.backend.concurrency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub model_id: String,
    pub lexicon_version: String,
    pub adjectives: usize,
    pub persona_mode: PersonaMode,
    pub vectors_file: PathBuf,
    pub vectors_sha256: String,
    pub report: ScoringReport,
}

impl ScoreSummary {
    pub fn line(&self) -> String {
        format!(
            "scored {} vectors x {} adjectives: {} prompts, {} cache hits, {} backend calls, {} clamped",
            self.report.vectors,
            self.adjectives,
            self.report.prompts_total,
            self.report.cache_hits,
            self.report.backend_calls,
            self.report.clamped
        )
    }
}

/// Scores every post of the dataset against the lexicon, extending the
/// cache and writing the vector matrix.
pub fn cmd_score(config: &RunConfig) -> CliResult<ScoreSummary> {
    config.validate()?;
    let posts = posts(config)?;
    let lexicon = lexicon(config)?;
    let cache = ScoreCache::open(ensure_parent(&config.cache_path())?)?;
    let scorer = Scorer::new(backend(config)?, cache, scorer_options(config)?)?;
    let scored = scorer.score_corpus(&posts, &lexicon, config.persona_mode)?;
    let table = VectorTable::new(&lexicon, scored.vectors)?;
    let vectors_file = config.vectors_path();
    write_file(&vectors_file, table.to_csv_string()?.as_bytes())?;
    let summary = ScoreSummary {
        model_id: scorer.backend().model_id().to_string(),
        lexicon_version: lexicon.version().to_string(),
        adjectives: lexicon.len(),
        persona_mode: config.persona_mode,
        vectors_sha256: file_sha256(&vectors_file)?,
        vectors_file,
        report: scored.report,
    };
    write_json(&config.paths.output_dir.join("score_report.json"), &summary)?;
    Ok(summary)
}

fn ensure_parent(path: &Path) -> CliResult<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(path.to_path_buf())
}

/// Everything needed to reproduce and audit a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub task: Task,
    pub train_config: TrainConfig,
    pub lexicon_version: String,
    pub concepts: usize,
    pub checkpoint_file: PathBuf,
    pub checkpoint_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

fn digests(entries: &[(&str, Option<&Path>)]) -> CliResult<Vec<InputDigest>> {
    entries
        .iter()
        .filter_map(|(role, p)| p.map(|p| (role, p)))
        .map(|(role, path)| {
            Ok(InputDigest {
                role: role.to_string(),
                path: path.to_path_buf(),
                sha256: file_sha256(path)?,
            })
        })
        .collect()
}

fn load_vectors(config: &RunConfig) -> CliResult<VectorTable> {
    let path = config.vectors_path();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no concept vectors at `{}`; run `scbm score` first",
            path.display()
        )));
    }
    Ok(VectorTable::load_csv(path)?)
}

fn load_embeddings(config: &RunConfig) -> CliResult<Option<EmbeddingTable>> {
    Ok(match &config.paths.embeddings {
        Some(p) => Some(EmbeddingTable::load(p)?),
        None => None,
    })
}

/// Trains the configured head and writes the checkpoint and run manifest.
pub fn cmd_train(config: &RunConfig) -> CliResult<RunManifest> {
    config.validate()?;
    let train_config = config.train_config();
    let posts = posts(config)?;
    let splits = SplitManifest::load(&config.paths.splits)?;
    let vectors = load_vectors(config)?;
    vectors.check_lexicon(&lexicon(config)?)?;
    let embeddings = load_embeddings(config)?;
    let outcome = train::<f64>(&train_config, &posts, &vectors, embeddings.as_ref(), &splits)?;
    let ckpt = outcome.checkpoint;
    let checkpoint_file = config.checkpoint_path();
    ensure_parent(&checkpoint_file)?;
    let checkpoint_sha256 = ckpt.save(&checkpoint_file)?;
    let vectors_path = config.vectors_path();
    let embeddings_path = match train_config.model {
        scbm::pipeline::train::ModelKind::Scbmt => config.paths.embeddings.as_deref(),
        scbm::pipeline::train::ModelKind::Scbm => None,
    };
    let manifest = RunManifest {
        tool: "scbm".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        task: config.task,
        lexicon_version: ckpt.lexicon_version.clone(),
        concepts: ckpt.concepts.len(),
        checkpoint_file,
        checkpoint_sha256,
        inputs: digests(&[
            ("dataset", Some(&config.paths.dataset)),
            ("splits", Some(&config.paths.splits)),
            ("vectors", Some(&vectors_path)),
            ("embeddings", embeddings_path),
        ])?,
        best_epoch: ckpt.history.best_epoch,
        best_dev_macro_f1: ckpt.history.best_dev_macro_f1,
        history: ckpt.history.clone(),
        train_config,
    };
    write_json(&config.paths.output_dir.join("run_manifest.json"), &manifest)?;
    Ok(manifest)
}

fn load_checkpoint(config: &RunConfig) -> CliResult<(ModelCheckpoint<f64>, String)> {
    let path = config.checkpoint_path();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "no checkpoint at `{}`; run `scbm train` first",
            path.display()
        )));
    }
    let ckpt = ModelCheckpoint::<f64>::load(&path)?;
    if ckpt.task != config.task {
        return Err(CliError::Config(format!(
            "checkpoint was trained for task {}, the run is configured for task {}",
            ckpt.task, config.task
        )));
    }
    Ok((ckpt, file_sha256(&path)?))
}

/// Ids of `split`, or of test (when non-empty) else dev.
fn split_ids(splits: &SplitManifest, split: Option<&str>) -> CliResult<(String, Vec<String>)> {
    let name = match split {
        Some(s) => s.to_string(),
        None if !splits.test.is_empty() => "test".into(),
        None => "dev".into(),
    };
    let ids = splits.split(&name)?.to_vec();
    if ids.is_empty() {
        return Err(CliError::Config(format!("split `{name}` is empty")));
    }
    Ok((name, ids))
}

/// Model inputs for `ids` as the checkpoint expects them.
fn inputs_for(
    config: &RunConfig,
    ckpt: &ModelCheckpoint<f64>,
    ids: &[String],
) -> CliResult<Vec<Vec<ModelInput<f64>>>> {
    let vectors = load_vectors(config)?;
    if vectors.adjectives != ckpt.concepts || vectors.lexicon_version != ckpt.lexicon_version {
        return Err(CliError::Config(format!(
            "vectors use lexicon `{}`, the checkpoint `{}`",
            vectors.lexicon_version, ckpt.lexicon_version
        )));
    }
    let embeddings = match ckpt.head {
        Head::Scbmt(_) => Some(
            load_embeddings(config)?
                .ok_or_else(|| CliError::Config("the scbmt checkpoint needs paths.embeddings".into()))?,
        ),
        Head::Scbm(_) => None,
    };
    Ok(collect_inputs(ids, &vectors, embeddings.as_ref(), ckpt.config.persona_mode)?)
}

fn predict_all(
    ckpt: &ModelCheckpoint<f64>,
    ids: &[String],
    inputs: &[Vec<ModelInput<f64>>],
) -> CliResult<Vec<Prediction>> {
    ids.iter()
        .zip(inputs)
        .map(|(id, x)| Ok(predict_instance(&ckpt.head, id, x, ckpt.task, &ckpt.decision)?))
        .collect()
}

/// Hard value in submission form.
pub fn hard_value(task: Task, label: &HardLabel) -> Value {
    match label {
        HardLabel::Class(c) => json!(task.submission_code(*c)),
        HardLabel::Labels(ls) if ls.is_empty() => json!(["NO"]),
        HardLabel::Labels(ls) => json!(ls.iter().map(|&l| task.labels()[l]).collect::<Vec<_>>()),
    }
}

/// Soft value in submission form: label code → probability.
pub fn soft_value(task: Task, soft: &[f64]) -> Value {
    let map: serde_json::Map<String, Value> = soft
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let key = match task.kind() {
                TaskKind::Multilabel => task.labels()[i],
                _ => task.submission_code(i),
            };
            (key.to_string(), json!(p))
        })
        .collect();
    Value::Object(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSummary {
    pub split: String,
    pub instances: usize,
    pub hard_file: PathBuf,
    pub soft_file: PathBuf,
}

/// Writes hard and soft predictions for a split in submission layout.
pub fn cmd_predict(config: &RunConfig, split: Option<&str>) -> CliResult<PredictSummary> {
    config.validate()?;
    let (ckpt, _) = load_checkpoint(config)?;
    let splits = SplitManifest::load(&config.paths.splits)?;
    let (split, ids) = split_ids(&splits, split)?;
    let inputs = inputs_for(config, &ckpt, &ids)?;
    let predictions = predict_all(&ckpt, &ids, &inputs)?;
    let record = |id: &String, value: Value| json!({"test_case": TEST_CASE, "id": id, "value": value});
    let hard: Vec<Value> = ids
        .iter()
        .zip(&predictions)
        .map(|(id, p)| record(id, hard_value(ckpt.task, &p.hard)))
        .collect();
    let soft: Vec<Value> = ids
        .iter()
        .zip(&predictions)
        .map(|(id, p)| record(id, soft_value(ckpt.task, &p.soft)))
        .collect();
    let dir = &config.paths.output_dir;
    let summary = PredictSummary {
        instances: ids.len(),
        hard_file: dir.join(format!("predictions_hard_{split}.json")),
        soft_file: dir.join(format!("predictions_soft_{split}.json")),
        split,
    };
    write_json(&summary.hard_file, &hard)?;
    write_json(&summary.soft_file, &soft)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainSummary {
    pub local_file: PathBuf,
    pub local_rows: usize,
    pub global_file: Option<PathBuf>,
    pub global_rows: usize,
    /// Classes without correctly classified training instances.
    pub omitted: Vec<String>,
}

/// Local explanations for a split and, with `global`, per-class rankings
/// over the correctly classified training posts (one block per language).
pub fn cmd_explain(config: &RunConfig, split: Option<&str>, global: bool) -> CliResult<ExplainSummary> {
    config.validate()?;
    let format = ReportFormat::parse(&config.explain.format)?;
    let (ckpt, _) = load_checkpoint(config)?;
    let k = config.explain.k.min(ckpt.concepts.len());
    if k < config.explain.k {
        log::warn!("explain.k = {} exceeds the {k} concepts of the checkpoint; using {k}", config.explain.k);
    }
    if matches!(ckpt.head, Head::Scbmt(_)) {
        log::warn!("scbmt checkpoint: local rankings use the concept-branch scores, not gated activations");
    }
    let posts = posts(config)?;
    let by_id: HashMap<&str, &AnnotatedPost> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let splits = SplitManifest::load(&config.paths.splits)?;
    let (split, ids) = split_ids(&splits, split)?;
    let inputs = inputs_for(config, &ckpt, &ids)?;
    let mut local = Vec::with_capacity(ids.len());
    for (id, x) in ids.iter().zip(&inputs) {
        let mut e = explain_post(&ckpt, id, x, k)?;
        if let Some(p) = by_id.get(id.as_str()) {
            e.lang = Some(p.lang.code().to_string());
            e.text = Some(p.text.clone());
        }
        local.push(e);
    }
    let ext = format.extension();
    let local_doc = render_local(&local, format)?;

    let mut summary = ExplainSummary {
        local_file: config.paths.output_dir.join(format!("explanations_local_{split}.{ext}")),
        local_rows: local.len(),
        global_file: None,
        global_rows: 0,
        omitted: Vec::new(),
    };
    let mut global_doc = None;
    if global {
        let train_inputs = inputs_for(config, &ckpt, &splits.train)?;
        let mut by_lang: std::collections::BTreeMap<&str, Vec<GlobalInstance<f64>>> = Default::default();
        for (id, x) in splits.train.iter().zip(train_inputs) {
            let post = by_id.get(id.as_str()).ok_or_else(|| scbm::Error::Join {
                what: "train ids absent from the dataset".into(),
                ids: vec![id.clone()],
            })?;
            by_lang.entry(post.lang.code()).or_default().push(GlobalInstance {
                id: id.clone(),
                inputs: x,
                gold: derive_targets(post, ckpt.task)?.hard,
            });
        }
        let mut explanations = Vec::new();
        for (lang, instances) in by_lang {
            let options = GlobalOptions {
                include_negative: config.explain.include_negative,
                lang: Some(lang.to_string()),
            };
            let report = explain_global(&ckpt, &instances, &options)?;
            summary.omitted.extend(report.omitted.iter().map(|c| format!("{lang}:{c}")));
            explanations.extend(report.explanations);
        }
        summary.global_rows = explanations.len();
        global_doc = Some(render_global(&explanations, k, format)?);
        summary.global_file = Some(config.paths.output_dir.join(format!("explanations_global.{ext}")));
    }
    write_file(&summary.local_file, local_doc.as_bytes())?;
    if let (Some(path), Some(doc)) = (&summary.global_file, global_doc) {
        write_file(path, doc.as_bytes())?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub task: Task,
    pub split: String,
    pub checkpoint_sha256: String,
    pub n: usize,
    pub macro_f1: f64,
    pub cross_entropy: f64,
    pub report: MetricsReport,
}

/// Scores a split against its gold labels and writes `metrics_<split>.json`.
pub fn cmd_evaluate(config: &RunConfig, split: Option<&str>) -> CliResult<MetricsDocument> {
    config.validate()?;
    let (ckpt, checkpoint_sha256) = load_checkpoint(config)?;
    let posts = posts(config)?;
    let by_id: HashMap<&str, &AnnotatedPost> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let splits = SplitManifest::load(&config.paths.splits)?;
    let (split, ids) = split_ids(&splits, split.or(Some("dev")))?;
    let missing: Vec<String> = ids.iter().filter(|id| !by_id.contains_key(id.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(scbm::Error::Join {
            what: format!("{split} ids absent from the dataset"),
            ids: missing,
        }
        .into());
    }
    let inputs = inputs_for(config, &ckpt, &ids)?;
    let predictions = predict_all(&ckpt, &ids, &inputs)?;
    let mut items = Vec::with_capacity(ids.len());
    for (id, p) in ids.iter().zip(predictions) {
        let post = by_id[id.as_str()];
        let targets = derive_targets(post, ckpt.task)?;
        items.push(Scored {
            lang: post.lang.code(),
            predicted: p.hard,
            gold: targets.hard,
            soft_predicted: p.soft,
            soft_gold: targets.soft.distribution,
        });
    }
    let report = metrics_report(ckpt.task, &items)?;
    let doc = MetricsDocument {
        task: ckpt.task,
        n: report.pooled.n,
        macro_f1: report.pooled.macro_f1,
        cross_entropy: report.pooled.cross_entropy,
        split: split.clone(),
        checkpoint_sha256,
        report,
    };
    write_json(&config.paths.output_dir.join(format!("metrics_{split}.json")), &doc)?;
    Ok(doc)
}
