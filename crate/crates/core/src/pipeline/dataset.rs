//! Annotated posts and their ingestion from record-collection files.
//!
//! Accepted layouts: JSON lines, a JSON array of records, or a JSON object
//! mapping ids to records (the layout of the benchmark's own exports). Field
//! names are taken from a [`FieldMapping`], so exports are read as-is.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::task::Task;

/// Every post carries this many annotator records.
pub const ANNOTATORS_PER_POST: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    #[serde(rename = "EN", alias = "en")]
    En,
    #[serde(rename = "ES", alias = "es")]
    Es,
}

impl Lang {
    pub fn code(self) -> &'static str {
        match self {
            Lang::En => "EN",
            Lang::Es => "ES",
        }
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Lang::En),
            "es" | "spanish" => Ok(Lang::Es),
            other => Err(Error::InvalidInput(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Demographic description of one annotator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub gender: String,
    pub age_group: String,
    pub ethnicity: String,
    pub education: String,
    pub country: String,
}

/// One annotator's record for a post. Label fields are `None` for unlabeled
/// splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub profile: AnnotatorProfile,
    pub task1: Option<usize>,
    pub task2: Option<usize>,
    pub task3: Option<Vec<usize>>,
}

impl Annotation {
    /// Class index (single-label tasks) voted by this annotator.
    pub fn class_vote(&self, task: Task) -> Option<usize> {
        match task {
            Task::SexismIdentification => self.task1,
            Task::SourceIntention => self.task2,
            Task::SexismCategorization => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPost {
    pub id: String,
    pub lang: Lang,
    pub text: String,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedPost {
    pub fn new(id: impl Into<String>, lang: Lang, text: impl Into<String>, annotations: Vec<Annotation>) -> Result<Self> {
        let id = id.into();
        if annotations.len() != ANNOTATORS_PER_POST {
            return Err(Error::AnnotationCount {
                id,
                found: annotations.len(),
            });
        }
        Ok(Self {
            id,
            lang,
            text: text.into(),
            annotations,
        })
    }

    pub fn is_labeled(&self, task: Task) -> bool {
        self.annotations.iter().all(|a| match task {
            Task::SexismIdentification => a.task1.is_some(),
            Task::SourceIntention => a.task2.is_some(),
            Task::SexismCategorization => a.task3.is_some(),
        })
    }
}

/// Dotted field paths locating each attribute inside a record.
///
/// Annotator attributes are parallel arrays of length six. A label field set
/// to `None` marks an unlabeled collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMapping {
    pub id: String,
    pub lang: String,
    pub text: String,
    pub annotator_genders: String,
    pub annotator_ages: String,
    pub annotator_ethnicities: String,
    pub annotator_educations: String,
    pub annotator_countries: String,
    pub task1_labels: Option<String>,
    pub task2_labels: Option<String>,
    pub task3_labels: Option<String>,
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            id: "id_EXIST".into(),
            lang: "lang".into(),
            text: "tweet".into(),
            annotator_genders: "gender_annotators".into(),
            annotator_ages: "age_annotators".into(),
            annotator_ethnicities: "ethnicities_annotators".into(),
            annotator_educations: "study_levels_annotators".into(),
            annotator_countries: "countries_annotators".into(),
            task1_labels: Some("labels_task1_1".into()),
            task2_labels: Some("labels_task1_2".into()),
            task3_labels: Some("labels_task1_3".into()),
        }
    }
}

impl FieldMapping {
    pub fn unlabeled() -> Self {
        Self {
            task1_labels: None,
            task2_labels: None,
            task3_labels: None,
            ..Self::default()
        }
    }
}

/// Reads and validates every record of `path`.
///
/// All violations are collected; a single violation is returned as its own
/// error kind, several as [`Error::Validation`].
pub fn ingest_dataset(path: impl AsRef<Path>, mapping: &FieldMapping) -> Result<Vec<AnnotatedPost>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, mapping)
}

pub fn parse_dataset(text: &str, mapping: &FieldMapping) -> Result<Vec<AnnotatedPost>> {
    let records = split_records(text)?;
    let mut posts = Vec::with_capacity(records.len());
    let mut errors = Vec::new();
    for (key, record) in &records {
        match parse_record(key.as_deref(), record, mapping) {
            Ok(post) => posts.push(post),
            Err(e) => errors.push(e),
        }
    }
    match errors.len() {
        0 => Ok(posts),
        1 => Err(errors.pop().expect("one error")),
        _ => Err(Error::Validation(errors.iter().map(ToString::to_string).collect())),
    }
}

fn split_records(text: &str) -> Result<Vec<(Option<String>, Value)>> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if let Ok(value) = serde_json::from_str::<Value>(text) {
        return match value {
            Value::Array(items) => Ok(items.into_iter().map(|v| (None, v)).collect()),
            Value::Object(map) if map.values().all(Value::is_object) => {
                Ok(map.into_iter().map(|(k, v)| (Some(k), v)).collect())
            }
            // A single-line JSON-lines file.
            other @ Value::Object(_) => Ok(vec![(None, other)]),
            _ => Err(Error::Schema {
                path: "$".into(),
                record: None,
                message: "expected an array or object of records".into(),
            }),
        };
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line).map(|v| (None, v)).map_err(|e| Error::Schema {
                path: format!("line {}", n + 1),
                record: None,
                message: e.to_string(),
            })
        })
        .collect()
}

fn lookup<'a>(record: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(record, |v, part| match v {
        Value::Object(map) => map.get(part),
        Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_record(key: Option<&str>, record: &Value, mapping: &FieldMapping) -> Result<AnnotatedPost> {
    let id = match lookup(record, &mapping.id).and_then(scalar_string) {
        Some(id) => id,
        None => key.map(str::to_string).ok_or_else(|| Error::Schema {
            path: mapping.id.clone(),
            record: None,
            message: "missing id".into(),
        })?,
    };
    let schema = |path: &str, message: &str| Error::Schema {
        path: path.to_string(),
        record: Some(id.clone()),
        message: message.to_string(),
    };
    let string_field = |path: &str| -> Result<String> {
        lookup(record, path)
            .and_then(scalar_string)
            .ok_or_else(|| schema(path, "missing or not a string"))
    };
    let array_field = |path: &str| -> Result<&Vec<Value>> {
        lookup(record, path)
            .and_then(Value::as_array)
            .ok_or_else(|| schema(path, "missing or not an array"))
    };
    let string_array = |path: &str| -> Result<Vec<String>> {
        array_field(path)?
            .iter()
            .map(|v| scalar_string(v).ok_or_else(|| schema(path, "array holds a non-string")))
            .collect()
    };

    let lang: Lang = string_field(&mapping.lang)?
        .parse()
        .map_err(|e: Error| schema(&mapping.lang, &e.to_string()))?;
    let text = string_field(&mapping.text)?;

    let genders = string_array(&mapping.annotator_genders)?;
    let ages = string_array(&mapping.annotator_ages)?;
    let ethnicities = string_array(&mapping.annotator_ethnicities)?;
    let educations = string_array(&mapping.annotator_educations)?;
    let countries = string_array(&mapping.annotator_countries)?;

    let count = genders.len();
    for (path, len) in [
        (&mapping.annotator_ages, ages.len()),
        (&mapping.annotator_ethnicities, ethnicities.len()),
        (&mapping.annotator_educations, educations.len()),
        (&mapping.annotator_countries, countries.len()),
    ] {
        if len != count {
            return Err(schema(path, &format!("{len} entries but {count} annotator genders")));
        }
    }

    let single_labels = |path: &Option<String>, task: Task| -> Result<Option<Vec<usize>>> {
        let Some(path) = path else { return Ok(None) };
        let raw = string_array(path)?;
        if raw.len() != count {
            return Err(schema(path, &format!("{} labels for {count} annotators", raw.len())));
        }
        raw.iter()
            .map(|r| {
                task.parse_class(r)
                    .ok_or_else(|| schema(path, &format!("label `{r}` outside task {task} universe")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    };
    let task1 = single_labels(&mapping.task1_labels, Task::SexismIdentification)?;
    let task2 = single_labels(&mapping.task2_labels, Task::SourceIntention)?;
    let task3 = match &mapping.task3_labels {
        None => None,
        Some(path) => {
            let items = array_field(path)?;
            if items.len() != count {
                return Err(schema(path, &format!("{} label sets for {count} annotators", items.len())));
            }
            let task = Task::SexismCategorization;
            let mut sets = Vec::with_capacity(count);
            for item in items {
                let raw: Vec<String> = match item {
                    Value::Array(values) => values
                        .iter()
                        .map(|v| scalar_string(v).ok_or_else(|| schema(path, "label set holds a non-string")))
                        .collect::<Result<_>>()?,
                    other => vec![scalar_string(other).ok_or_else(|| schema(path, "unreadable label set"))?],
                };
                let mut set = Vec::new();
                for r in &raw {
                    match task.parse_category(r) {
                        Ok(Some(l)) => set.push(l),
                        Ok(None) => {}
                        Err(()) => {
                            return Err(schema(path, &format!("label `{r}` outside task {task} universe")))
                        }
                    }
                }
                set.sort_unstable();
                set.dedup();
                sets.push(set);
            }
            Some(sets)
        }
    };

    let annotations = (0..count)
        .map(|i| Annotation {
            profile: AnnotatorProfile {
                gender: genders[i].clone(),
                age_group: ages[i].clone(),
                ethnicity: ethnicities[i].clone(),
                education: educations[i].clone(),
                country: countries[i].clone(),
            },
            task1: task1.as_ref().map(|l| l[i]),
            task2: task2.as_ref().map(|l| l[i]),
            task3: task3.as_ref().map(|l| l[i].clone()),
        })
        .collect();
    AnnotatedPost::new(id, lang, text, annotations)
}

/// Train/dev(/test) id lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }

    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}
