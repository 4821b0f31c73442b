//! Concept vectors and their CSV export.
//!
//! ```text
//! # lexicon_version=exist2025-default
//! instance_id,persona_id,abusive,aggressive,...
//! 100001,,0.25,0.5,...
//! 100001,0,0.125,0.75,...
//! ```
//!
//! An empty `persona_id` means the vector was scored without a persona.
//! Scores use the shortest decimal form that parses back to the same `f64`.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::ConceptLexicon;

const VERSION_PREFIX: &str = "# lexicon_version=";

/// Relevance scores of one text (optionally seen through one persona).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVector {
    pub instance_id: String,
    pub persona_id: Option<String>,
    pub scores: Vec<f64>,
    pub lexicon_version: String,
}

impl ConceptVector {
    pub fn new(
        instance_id: impl Into<String>,
        persona_id: Option<String>,
        scores: Vec<f64>,
        lexicon_version: impl Into<String>,
    ) -> Result<Self> {
        let v = Self {
            instance_id: instance_id.into(),
            persona_id,
            scores,
            lexicon_version: lexicon_version.into(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, s)) = self.scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidInput(format!(
                "score {s} at position {i} of `{}` is outside [0, 1]",
                self.instance_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores converted to the model scalar type.
    pub fn scores_as<T: crate::scalar::Scalar>(&self) -> Vec<T> {
        self.scores.iter().map(|&s| T::of(s)).collect()
    }
}

/// All vectors of a corpus, scored against one lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    pub lexicon_version: String,
    pub adjectives: Vec<String>,
    pub vectors: Vec<ConceptVector>,
}

impl VectorTable {
    pub fn new(lexicon: &ConceptLexicon, vectors: Vec<ConceptVector>) -> Result<Self> {
        let table = Self {
            lexicon_version: lexicon.version().to_string(),
            adjectives: lexicon.concepts().to_vec(),
            vectors,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for v in &self.vectors {
            if v.scores.len() != self.adjectives.len() {
                return Err(Error::shape(format!(
                    "vector `{}` has {} scores for {} adjectives",
                    v.instance_id,
                    v.scores.len(),
                    self.adjectives.len()
                )));
            }
            if v.lexicon_version != self.lexicon_version {
                return Err(Error::InvalidInput(format!(
                    "vector `{}` was scored with lexicon `{}`, table uses `{}`",
                    v.instance_id, v.lexicon_version, self.lexicon_version
                )));
            }
            if !seen.insert((&v.instance_id, &v.persona_id)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate vector for instance `{}` persona {:?}",
                    v.instance_id, v.persona_id
                )));
            }
            v.validate()?;
        }
        Ok(())
    }

    /// Checks that the table was built for `lexicon`.
    pub fn check_lexicon(&self, lexicon: &ConceptLexicon) -> Result<()> {
        if self.lexicon_version != lexicon.version() || self.adjectives != lexicon.concepts() {
            return Err(Error::InvalidInput(format!(
                "vectors were scored with lexicon `{}`, expected `{}`",
                self.lexicon_version,
                lexicon.version()
            )));
        }
        Ok(())
    }

    /// Vectors grouped by instance id, in first-appearance order within each group.
    pub fn by_instance(&self) -> BTreeMap<&str, Vec<&ConceptVector>> {
        let mut map: BTreeMap<&str, Vec<&ConceptVector>> = BTreeMap::new();
        for v in &self.vectors {
            map.entry(v.instance_id.as_str()).or_default().push(v);
        }
        map
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = format!("{VERSION_PREFIX}{}\n", self.lexicon_version);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["instance_id".to_string(), "persona_id".to_string()];
        header.extend(self.adjectives.iter().cloned());
        w.write_record(&header)?;
        for v in &self.vectors {
            let mut row = vec![v.instance_id.clone(), v.persona_id.clone().unwrap_or_default()];
            row.extend(v.scores.iter().map(|s| s.to_string()));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push_str(std::str::from_utf8(&bytes).expect("csv writer emits UTF-8"));
        Ok(out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|e| match e {
            Error::Schema { record, message, .. } => Error::Schema {
                path: path.display().to_string(),
                record,
                message,
            },
            other => other,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let schema = |record: Option<String>, message: String| Error::Schema {
            path: "<vectors>".into(),
            record,
            message,
        };
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let lexicon_version = first
            .trim_end_matches('\r')
            .strip_prefix(VERSION_PREFIX)
            .ok_or_else(|| schema(None, format!("first line must be `{VERSION_PREFIX}<version>`")))?
            .to_string();
        let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() < 2 || &header[0] != "instance_id" || &header[1] != "persona_id" {
            return Err(schema(None, "header must start with `instance_id,persona_id`".into()));
        }
        let adjectives: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut vectors = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let id = record.get(0).unwrap_or_default().to_string();
            let scores = record
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| schema(Some(id.clone()), format!("row {}: {e}", row + 1)))?;
            let persona = record.get(1).filter(|p| !p.is_empty()).map(str::to_string);
            vectors.push(ConceptVector {
                instance_id: id,
                persona_id: persona,
                scores,
                lexicon_version: lexicon_version.clone(),
            });
        }
        let table = Self {
            lexicon_version,
            adjectives,
            vectors,
        };
        table.validate()?;
        Ok(table)
    }
}
