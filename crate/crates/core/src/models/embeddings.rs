//! Precomputed text embeddings for the SCBMT head.
//!
//! JSON lines; the first line is a header:
//!
//! ```text
//! {"dim": 1024, "provider": "xlm-roberta-large"}
//! {"id": "100001", "vector": [0.1, -0.3, ...]}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub vector: Vec<f64>,
    #[serde(skip)]
    pub provider_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dim: usize,
    provider: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub provider: String,
    records: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provider: impl Into<String>, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for r in records {
            if r.vector.len() != dim {
                return Err(Error::shape(format!(
                    "embedding `{}` has dimension {}, header declares {dim}",
                    r.instance_id,
                    r.vector.len()
                )));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("embedding `{}` has non-finite entries", r.instance_id)));
            }
            if map.insert(r.instance_id.clone(), r.vector).is_some() {
                return Err(Error::InvalidInput(format!("duplicate embedding for `{}`", r.instance_id)));
            }
        }
        Ok(Self {
            dim,
            provider: provider.into(),
            records: map,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let schema = |line: usize, message: String| Error::Schema {
            path: format!("line {line}"),
            record: None,
            message,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| schema(1, "missing header line".into()))?;
        let header: Header = serde_json::from_str(first).map_err(|e| schema(1, e.to_string()))?;
        let records = lines
            .map(|(i, line)| {
                let mut r: EmbeddingRecord = serde_json::from_str(line).map_err(|e| schema(i + 1, e.to_string()))?;
                r.provider_tag = header.provider.clone();
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(header.dim, header.provider, records)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Header {
            dim: self.dim,
            provider: self.provider.clone(),
        })?;
        out.push('\n');
        for (id, vector) in &self.records {
            out.push_str(&serde_json::to_string(&serde_json::json!({"id": id, "vector": vector}))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.records.get(id).map(Vec::as_slice)
    }

    /// Ids from `ids` that have no embedding.
    pub fn missing<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        ids.into_iter()
            .filter(|id| !self.records.contains_key(id.as_str()))
            .cloned()
            .collect()
    }

    /// Fails with every id that has no embedding.
    pub fn require<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Result<()> {
        let missing = self.missing(ids);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Join {
                what: "instances without embeddings".into(),
                ids: missing,
            })
        }
    }
}
