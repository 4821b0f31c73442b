//! The three classification subtasks and their label universes.
//!
//! Class index 0 of the binary and multiclass tasks is always a sexist class,
//! and the NON-SEXIST class (where present) is last, so "lowest index wins"
//! tie-breaks favor the positive class.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// Binary SEXIST / NON-SEXIST.
    #[serde(rename = "1.1")]
    SexismIdentification,
    /// Source intention, with NON-SEXIST kept as a fourth class.
    #[serde(rename = "1.2")]
    SourceIntention,
    /// Multi-label sexism categories.
    #[serde(rename = "1.3")]
    SexismCategorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Multiclass,
    Multilabel,
}

pub const SEXIST: &str = "SEXIST";
pub const NON_SEXIST: &str = "NON-SEXIST";

const TASK1_LABELS: [&str; 2] = [SEXIST, NON_SEXIST];
const TASK2_LABELS: [&str; 4] = ["DIRECT", "REPORTED", "JUDGEMENTAL", NON_SEXIST];
const TASK3_LABELS: [&str; 5] = [
    "IDEOLOGICAL-INEQUALITY",
    "STEREOTYPING-DOMINANCE",
    "OBJECTIFICATION",
    "SEXUAL-VIOLENCE",
    "MISOGYNY-NON-SEXUAL-VIOLENCE",
];

/// Raw annotation values meaning "no sexist label" in the multiclass and
/// multilabel annotation columns.
const NEGATIVE_MARKERS: [&str; 4] = ["-", "NO", NON_SEXIST, "UNKNOWN"];

impl Task {
    pub const ALL: [Task; 3] = [
        Task::SexismIdentification,
        Task::SourceIntention,
        Task::SexismCategorization,
    ];

    pub fn parse(id: &str) -> Result<Self> {
        match id.trim() {
            "1.1" | "1" | "task1" | "task1_1" => Ok(Self::SexismIdentification),
            "1.2" | "2" | "task2" | "task1_2" => Ok(Self::SourceIntention),
            "1.3" | "3" | "task3" | "task1_3" => Ok(Self::SexismCategorization),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::SexismIdentification => "1.1",
            Self::SourceIntention => "1.2",
            Self::SexismCategorization => "1.3",
        }
    }

    pub fn kind(self) -> TaskKind {
        match self {
            Self::SexismIdentification => TaskKind::Binary,
            Self::SourceIntention => TaskKind::Multiclass,
            Self::SexismCategorization => TaskKind::Multilabel,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Self::SexismIdentification => &TASK1_LABELS,
            Self::SourceIntention => &TASK2_LABELS,
            Self::SexismCategorization => &TASK3_LABELS,
        }
    }

    /// Width of the classifier output.
    pub fn arity(self) -> usize {
        self.labels().len()
    }

    pub fn loss_kind(self) -> LossKind {
        match self.kind() {
            TaskKind::Multilabel => LossKind::PerLabelBinaryCrossEntropy,
            _ => LossKind::SoftmaxCrossEntropySoftTarget,
        }
    }

    pub fn label_index(self, name: &str) -> Option<usize> {
        self.labels().iter().position(|l| l.eq_ignore_ascii_case(name.trim()))
    }

    /// Index of NON-SEXIST for single-label tasks.
    pub fn negative_class(self) -> Option<usize> {
        self.label_index(NON_SEXIST)
    }

    /// Maps one raw annotation value of a single-label task onto a class index.
    pub fn parse_class(self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        match self {
            Self::SexismIdentification => match raw.to_ascii_uppercase().as_str() {
                "YES" | SEXIST => Some(0),
                "NO" | NON_SEXIST => Some(1),
                _ => None,
            },
            Self::SourceIntention => {
                if NEGATIVE_MARKERS.iter().any(|m| m.eq_ignore_ascii_case(raw)) {
                    self.negative_class()
                } else {
                    self.label_index(raw)
                }
            }
            Self::SexismCategorization => None,
        }
    }

    /// Maps one raw multilabel annotation item; `Ok(None)` for the negative markers.
    pub fn parse_category(self, raw: &str) -> std::result::Result<Option<usize>, ()> {
        let raw = raw.trim();
        if NEGATIVE_MARKERS.iter().any(|m| m.eq_ignore_ascii_case(raw)) {
            return Ok(None);
        }
        self.label_index(raw).map(Some).ok_or(())
    }

    /// Label code used by the benchmark's submission files.
    pub fn submission_code(self, class: usize) -> &'static str {
        match (self, class) {
            (Self::SexismIdentification, 0) => "YES",
            (Self::SexismIdentification, _) => "NO",
            (Self::SourceIntention, 3) => "NO",
            (task, c) => task.labels()[c],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// A hard decision: one class, or a (sorted, possibly empty) label set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HardLabel {
    Class(usize),
    Labels(Vec<usize>),
}

impl HardLabel {
    pub fn class(&self) -> Option<usize> {
        match self {
            Self::Class(c) => Some(*c),
            Self::Labels(_) => None,
        }
    }

    /// Whether the instance counts as a positive for `label`.
    pub fn contains(&self, label: usize) -> bool {
        match self {
            Self::Class(c) => *c == label,
            Self::Labels(ls) => ls.contains(&label),
        }
    }

    /// Human-readable label names.
    pub fn names(&self, task: Task) -> Vec<&'static str> {
        match self {
            Self::Class(c) => vec![task.labels()[*c]],
            Self::Labels(ls) => ls.iter().map(|&l| task.labels()[l]).collect(),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
