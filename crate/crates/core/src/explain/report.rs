//! Tabular rendering of explanations as CSV, markdown or plain text.

use serde::{Deserialize, Serialize};

use super::{GlobalExplanation, LocalExplanation, RankedAdjective};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Plain,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            "txt" | "text" | "plain" => Ok(Self::Plain),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Markdown => "md",
            Self::Plain => "txt",
        }
    }
}

const LOCAL_COLUMNS: [&str; 5] = ["lang", "task", "class", "text", "adjectives"];
const GLOBAL_COLUMNS: [&str; 4] = ["lang", "task", "class", "adjectives"];

fn join(adjectives: &[RankedAdjective]) -> String {
    adjectives.iter().map(|a| a.adjective.as_str()).collect::<Vec<_>>().join(", ")
}

fn dash(s: &Option<String>) -> String {
    s.clone().unwrap_or_else(|| "-".into())
}

/// One row per explanation: lang, task, class, text, adjectives.
pub fn render_local(explanations: &[LocalExplanation], format: ReportFormat) -> Result<String> {
    if explanations.is_empty() {
        return Err(Error::InvalidInput("no local explanations to report".into()));
    }
    let rows: Vec<Vec<String>> = explanations
        .iter()
        .map(|e| {
            let names = e.predicted.names(e.task);
            let class = if names.is_empty() { "-".to_string() } else { names.join(";") };
            vec![dash(&e.lang), e.task.to_string(), class, dash(&e.text), join(&e.adjectives)]
        })
        .collect();
    render(&LOCAL_COLUMNS, &rows, format)
}

/// One row per class with its `k` highest-ranked adjectives.
pub fn render_global(explanations: &[GlobalExplanation], k: usize, format: ReportFormat) -> Result<String> {
    if explanations.is_empty() {
        return Err(Error::InvalidInput("no global explanations to report".into()));
    }
    let rows: Vec<Vec<String>> = explanations
        .iter()
        .map(|e| {
            let top = &e.adjectives[..k.min(e.adjectives.len())];
            vec![dash(&e.lang), e.task.to_string(), e.task.labels()[e.label].to_string(), join(top)]
        })
        .collect();
    render(&GLOBAL_COLUMNS, &rows, format)
}

fn render(columns: &[&str], rows: &[Vec<String>], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(columns)?;
            for row in rows {
                w.write_record(row)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
        }
        ReportFormat::Markdown => {
            let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
            let escape = |s: &str| s.replace('|', "\\|").replace('\n', " ");
            let mut out = line(columns.iter().map(|c| c.to_string()).collect());
            out += &line(columns.iter().map(|_| "---".to_string()).collect());
            for row in rows {
                out += &line(row.iter().map(|c| escape(c)).collect());
            }
            Ok(out)
        }
        ReportFormat::Plain => {
            let flat: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|c| c.replace('\n', " ")).collect()).collect();
            let mut widths: Vec<usize> = columns.iter().map(|c| c.chars().count()).collect();
            for row in &flat {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: &[String]| {
                let padded: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                    .collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            let mut out = line(&columns.iter().map(|c| c.to_string()).collect::<Vec<_>>());
            for row in &flat {
                out += &line(row);
            }
            Ok(out)
        }
    }
}
