use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top-k first-token probabilities reported by an endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub entries: Vec<(String, f64)>,
    pub truncation_k: usize,
}

impl TokenDistribution {
    /// Slack allowed on the total mass for rounding in endpoint replies.
    pub const MASS_TOLERANCE: f64 = 1e-6;

    pub fn new(entries: Vec<(String, f64)>, truncation_k: usize) -> Result<Self> {
        let dist = Self { entries, truncation_k };
        dist.validate()?;
        Ok(dist)
    }

    /// Converts natural-log probabilities.
    pub fn from_logprobs<I, S>(logprobs: I, truncation_k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries = logprobs
            .into_iter()
            .map(|(t, lp)| (t.into(), lp.exp()))
            .collect();
        Self::new(entries, truncation_k)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((t, p)) = self.entries.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::Protocol(format!("token `{t}` has probability {p} outside [0, 1]")));
        }
        let mass: f64 = self.entries.iter().map(|(_, p)| p).sum();
        if mass > 1.0 + Self::MASS_TOLERANCE {
            return Err(Error::Protocol(format!("token probabilities sum to {mass} > 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    Exact,
    #[default]
    FoldCaseAndTrim,
}

/// Tokens that open an affirmative answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffirmativeTokenSet {
    tokens: BTreeSet<String>,
    policy: MatchPolicy,
}

impl Default for AffirmativeTokenSet {
    fn default() -> Self {
        Self::new(["Yes", "Si", "Sí"], MatchPolicy::FoldCaseAndTrim).expect("non-empty")
    }
}

/// Word-boundary markers tokenizers put in front of tokens.
const TOKEN_MARKERS: [char; 3] = ['_', '\u{2581}', '\u{0120}'];

fn fold(token: &str) -> String {
    token
        .trim()
        .trim_matches(|c: char| TOKEN_MARKERS.contains(&c) || c.is_whitespace())
        .to_lowercase()
}

impl AffirmativeTokenSet {
    pub fn new<I, S>(tokens: I, policy: MatchPolicy) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| match policy {
                MatchPolicy::Exact => t.as_ref().to_string(),
                MatchPolicy::FoldCaseAndTrim => fold(t.as_ref()),
            })
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Error::InvalidInput("affirmative token set is empty".into()));
        }
        Ok(Self { tokens, policy })
    }

    pub fn policy(&self) -> MatchPolicy {
        self.policy
    }

    pub fn matches(&self, token: &str) -> bool {
        match self.policy {
            MatchPolicy::Exact => self.tokens.contains(token),
            MatchPolicy::FoldCaseAndTrim => self.tokens.contains(&fold(token)),
        }
    }
}

/// Probability mass on affirmative tokens, before clamping.
pub fn affirmative_mass(dist: &TokenDistribution, affirm: &AffirmativeTokenSet) -> f64 {
    dist.entries
        .iter()
        .filter(|(token, _)| affirm.matches(token))
        .map(|(_, p)| p)
        .sum()
}

/// Relevance score: affirmative mass clamped to `[0, 1]`.
pub fn marginal_affirmative_score(dist: &TokenDistribution, affirm: &AffirmativeTokenSet) -> f64 {
    // An empty float sum is -0.0; `+ 0.0` normalises it.
    affirmative_mass(dist, affirm).clamp(0.0, 1.0) + 0.0
}
