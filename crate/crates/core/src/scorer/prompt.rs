use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::dataset::AnnotatorProfile;

/// Question asked for every (adjective, text) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoringPrompt {
    pub persona_prefix: Option<String>,
    pub body: String,
}

impl ScoringPrompt {
    /// The exact string sent to the endpoint.
    pub fn rendered(&self) -> String {
        match &self.persona_prefix {
            Some(prefix) => format!("{prefix}. {}", self.body),
            None => self.body.clone(),
        }
    }

    pub fn sha256(&self) -> [u8; 32] {
        Sha256::digest(self.rendered().as_bytes()).into()
    }
}

pub fn build_prompt(adjective: &str, text: &str, persona: Option<&AnnotatorProfile>) -> Result<ScoringPrompt> {
    if adjective.trim().is_empty() {
        return Err(Error::InvalidInput("empty adjective".into()));
    }
    if text.trim().is_empty() {
        return Err(Error::InvalidInput("empty text".into()));
    }
    Ok(ScoringPrompt {
        persona_prefix: persona.map(persona_sentence),
        body: format!("Tell me if the adjective {adjective} describes the content of the following text: {text}?"),
    })
}

/// "You are a {gender} aged {age} with {ethnicity} ethnicity with a {education} coming from {country}"
pub fn persona_sentence(profile: &AnnotatorProfile) -> String {
    format!(
        "You are a {} aged {} with {} ethnicity with a {} coming from {}",
        gender_noun(&profile.gender),
        age_phrase(&profile.age_group),
        ethnicity_word(&profile.ethnicity),
        education_phrase(&profile.education),
        profile.country.trim(),
    )
}

fn gender_noun(raw: &str) -> String {
    match raw.trim().to_lowercase().as_str() {
        "m" | "male" | "man" => "man".into(),
        "f" | "female" | "woman" => "woman".into(),
        other => other.into(),
    }
}

fn age_phrase(raw: &str) -> String {
    let raw = raw.trim();
    // The benchmark's oldest bracket is "46+", i.e. older than 45.
    if raw == "46+" {
        return "above 45 years old".into();
    }
    if let Some(n) = raw.strip_suffix('+') {
        return format!("above {} years old", n.trim());
    }
    if let Some((lo, hi)) = raw.split_once('-') {
        if lo.trim().parse::<u32>().is_ok() && hi.trim().parse::<u32>().is_ok() {
            return format!("between {} and {} years old", lo.trim(), hi.trim());
        }
    }
    raw.into()
}

fn ethnicity_word(raw: &str) -> String {
    match raw.trim() {
        "Hispano or Latino" | "Hispanic or Latino" => "latino".into(),
        "White or Caucasian" => "white".into(),
        "Black or African American" => "black".into(),
        other => other.to_lowercase(),
    }
}

fn education_phrase(raw: &str) -> String {
    let raw = raw.trim();
    if raw.ends_with("'s") || raw.ends_with("’s") {
        format!("{raw} degree")
    } else {
        raw.into()
    }
}
