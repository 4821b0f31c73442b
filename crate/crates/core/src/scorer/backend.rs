//! Sources of first-token distributions.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::affirm::TokenDistribution;
use super::prompt::ScoringPrompt;

/// One question put to a backend.
#[derive(Debug, Clone)]
pub struct ScoringRequest<'a> {
    pub adjective: &'a str,
    pub text: &'a str,
    pub prompt: &'a ScoringPrompt,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: transport failure, rate limiting, server error.
    #[error("transient backend failure: {0}")]
    Transient(String),
    /// Retrying will not help (bad credentials, rejected request).
    #[error("backend rejected the request: {0}")]
    Fatal(String),
    /// The reply did not have the expected shape.
    #[error("malformed backend reply: {0}")]
    Protocol(String),
}

pub trait ScoringBackend: Send + Sync {
    /// Identifies the model; part of every cache key.
    fn model_id(&self) -> &str;

    fn first_token_distribution(&self, request: &ScoringRequest<'_>) -> Result<TokenDistribution, BackendError>;
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for &B {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn first_token_distribution(&self, request: &ScoringRequest<'_>) -> Result<TokenDistribution, BackendError> {
        (**self).first_token_distribution(request)
    }
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for Box<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn first_token_distribution(&self, request: &ScoringRequest<'_>) -> Result<TokenDistribution, BackendError> {
        (**self).first_token_distribution(request)
    }
}

/// Exponential backoff: attempt `n` (0-based) waits `base · 2ⁿ`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay_before_retry(&self, failed_attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(failed_attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Offline, deterministic stand-in for an LLM endpoint.
///
/// For a request with adjective `a`, text `t` and persona prefix `p` (empty
/// when absent), let `h = fnv1a64(a ‖ 0x1F ‖ t ‖ 0x1F ‖ p)` over the UTF-8
/// bytes. The reply is `{"Yes": y, "No": 1 − y}` with
/// `y = (h >> 11) · 2⁻⁵³`, which lies in `[0, 1)`.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub const MODEL_ID: &'static str = "mock-fnv1a-v1";

    pub fn yes_probability(adjective: &str, text: &str, persona_prefix: Option<&str>) -> f64 {
        let mut bytes = Vec::with_capacity(adjective.len() + text.len() + 64);
        bytes.extend_from_slice(adjective.as_bytes());
        bytes.push(0x1f);
        bytes.extend_from_slice(text.as_bytes());
        bytes.push(0x1f);
        bytes.extend_from_slice(persona_prefix.unwrap_or("").as_bytes());
        (fnv1a64(&bytes) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl ScoringBackend for MockBackend {
    fn model_id(&self) -> &str {
        Self::MODEL_ID
    }

    fn first_token_distribution(&self, request: &ScoringRequest<'_>) -> Result<TokenDistribution, BackendError> {
        let yes = Self::yes_probability(request.adjective, request.text, request.prompt.persona_prefix.as_deref());
        Ok(TokenDistribution {
            entries: vec![("Yes".into(), yes), ("No".into(), 1.0 - yes)],
            truncation_k: 2,
        })
    }
}

/// Settings of an OpenAI-style completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// e.g. `http://localhost:8000/v1`; `/completions` is appended.
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_top_k() -> usize {
    20
}

fn default_timeout_secs() -> u64 {
    60
}

/// Client for an endpoint returning top-k first-token log-probabilities.
///
/// Sends `{"model", "prompt", "max_tokens": 1, "logprobs": k}` to
/// `{base_url}/completions` and reads either
/// `choices[0].logprobs.top_logprobs[0]` (a token → logprob map) or the chat
/// shape `choices[0].logprobs.content[0].top_logprobs` (a list of
/// `{token, logprob}`).
pub struct HttpBackend {
    config: HttpBackendConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, token, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ScoringBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn first_token_distribution(&self, request: &ScoringRequest<'_>) -> Result<TokenDistribution, BackendError> {
        let body = json!({
            "model": self.config.model_id,
            "prompt": request.prompt.rendered(),
            "max_tokens": 1,
            "logprobs": self.config.top_k,
        });
        let mut call = self.agent.post(&self.endpoint());
        if let Some(token) = &self.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {status}: {text}"))),
            _ => return Err(BackendError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        parse_logprobs_reply(&value, self.config.top_k)
    }
}

/// Extracts the first-token distribution from a completion reply.
pub fn parse_logprobs_reply(value: &Value, top_k: usize) -> Result<TokenDistribution, BackendError> {
    let logprobs = value
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| BackendError::Protocol("reply has no choices[0].logprobs".into()))?;
    let pairs: Vec<(String, f64)> = if let Some(map) = logprobs.pointer("/top_logprobs/0").and_then(Value::as_object) {
        map.iter()
            .map(|(t, lp)| {
                lp.as_f64()
                    .map(|lp| (t.clone(), lp))
                    .ok_or_else(|| BackendError::Protocol(format!("logprob of `{t}` is not a number")))
            })
            .collect::<Result<_, _>>()?
    } else if let Some(list) = logprobs.pointer("/content/0/top_logprobs").and_then(Value::as_array) {
        list.iter()
            .map(|item| {
                let token = item.get("token").and_then(Value::as_str);
                let lp = item.get("logprob").and_then(Value::as_f64);
                match (token, lp) {
                    (Some(t), Some(lp)) => Ok((t.to_string(), lp)),
                    _ => Err(BackendError::Protocol(format!("bad top_logprobs entry {item}"))),
                }
            })
            .collect::<Result<_, _>>()?
    } else {
        return Err(BackendError::Protocol("reply has no first-token top_logprobs".into()));
    };
    TokenDistribution::from_logprobs(pairs, top_k).map_err(|e| BackendError::Protocol(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::prompt::build_prompt;

    #[test]
    fn fnv1a_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn mock_distribution_is_a_distribution() {
        let prompt = build_prompt("rude", "some text", None).unwrap();
        let req = ScoringRequest { adjective: "rude", text: "some text", prompt: &prompt };
        let d = MockBackend.first_token_distribution(&req).unwrap();
        assert_eq!(d.entries.len(), 2);
        assert!(d.validate().is_ok());
        assert_eq!(d.entries[0].1, MockBackend::yes_probability("rude", "some text", None));
        assert_eq!(d, MockBackend.first_token_distribution(&req).unwrap());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(700),
        };
        let delays: Vec<u128> = (0..5).map(|i| p.delay_before_retry(i).as_millis()).collect();
        assert_eq!(delays, vec![100, 200, 400, 700, 700]);
        assert_eq!(p.delay_before_retry(40), Duration::from_millis(700));
    }

    #[test]
    fn parses_completion_and_chat_shapes() {
        let completion = json!({"choices": [{"logprobs": {"top_logprobs": [{"Yes": (0.6f64).ln(), "No": (0.4f64).ln()}]}}]});
        let d = parse_logprobs_reply(&completion, 20).unwrap();
        let yes = d.entries.iter().find(|(t, _)| t == "Yes").unwrap().1;
        assert!((yes - 0.6).abs() < 1e-15);

        let chat = json!({"choices": [{"logprobs": {"content": [{"token": "Yes", "logprob": 0.0,
            "top_logprobs": [{"token": "Yes", "logprob": (0.9f64).ln()}, {"token": "No", "logprob": (0.1f64).ln()}]}]}}]});
        let d = parse_logprobs_reply(&chat, 20).unwrap();
        assert_eq!(d.entries.len(), 2);

        assert!(matches!(parse_logprobs_reply(&json!({"choices": []}), 20), Err(BackendError::Protocol(_))));
        let bad = json!({"choices": [{"logprobs": {"top_logprobs": [{"Yes": "high"}]}}]});
        assert!(matches!(parse_logprobs_reply(&bad, 20), Err(BackendError::Protocol(_))));
        let positive = json!({"choices": [{"logprobs": {"top_logprobs": [{"Yes": 0.5}]}}]});
        assert!(matches!(parse_logprobs_reply(&positive, 20), Err(BackendError::Protocol(_))));
    }
}
