//! Concept scoring: ask an LLM whether each adjective describes a text.

pub mod affirm;
pub mod backend;
pub mod cache;
pub mod prompt;
pub mod vectors;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use affirm::{affirmative_mass, marginal_affirmative_score, AffirmativeTokenSet, MatchPolicy, TokenDistribution};
pub use backend::{
    BackendError, HttpBackend, HttpBackendConfig, MockBackend, RetryPolicy, ScoringBackend, ScoringRequest,
};
pub use cache::{lookup_indexed, CacheKey, ScoreCache};
pub use prompt::{build_prompt, persona_sentence, ScoringPrompt};
pub use vectors::{ConceptVector, VectorTable};

use crate::error::{Error, Result};
use crate::lexicon::ConceptLexicon;
use crate::pipeline::dataset::{AnnotatedPost, AnnotatorProfile};

/// Whether texts are scored plainly or once per annotator persona.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMode {
    #[default]
    None,
    PerAnnotator,
}

impl PersonaMode {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(Self::None),
            "per_annotator" => Ok(Self::PerAnnotator),
            other => Err(Error::Config(format!(
                "unknown persona mode `{other}` (expected none or per_annotator)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::PerAnnotator => "per_annotator",
        }
    }
}

/// Counters for one scoring run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringReport {
    pub vectors: usize,
    /// Distinct prompts needed.
    pub prompts_total: usize,
    pub cache_hits: usize,
    /// Requests sent, retries included.
    pub backend_calls: usize,
    /// Replies whose affirmative mass exceeded 1 and was clamped.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCorpus {
    pub vectors: Vec<ConceptVector>,
    pub report: ScoringReport,
}

#[derive(Debug, Clone)]
pub struct ScorerOptions {
    pub affirm: AffirmativeTokenSet,
    pub retry: RetryPolicy,
    /// Maximum requests in flight.
    pub concurrency: usize,
}

impl Default for ScorerOptions {
    fn default() -> Self {
        Self {
            affirm: AffirmativeTokenSet::default(),
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

/// One (text, persona) to be scored against the whole lexicon.
struct Unit<'a> {
    instance_id: &'a str,
    persona_id: Option<String>,
    text: &'a str,
    persona: Option<&'a AnnotatorProfile>,
}

struct Job<'a> {
    key: CacheKey,
    adjective: &'a str,
    text: &'a str,
    prompt: ScoringPrompt,
}

pub struct Scorer<B> {
    backend: B,
    cache: ScoreCache,
    options: ScorerOptions,
}

impl<B: ScoringBackend> Scorer<B> {
    pub fn new(backend: B, cache: ScoreCache, options: ScorerOptions) -> Result<Self> {
        if options.concurrency == 0 {
            return Err(Error::Config("scorer concurrency must be at least 1".into()));
        }
        if options.retry.max_attempts == 0 {
            return Err(Error::Config("retry budget must allow at least one attempt".into()));
        }
        Ok(Self {
            backend,
            cache,
            options,
        })
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_cache(self) -> ScoreCache {
        self.cache
    }

    pub fn score_text(
        &self,
        instance_id: &str,
        text: &str,
        lexicon: &ConceptLexicon,
        persona: Option<&AnnotatorProfile>,
    ) -> Result<(ConceptVector, ScoringReport)> {
        let unit = Unit {
            instance_id,
            persona_id: None,
            text,
            persona,
        };
        let ScoredCorpus { mut vectors, report } = self.score_units(vec![unit], lexicon)?;
        Ok((vectors.pop().expect("one unit"), report))
    }

    /// Scores every post; with [`PersonaMode::PerAnnotator`] each post yields
    /// six vectors with persona ids `"0"`..`"5"` in annotation order.
    pub fn score_corpus(
        &self,
        posts: &[AnnotatedPost],
        lexicon: &ConceptLexicon,
        mode: PersonaMode,
    ) -> Result<ScoredCorpus> {
        if posts.is_empty() {
            return Err(Error::InvalidInput("no posts to score".into()));
        }
        let mut units = Vec::new();
        for post in posts {
            match mode {
                PersonaMode::None => units.push(Unit {
                    instance_id: &post.id,
                    persona_id: None,
                    text: &post.text,
                    persona: None,
                }),
                PersonaMode::PerAnnotator => {
                    for (i, a) in post.annotations.iter().enumerate() {
                        units.push(Unit {
                            instance_id: &post.id,
                            persona_id: Some(i.to_string()),
                            text: &post.text,
                            persona: Some(&a.profile),
                        });
                    }
                }
            }
        }
        self.score_units(units, lexicon)
    }

    fn score_units(&self, units: Vec<Unit<'_>>, lexicon: &ConceptLexicon) -> Result<ScoredCorpus> {
        let model_id = self.backend.model_id().to_string();
        let mut report = ScoringReport {
            vectors: units.len(),
            ..Default::default()
        };

        // Resolve every cell to a distinct prompt key.
        let mut slots: Vec<Vec<usize>> = Vec::with_capacity(units.len());
        let mut key_slot: HashMap<CacheKey, usize> = HashMap::new();
        let mut jobs: Vec<Job<'_>> = Vec::new();
        for unit in &units {
            let mut row = Vec::with_capacity(lexicon.len());
            for adjective in lexicon.concepts() {
                let prompt = build_prompt(adjective, unit.text, unit.persona)?;
                let key = CacheKey::new(&model_id, lexicon.version(), prompt.sha256());
                let next = jobs.len();
                let slot = *key_slot.entry(key.clone()).or_insert(next);
                if slot == next {
                    jobs.push(Job {
                        key,
                        adjective,
                        text: unit.text,
                        prompt,
                    });
                }
                row.push(slot);
            }
            slots.push(row);
        }
        report.prompts_total = jobs.len();

        let mut values: Vec<Option<f64>> = jobs.iter().map(|j| self.cache.get(&j.key)).collect();
        report.cache_hits = values.iter().filter(|v| v.is_some()).count();
        let pending: Vec<usize> = (0..jobs.len()).filter(|&i| values[i].is_none()).collect();

        if !pending.is_empty() {
            let next = AtomicUsize::new(0);
            let calls = AtomicUsize::new(0);
            let clamped = AtomicUsize::new(0);
            let stop = AtomicBool::new(false);
            let first_error: Mutex<Option<Error>> = Mutex::new(None);
            let results: Mutex<Vec<(usize, f64)>> = Mutex::new(Vec::with_capacity(pending.len()));
            let workers = self.options.concurrency.min(pending.len());
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| {
                        while !stop.load(Ordering::SeqCst) {
                            let n = next.fetch_add(1, Ordering::SeqCst);
                            let Some(&job_index) = pending.get(n) else { break };
                            let job = &jobs[job_index];
                            let outcome = self
                                .fetch_score(job, &calls, &clamped)
                                .and_then(|score| self.cache.insert(job.key.clone(), score).map(|_| score));
                            match outcome {
                                Ok(score) => results.lock().expect("results lock").push((job_index, score)),
                                Err(e) => {
                                    stop.store(true, Ordering::SeqCst);
                                    first_error.lock().expect("error lock").get_or_insert(e);
                                    break;
                                }
                            }
                        }
                    });
                }
            });
            report.backend_calls = calls.into_inner();
            report.clamped = clamped.into_inner();
            let results = results.into_inner().expect("results lock");
            let fresh = results.len();
            for (i, score) in results {
                values[i] = Some(score);
            }
            if let Some(error) = first_error.into_inner().expect("error lock") {
                let scored = report.cache_hits + fresh;
                return Err(match error {
                    Error::BackendUnavailable { attempts, message, .. } => Error::BackendUnavailable {
                        attempts,
                        message,
                        scored,
                        total: report.prompts_total,
                    },
                    other => other,
                });
            }
        }

        let vectors = units
            .into_iter()
            .zip(slots)
            .map(|(unit, row)| ConceptVector {
                instance_id: unit.instance_id.to_string(),
                persona_id: unit.persona_id,
                scores: row.iter().map(|&i| values[i].expect("all prompts scored")).collect(),
                lexicon_version: lexicon.version().to_string(),
            })
            .collect();
        Ok(ScoredCorpus { vectors, report })
    }

    fn fetch_score(&self, job: &Job<'_>, calls: &AtomicUsize, clamped: &AtomicUsize) -> Result<f64> {
        let request = ScoringRequest {
            adjective: job.adjective,
            text: job.text,
            prompt: &job.prompt,
        };
        let policy = &self.options.retry;
        let mut attempt = 0u32;
        loop {
            calls.fetch_add(1, Ordering::SeqCst);
            attempt += 1;
            match self.backend.first_token_distribution(&request) {
                Ok(dist) => {
                    dist.validate()?;
                    let mass = affirmative_mass(&dist, &self.options.affirm);
                    if mass > 1.0 {
                        clamped.fetch_add(1, Ordering::SeqCst);
                        log::warn!("affirmative mass {mass} for `{}` clamped to 1", job.adjective);
                    }
                    return Ok(mass.clamp(0.0, 1.0));
                }
                Err(BackendError::Protocol(message)) => return Err(Error::Protocol(message)),
                Err(BackendError::Fatal(message)) => {
                    return Err(Error::BackendUnavailable {
                        attempts: attempt,
                        message,
                        scored: 0,
                        total: 0,
                    })
                }
                Err(BackendError::Transient(message)) => {
                    if attempt >= policy.max_attempts {
                        return Err(Error::BackendUnavailable {
                            attempts: attempt,
                            message,
                            scored: 0,
                            total: 0,
                        });
                    }
                    let delay = policy.delay_before_retry(attempt - 1);
                    log::debug!("transient backend failure ({message}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}
