//! Seeded synthetic corpora for smoke tests and offline demos.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use crate::lexicon::ConceptLexicon;
use crate::models::{EmbeddingRecord, EmbeddingTable};
use crate::pipeline::dataset::{AnnotatedPost, Annotation, AnnotatorProfile, Lang, SplitManifest};
use crate::pipeline::train::seeded_rng;
use crate::scorer::{ConceptVector, MockBackend, VectorTable};
use crate::task::Task;

const GENDERS: [&str; 2] = ["F", "M"];
const AGES: [&str; 3] = ["18-22", "23-45", "46+"];
const ETHNICITIES: [&str; 3] = ["White or Caucasian", "Hispano or Latino", "Black or African American"];
const EDUCATIONS: [&str; 3] = ["Bachelor’s degree", "Master’s degree", "High school degree or equivalent"];
const COUNTRIES: [&str; 4] = ["Spain", "Mexico", "United Kingdom", "Chile"];

/// Six distinct annotator profiles, varied by `offset`.
pub fn annotator_panel(offset: usize) -> Vec<AnnotatorProfile> {
    (0..6)
        .map(|i| {
            let k = i + offset;
            AnnotatorProfile {
                gender: GENDERS[i % 2].into(),
                age_group: AGES[i % 3].into(),
                ethnicity: ETHNICITIES[k % 3].into(),
                education: EDUCATIONS[(k / 3) % 3].into(),
                country: COUNTRIES[k % 4].into(),
            }
        })
        .collect()
}

/// A post on which all six annotators agree (`sexist` or not).
pub fn unanimous_post(id: impl Into<String>, lang: Lang, text: impl Into<String>, sexist: bool, panel: usize) -> AnnotatedPost {
    let annotations = annotator_panel(panel)
        .into_iter()
        .map(|profile| Annotation {
            profile,
            task1: Some(if sexist { 0 } else { 1 }),
            task2: Some(if sexist { 0 } else { 3 }),
            task3: Some(if sexist { vec![0] } else { vec![] }),
        })
        .collect();
    AnnotatedPost::new(id, lang, text, annotations).expect("six annotations")
}

/// EXIST-format JSON records (default field names) for `posts`.
pub fn exist_records(posts: &[AnnotatedPost]) -> Vec<Value> {
    posts
        .iter()
        .map(|p| {
            let profiles: Vec<&AnnotatorProfile> = p.annotations.iter().map(|a| &a.profile).collect();
            let field = |f: fn(&AnnotatorProfile) -> &str| profiles.iter().map(|pr| f(pr)).collect::<Vec<_>>();
            let t1: Vec<&str> = p
                .annotations
                .iter()
                .map(|a| a.task1.map_or("-", |c| Task::SexismIdentification.submission_code(c)))
                .collect();
            let t2: Vec<&str> = p
                .annotations
                .iter()
                .map(|a| match a.task2 {
                    Some(c) if c < 3 => Task::SourceIntention.labels()[c],
                    _ => "-",
                })
                .collect();
            let t3: Vec<Vec<&str>> = p
                .annotations
                .iter()
                .map(|a| match a.task3.as_deref() {
                    Some(ls) if !ls.is_empty() => ls.iter().map(|&l| Task::SexismCategorization.labels()[l]).collect(),
                    _ => vec!["-"],
                })
                .collect();
            json!({
                "id_EXIST": p.id,
                "lang": p.lang.code().to_lowercase(),
                "tweet": p.text,
                "gender_annotators": field(|x| &x.gender),
                "age_annotators": field(|x| &x.age_group),
                "ethnicities_annotators": field(|x| &x.ethnicity),
                "study_levels_annotators": field(|x| &x.education),
                "countries_annotators": field(|x| &x.country),
                "labels_task1_1": t1,
                "labels_task1_2": t2,
                "labels_task1_3": t3,
            })
        })
        .collect()
}

/// JSON-lines rendering of [`exist_records`].
pub fn exist_jsonl(posts: &[AnnotatedPost]) -> String {
    exist_records(posts).iter().map(|r| r.to_string() + "\n").collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub posts: Vec<AnnotatedPost>,
    pub splits: SplitManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptCorpus {
    pub posts: Vec<AnnotatedPost>,
    pub vectors: VectorTable,
    pub splits: SplitManifest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCorpusSpec {
    pub train: usize,
    pub dev: usize,
    pub dims: usize,
    /// Per-dimension class means.
    pub means: (f64, f64),
    pub std_dev: f64,
    pub seed: u64,
}

impl Default for GaussianCorpusSpec {
    fn default() -> Self {
        Self {
            train: 400,
            dev: 100,
            dims: 20,
            means: (0.62, 0.38),
            std_dev: 0.15,
            seed: 2025,
        }
    }
}

/// Two Gaussian classes in concept space (clipped to `[0, 1]`), alternating
/// SEXIST / NON-SEXIST, with the first `train` posts as the train split.
pub fn gaussian_concept_corpus(spec: &GaussianCorpusSpec) -> ConceptCorpus {
    let mut rng = seeded_rng(spec.seed);
    let lexicon = ConceptLexicon::new("synthetic-gaussian", (0..spec.dims).map(|i| format!("concept{i:03}")))
        .expect("non-empty");
    let noise = Normal::new(0.0, spec.std_dev).expect("valid std dev");
    let total = spec.train + spec.dev;
    let mut posts = Vec::with_capacity(total);
    let mut vectors = Vec::with_capacity(total);
    for i in 0..total {
        let sexist = i % 2 == 0;
        let id = format!("g{i:05}");
        let lang = if i % 3 == 0 { Lang::Es } else { Lang::En };
        posts.push(unanimous_post(&id, lang, format!("synthetic gaussian post {i}"), sexist, i));
        let mean = if sexist { spec.means.0 } else { spec.means.1 };
        let scores = (0..spec.dims)
            .map(|_| (mean + noise.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        vectors.push(ConceptVector {
            instance_id: id,
            persona_id: None,
            scores,
            lexicon_version: lexicon.version().to_string(),
        });
    }
    let splits = SplitManifest {
        train: posts[..spec.train].iter().map(|p| p.id.clone()).collect(),
        dev: posts[spec.train..].iter().map(|p| p.id.clone()).collect(),
        test: Vec::new(),
    };
    ConceptCorpus {
        posts,
        vectors: VectorTable::new(&lexicon, vectors).expect("consistent"),
        splits,
    }
}

/// Texts whose gold label is decided by the mock backend's score for one
/// adjective: above `1 − margin` is SEXIST, below `margin` is NON-SEXIST,
/// anything in between is discarded. Classes alternate; `train` + `dev`
/// posts in total.
pub fn mock_separable_corpus(adjective: &str, train: usize, dev: usize, margin: f64) -> SyntheticCorpus {
    let total = train + dev;
    let mut posts = Vec::with_capacity(total);
    let mut candidate = 0usize;
    while posts.len() < total {
        let want_sexist = posts.len() % 2 == 0;
        let text = loop {
            let text = format!("synthetic post number {candidate}");
            candidate += 1;
            let y = MockBackend::yes_probability(adjective, &text, None);
            if (want_sexist && y > 1.0 - margin) || (!want_sexist && y < margin) {
                break text;
            }
        };
        let i = posts.len();
        let lang = if i % 3 == 0 { Lang::Es } else { Lang::En };
        posts.push(unanimous_post(format!("s{i:05}"), lang, text, want_sexist, i));
    }
    let splits = SplitManifest {
        train: posts[..train].iter().map(|p| p.id.clone()).collect(),
        dev: posts[train..].iter().map(|p| p.id.clone()).collect(),
        test: Vec::new(),
    };
    SyntheticCorpus { posts, splits }
}

/// Uniform random embeddings in `[-1, 1]` for every id.
pub fn random_embeddings<'a>(ids: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = seeded_rng(seed);
    let records = ids
        .into_iter()
        .map(|id| EmbeddingRecord {
            instance_id: id.to_string(),
            vector: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            provider_tag: "synthetic".into(),
        })
        .collect();
    EmbeddingTable::new(dim, "synthetic", records).expect("consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::{parse_dataset, FieldMapping};
    use crate::pipeline::targets::derive_targets;
    use crate::task::HardLabel;

    #[test]
    fn gaussian_corpus_shape() {
        let c = gaussian_concept_corpus(&GaussianCorpusSpec::default());
        assert_eq!(c.posts.len(), 500);
        assert_eq!(c.splits.train.len(), 400);
        assert_eq!(c.splits.dev.len(), 100);
        assert_eq!(c.vectors.vectors.len(), 500);
        assert_eq!(c, gaussian_concept_corpus(&GaussianCorpusSpec::default()));
    }

    #[test]
    fn mock_corpus_labels_follow_the_mock_score() {
        let c = mock_separable_corpus("sexist", 40, 10, 0.4);
        assert_eq!(c.posts.len(), 50);
        for p in &c.posts {
            let y = MockBackend::yes_probability("sexist", &p.text, None);
            let hard = derive_targets(p, Task::SexismIdentification).unwrap().hard;
            assert_eq!(hard == HardLabel::Class(0), y > 0.6);
        }
    }

    #[test]
    fn exist_export_ingests_back() {
        let c = mock_separable_corpus("sexist", 6, 2, 0.4);
        let back = parse_dataset(&exist_jsonl(&c.posts), &FieldMapping::default()).unwrap();
        assert_eq!(back, c.posts);
    }
}
