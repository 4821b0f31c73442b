//! Adjective concept lexicons.
//!
//! A lexicon fixes the bottleneck dimension: concept `i` of a vector always
//! refers to `concepts()[i]` of the lexicon version it was scored with.
//!
//! File format: UTF-8, one adjective per line. Blank lines and lines starting
//! with `#` are ignored, except a `# version: <tag>` line, which names the
//! lexicon. Without such a line the version is derived from the content.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::task::Task;

/// Tag of the built-in lexicon.
pub const DEFAULT_LEXICON_TAG: &str = "exist2025-default";

const DEFAULT_LEXICON_DATA: &str = include_str!("../data/exist2025_default.txt");

const VERSION_DIRECTIVE: &str = "version:";

/// Case-fold and trim; the equality used for deduplication.
pub fn normalize(adjective: &str) -> String {
    adjective.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptLexicon {
    concepts: Vec<String>,
    version: String,
}

impl ConceptLexicon {
    /// Builds a lexicon, collapsing entries that are equal after [`normalize`].
    /// The first occurrence wins and keeps its original (trimmed) spelling.
    pub fn new<I, S>(version: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut concepts = Vec::new();
        for entry in entries {
            let entry = entry.as_ref().trim();
            if entry.is_empty() {
                continue;
            }
            if seen.insert(normalize(entry)) {
                concepts.push(entry.to_string());
            } else {
                log::warn!("duplicate lexicon entry `{entry}` collapsed into its first occurrence");
            }
        }
        if concepts.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(Self {
            concepts,
            version: version.into(),
        })
    }

    /// The built-in adjective lexicon.
    pub fn builtin_default() -> Self {
        Self::parse(DEFAULT_LEXICON_DATA).expect("built-in lexicon is valid")
    }

    /// Loads a lexicon from a file path, or the built-in one when `source`
    /// equals [`DEFAULT_LEXICON_TAG`].
    pub fn load(source: impl AsRef<Path>) -> Result<Self> {
        let source = source.as_ref();
        if source.as_os_str() == DEFAULT_LEXICON_TAG {
            return Ok(Self::builtin_default());
        }
        let bytes = std::fs::read(source).map_err(|e| Error::io(source, e))?;
        let text = String::from_utf8(bytes).map_err(|e| {
            Error::InvalidInput(format!("lexicon `{}` is not UTF-8: {e}", source.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses the line-oriented lexicon format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix(VERSION_DIRECTIVE) {
                    version.get_or_insert_with(|| tag.trim().to_string());
                }
                continue;
            }
            if !line.is_empty() {
                entries.push(line);
            }
        }
        let mut lexicon = Self::new(String::new(), entries)?;
        lexicon.version = match version {
            Some(v) if !v.is_empty() => v,
            _ => lexicon.content_version(),
        };
        Ok(lexicon)
    }

    /// Serializes into the file format; [`ConceptLexicon::parse`] inverts it.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("# {VERSION_DIRECTIVE} {}\n", self.version);
        for concept in &self.concepts {
            out.push_str(concept);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    fn content_version(&self) -> String {
        let mut hasher = Sha256::new();
        for concept in &self.concepts {
            hasher.update(normalize(concept).as_bytes());
            hasher.update([0u8]);
        }
        format!("sha256-{}", &hex::encode(hasher.finalize())[..16])
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.concepts.get(index).map(String::as_str)
    }

    /// Index of an adjective, compared after normalization.
    pub fn position(&self, adjective: &str) -> Option<usize> {
        let key = normalize(adjective);
        self.concepts.iter().position(|c| normalize(c) == key)
    }

    pub fn contains(&self, adjective: &str) -> bool {
        self.position(adjective).is_some()
    }
}

/// Concatenates `a` then `b`, dropping entries of `b` already present.
///
/// The merged version tag records both inputs.
pub fn merge_lexicons(a: &ConceptLexicon, b: &ConceptLexicon) -> ConceptLexicon {
    let version = if a.version == b.version {
        a.version.clone()
    } else {
        format!("{}+{}", a.version, b.version)
    };
    ConceptLexicon::new(version, a.concepts.iter().chain(&b.concepts))
        .expect("merging non-empty lexicons is non-empty")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconPromptSpec {
    pub task: Task,
    pub rendered_prompt: String,
}

const PROMPT_TASK_1_1: &str = "Provide me with 50 adjectives that can be used to describe and distinguish classes in a binary classification task where systems must decide whether or not a given tweet is sexist. The following classes are defined:
- Sexist, as in: “Woman driving, be careful!”
- Non-sexist, as in: “Just saw a woman wearing a mask outside spank her very tightly leashed dog and I gotta say I love learning absolutely everything about a stranger in a single instant.”";

const PROMPT_TASK_1_2: &str = "Provide me with 50 adjectives that can be used to describe and distinguish classes in a task that aims to categorize the message according to the intention of the author. It is a ternary classification task: (i) direct sexist message, (ii) reported sexist message and (iii) judgmental message. This distinction allows to differentiate sexism that is actually taking place in online platforms from sexism which is being suffered by women in other situations but that is being reported in social networks with the aim of complaining and fighting against sexism. The following classes are defined:
- Direct sexist message: the intention was to write a message that is sexist by itself or incites to be sexist, as in: “A woman needs love, to fill the fridge, if a man can give this to her in return for her services (housework, cooking, etc), I don’t see what else she needs.”
- Reported sexist message: the intention is to report and share a sexist situation suffered by a woman or women in first or third person, as in: “Today, one of my year 1 class pupils could not believe he’d lost a race against a girl.”
- Judgmental message: the intention is judgmental, since the tweet describes sexist situations or behaviors with the aim of condemning them, as in: “21st century and we are still earning 25% less than men #Idonotrenounce.”";

const PROMPT_TASK_1_3: &str = "Many facets of a woman’s life may be the focus of sexist attitudes including domestic and parenting roles, career opportunities, sexual image, and life expectations, to name a few. Provide me with 50 adjectives that can be used to describe and distinguish following classes:
- Ideological and inequality: this category includes tweets that discredit the feminist movement in order to devalue and defame the struggle of women in any aspect of their lives. It also includes tweets that reject inequality between men and women, or present men as victims of gender-based oppression. As in: “Think the whole equality thing is getting out of hand. We are different, that’s how we’re made!”
- Stereotyping and dominance: this category includes messages that express false ideas about women that suggest they are more suitable or inappropriate for certain tasks. It also includes any claim that implies that men are somehow superior to women. As in: “Most women no longer have the desire or the knowledge to develop a high quality character, even if they wanted to.”
- Objectification: Objectification and physical stereotyping include messages where women are presented as objects apart from their dignity and personal aspects. We also include messages that assume or describe certain physical qualities that women must have in order to fulfill traditional gender roles, for example, ideas that suggest that women should maintain a standard and ideal of beauty or attacks on a woman’s body. As in: “No offense but I’ve never seen an attractive African American hooker. Not a single one.”
- Sexual violence: this category includes messages where sexual suggestions, requests or harassment of a sexual nature (rape or sexual assault) are made, as in: “I wanna touch your tits..you can’t imagine what I can do on your body.”
- Misogyny and non-sexual violence: this category includes expressions of hatred and violence towards women, as in: “Domestic abuse is never okay... Unless your wife is a bitch.”";

/// The lexicon-generation prompt for one subtask.
pub fn render_generation_prompt(task_id: &str) -> Result<LexiconPromptSpec> {
    let task = Task::parse(task_id).map_err(|_| Error::InvalidTask(task_id.to_string()))?;
    let text = match task {
        Task::SexismIdentification => PROMPT_TASK_1_1,
        Task::SourceIntention => PROMPT_TASK_1_2,
        Task::SexismCategorization => PROMPT_TASK_1_3,
    };
    Ok(LexiconPromptSpec {
        task,
        rendered_prompt: text.to_string(),
    })
}
