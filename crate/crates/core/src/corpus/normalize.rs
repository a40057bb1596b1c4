use std::fmt;
use std::sync::{Arc, LazyLock};

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::Dataset;

static ENGLISH: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

/// Splits on every character that is neither alphabetic nor numeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stemming {
    None,
    /// Snowball English (Porter2) suffix rules.
    #[default]
    English,
}

/// A per-token transform that can stand in for the built-in stemmer,
/// e.g. a dictionary lemmatizer.
pub trait TokenFilter: Send + Sync {
    fn name(&self) -> String;
    fn apply(&self, token: &str) -> String;
}

/// Turns text into the token stream used by term-matching retrieval.
#[derive(Clone)]
pub struct Normalizer {
    pub lowercase: bool,
    pub stemming: Stemming,
    filter: Option<Arc<dyn TokenFilter>>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            lowercase: true,
            stemming: Stemming::English,
            filter: None,
        }
    }
}

impl fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

impl Normalizer {
    pub fn new(lowercase: bool, stemming: Stemming) -> Self {
        Self {
            lowercase,
            stemming,
            filter: None,
        }
    }

    /// Applies `filter` after lowercasing and stemming.
    pub fn with_filter(mut self, filter: Arc<dyn TokenFilter>) -> Self {
        self.filter = Some(filter);
        self
    }

    /// Stable description, used to key persisted indexes.
    pub fn descriptor(&self) -> String {
        let stem = match self.stemming {
            Stemming::None => "none",
            Stemming::English => "snowball-english",
        };
        let mut out = format!("lowercase={};stem={stem}", self.lowercase);
        if let Some(filter) = &self.filter {
            out.push_str(";filter=");
            out.push_str(&filter.name());
        }
        out
    }

    pub fn normalize(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .map(|token| {
                let mut token = if self.lowercase {
                    token.to_lowercase()
                } else {
                    token.to_owned()
                };
                if self.stemming == Stemming::English {
                    token = ENGLISH.stem(&token).into_owned();
                }
                if let Some(filter) = &self.filter {
                    token = filter.apply(&token);
                }
                token
            })
            .filter(|t| !t.is_empty())
            .collect()
    }
}

/// Copy of `dataset` whose texts are normalized tokens joined by single
/// spaces. Ids and entities are carried over unchanged, so results map back
/// to the original examples. The copy is for retrieval only: its entity
/// segments need not occur in the rewritten texts.
pub fn normalize_copy(dataset: &Dataset, normalizer: &Normalizer) -> Dataset {
    let examples = dataset
        .examples()
        .iter()
        .map(|e| e.with_text_unchecked(normalizer.normalize(e.text()).join(" ")))
        .collect();
    Dataset::from_parts_unchecked(dataset.name().to_owned(), dataset.label_set().clone(), examples)
}
