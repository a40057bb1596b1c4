//! Annotated NER corpora.
//!
//! An [`Example`] is a piece of text together with the set of entity mentions
//! found in it. Entities are plain `(segment, label)` pairs rather than token
//! offsets, so every loader checks that each segment occurs in its text and
//! that each label belongs to the dataset's [`LabelSet`].

mod bio;
mod normalize;
mod yaml;

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bio::{parse_bio, write_bio, BioMode, TagMap};
pub use normalize::{normalize_copy, tokenize, Normalizer, Stemming};
pub use yaml::{parse_json_examples, parse_yaml_examples, to_json, to_yaml};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExampleId(String);

impl ExampleId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ExampleId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// A named mention: a span of text and the label naming its type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub segment: String,
    pub label: String,
}

impl Entity {
    pub fn new(segment: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            segment: segment.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    id: ExampleId,
    text: String,
    entities: IndexSet<Entity>,
}

impl Example {
    /// Builds an example, collapsing duplicate entities and checking that
    /// every segment is a substring of `text`.
    pub fn new(
        id: impl Into<ExampleId>,
        text: impl Into<String>,
        entities: impl IntoIterator<Item = Entity>,
    ) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        let invalid = |reason: String| Error::InvalidExample {
            id: id.to_string(),
            reason,
        };
        if text.trim().is_empty() {
            return Err(invalid("text is empty".into()));
        }
        let entities: IndexSet<Entity> = entities.into_iter().collect();
        for entity in &entities {
            let segment = &entity.segment;
            if segment.is_empty() {
                return Err(invalid("entity segment is empty".into()));
            }
            // Segments are rendered one per answer line and trimmed on parse.
            if segment.trim() != segment || segment.contains(['\n', '\r']) {
                return Err(invalid(format!(
                    "segment {segment:?} has surrounding whitespace or a line break"
                )));
            }
            if !text.contains(segment.as_str()) {
                return Err(invalid(format!("segment {segment:?} does not occur in text")));
            }
        }
        Ok(Self { id, text, entities })
    }

    pub fn id(&self) -> &ExampleId {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn entities(&self) -> &IndexSet<Entity> {
        &self.entities
    }

    /// Same id and entities, different text. Used for the retrieval-only copy,
    /// where segments no longer need to occur in the text.
    pub(crate) fn with_text_unchecked(&self, text: String) -> Self {
        Self {
            id: self.id.clone(),
            text,
            entities: self.entities.clone(),
        }
    }
}

impl From<String> for ExampleId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Ordered, distinct, lowercase labels. The order is the order used in the
/// prompt's definition line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(Error::InvalidLabelSet("empty label".into()));
            }
            if label.trim() != label {
                return Err(Error::InvalidLabelSet(format!("label {label:?} has surrounding whitespace")));
            }
            if label.to_lowercase() != *label {
                return Err(Error::InvalidLabelSet(format!("label {label:?} is not lowercase")));
            }
            if label.contains(['(', ')', '\n']) {
                return Err(Error::InvalidLabelSet(format!(
                    "label {label:?} contains a parenthesis or line break"
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidLabelSet(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Case-insensitive lookup returning the canonical spelling.
    pub fn canonical(&self, raw: &str) -> Option<&str> {
        let raw = raw.trim();
        self.labels
            .iter()
            .find(|l| l.as_str() == raw || l.to_lowercase() == raw.to_lowercase())
            .map(String::as_str)
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        LabelSet::new(labels)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    label_set: LabelSet,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, label_set: LabelSet, examples: Vec<Example>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(examples.len());
        for example in &examples {
            if !ids.insert(example.id()) {
                return Err(Error::DuplicateId(example.id().to_string()));
            }
            for entity in example.entities() {
                if !label_set.contains(&entity.label) {
                    return Err(Error::InvalidExample {
                        id: example.id().to_string(),
                        reason: format!("label `{}` is not in the label set", entity.label),
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            label_set,
            examples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &ExampleId) -> Option<&Example> {
        self.examples.iter().find(|e| e.id() == id)
    }

    /// The first `n` examples, keeping name and labels.
    pub fn truncated(&self, n: usize) -> Dataset {
        Dataset {
            name: self.name.clone(),
            label_set: self.label_set.clone(),
            examples: self.examples.iter().take(n).cloned().collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(name: String, label_set: LabelSet, examples: Vec<Example>) -> Self {
        Self {
            name,
            label_set,
            examples,
        }
    }
}
