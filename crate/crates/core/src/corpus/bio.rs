//! CoNLL-style BIO files: one token per line, whitespace-separated columns
//! with the token first and the tag last, sentences separated by blank lines.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Dataset, Entity, Example, LabelSet};
use crate::error::{Error, Result};

/// How to treat an `I-X` tag that does not continue an `X` entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BioMode {
    /// Start a new entity as if the tag were `B-X`.
    #[default]
    Lenient,
    /// Reject the file.
    Strict,
}

/// Maps raw tag codes (`PER`) to label names (`person`).
///
/// Codes without an explicit entry resolve to the label that equals the code
/// once both are lowercased with spaces removed, so `politicalparty` finds
/// `political party`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagMap(HashMap<String, String>);

impl TagMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// The CoNLL-2003 codes.
    pub fn conll2003() -> Self {
        [
            ("PER", "person"),
            ("ORG", "organization"),
            ("LOC", "location"),
            ("MISC", "miscellaneous"),
        ]
        .into_iter()
        .collect()
    }

    pub fn insert(&mut self, code: impl Into<String>, label: impl Into<String>) {
        self.0.insert(code.into(), label.into());
    }

    fn resolve<'a>(&self, code: &str, labels: &'a LabelSet) -> Option<&'a str> {
        if let Some(mapped) = self.0.get(code) {
            return labels.canonical(mapped);
        }
        let squash = |s: &str| s.to_lowercase().replace([' ', '_', '-'], "");
        let code = squash(code);
        labels
            .labels()
            .iter()
            .find(|l| squash(l) == code)
            .map(String::as_str)
    }

    fn code_for(&self, label: &str) -> String {
        let mut codes: Vec<&String> = self
            .0
            .iter()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(c, _)| c)
            .collect();
        codes.sort();
        match codes.first() {
            Some(code) => (*code).clone(),
            None => label.replace(' ', ""),
        }
    }
}

impl<C: Into<String>, L: Into<String>> FromIterator<(C, L)> for TagMap {
    fn from_iter<T: IntoIterator<Item = (C, L)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(c, l)| (c.into(), l.into())).collect())
    }
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(raw: &str, line: usize) -> Result<Tag<'_>> {
    if raw == "O" {
        return Ok(Tag::Outside);
    }
    match raw.split_once('-') {
        Some(("B", code)) if !code.is_empty() => Ok(Tag::Begin(code)),
        Some(("I", code)) if !code.is_empty() => Ok(Tag::Inside(code)),
        _ => Err(Error::Bio {
            line,
            message: format!("malformed BIO tag `{raw}`"),
        }),
    }
}

struct Span {
    label: String,
    start: usize,
    end: usize,
}

struct SentenceBuilder {
    tokens: Vec<String>,
    spans: Vec<Span>,
    open: Option<(String, usize)>,
}

impl SentenceBuilder {
    fn new() -> Self {
        Self {
            tokens: Vec::new(),
            spans: Vec::new(),
            open: None,
        }
    }

    fn close(&mut self) {
        if let Some((label, start)) = self.open.take() {
            self.spans.push(Span {
                label,
                start,
                end: self.tokens.len(),
            });
        }
    }

    fn finish(mut self, id: String) -> Result<Example> {
        self.close();
        let text = self.tokens.join(" ");
        let entities = self.spans.iter().map(|s| Entity {
            segment: self.tokens[s.start..s.end].join(" "),
            label: s.label.clone(),
        });
        Example::new(id, text, entities.collect::<Vec<_>>())
    }
}

/// Parses a BIO stream into a dataset named `name`.
///
/// Example ids are `{name}-{sentence index:06}`, counting from zero after
/// skipping `-DOCSTART-` markers.
pub fn parse_bio<R: BufRead>(
    name: &str,
    reader: R,
    label_set: &LabelSet,
    tags: &TagMap,
    mode: BioMode,
) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut sentence = SentenceBuilder::new();

    let flush = |sentence: SentenceBuilder, examples: &mut Vec<Example>| -> Result<()> {
        if !sentence.tokens.is_empty() {
            let id = format!("{name}-{:06}", examples.len());
            examples.push(sentence.finish(id)?);
        }
        Ok(())
    };

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Bio {
            line: line_no,
            message: e.to_string(),
        })?;
        let columns: Vec<&str> = line.split_whitespace().collect();
        let Some(&token) = columns.first() else {
            flush(std::mem::replace(&mut sentence, SentenceBuilder::new()), &mut examples)?;
            continue;
        };
        if token.starts_with("-DOCSTART-") {
            continue;
        }
        if columns.len() < 2 {
            return Err(Error::Bio {
                line: line_no,
                message: "expected a token and a tag".into(),
            });
        }
        let tag = parse_tag(columns[columns.len() - 1], line_no)?;
        let lookup = |code: &str| {
            tags.resolve(code, label_set).map(str::to_owned).ok_or(Error::UnknownLabel {
                label: code.to_owned(),
                line: Some(line_no),
            })
        };
        match tag {
            Tag::Outside => sentence.close(),
            Tag::Begin(code) => {
                let label = lookup(code)?;
                sentence.close();
                sentence.open = Some((label, sentence.tokens.len()));
            }
            Tag::Inside(code) => {
                let label = lookup(code)?;
                let continues = matches!(&sentence.open, Some((open, _)) if *open == label);
                if !continues {
                    if mode == BioMode::Strict {
                        return Err(Error::Bio {
                            line: line_no,
                            message: format!("I-{code} does not continue an entity of the same type"),
                        });
                    }
                    sentence.close();
                    sentence.open = Some((label, sentence.tokens.len()));
                }
            }
        }
        sentence.tokens.push(token.to_owned());
    }
    flush(sentence, &mut examples)?;
    Dataset::new(name, label_set.clone(), examples)
}

/// Emits a dataset as two-column BIO. Each entity is tagged at the earliest
/// token-aligned occurrence of its segment not already claimed by an
/// earlier entity.
pub fn write_bio(dataset: &Dataset, tags: &TagMap) -> Result<String> {
    let mut out = String::new();
    for example in dataset.examples() {
        let tokens: Vec<&str> = example.text().split(' ').collect();
        let mut assigned: Vec<Option<(usize, &str)>> = vec![None; tokens.len()];
        for (n, entity) in example.entities().iter().enumerate() {
            let span: Vec<&str> = entity.segment.split(' ').collect();
            let start = (0..=tokens.len().saturating_sub(span.len()))
                .find(|&s| {
                    s + span.len() <= tokens.len()
                        && tokens[s..s + span.len()] == span[..]
                        && assigned[s..s + span.len()].iter().all(Option::is_none)
                })
                .ok_or_else(|| Error::InvalidExample {
                    id: example.id().to_string(),
                    reason: format!("segment {:?} is not token-aligned", entity.segment),
                })?;
            for slot in &mut assigned[start..start + span.len()] {
                *slot = Some((n, entity.label.as_str()));
            }
        }
        let mut previous = None;
        for (token, slot) in tokens.iter().zip(&assigned) {
            let tag = match slot {
                None => "O".to_owned(),
                Some((n, label)) => {
                    let prefix = if previous == Some(*n) { "I" } else { "B" };
                    format!("{prefix}-{}", tags.code_for(label))
                }
            };
            previous = slot.map(|(n, _)| n);
            out.push_str(token);
            out.push(' ');
            out.push_str(&tag);
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}
