use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use crate::corpus::{Entity, Example, LabelSet};
use crate::error::{Error, Result};
use crate::modelclient::digest;

const DEFAULT_ASSET: &str = include_str!("../../assets/prompt-v1.toml");

#[derive(Debug, Deserialize)]
struct TemplateAsset {
    name: String,
    definition: String,
    example_header: String,
    answer_marker: String,
    entity_line: String,
}

/// Few-shot prompt layout loaded from a template asset.
///
/// The version string is `{name}@{first 12 hex digits of the asset's
/// SHA-256}`, so any edit to the asset changes it.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    name: String,
    version: String,
    definition: String,
    example_header: String,
    answer_marker: String,
    entity_line: String,
    input_header: Regex,
}

/// `a`, `a, or b`, `a, b, or c`.
fn join_labels(labels: &[String]) -> String {
    match labels {
        [] => String::new(),
        [only] => only.clone(),
        [init @ .., last] => format!("{}, or {last}", init.join(", ")),
    }
}

impl PromptTemplate {
    pub fn from_toml(source: &str) -> Result<Self> {
        let asset: TemplateAsset =
            toml::from_str(source).map_err(|e| Error::Config(format!("prompt template: {e}")))?;
        for (field, value, needs) in [
            ("definition", &asset.definition, &["{labels}"][..]),
            ("example_header", &asset.example_header, &["{index}", "{text}"][..]),
            ("entity_line", &asset.entity_line, &["{segment}", "{label}"][..]),
        ] {
            for placeholder in needs {
                if !value.contains(placeholder) {
                    return Err(Error::Config(format!("prompt template field `{field}` lacks {placeholder}")));
                }
            }
        }
        let (before_text, _) = asset.example_header.split_once("{text}").expect("checked above");
        let pattern = format!("^{}(.*)$", regex::escape(before_text).replace(r"\{index\}", r"\d+"));
        let input_header = Regex::new(&pattern).map_err(|e| Error::Config(format!("prompt template: {e}")))?;
        let version = format!("{}@{}", asset.name, &digest(source)[..12]);
        Ok(Self {
            name: asset.name,
            version,
            definition: asset.definition,
            example_header: asset.example_header,
            answer_marker: asset.answer_marker,
            entity_line: asset.entity_line,
            input_header,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&source)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn answer_marker(&self) -> &str {
        &self.answer_marker
    }

    fn header(&self, index: usize, text: &str) -> String {
        self.example_header
            .replace("{index}", &index.to_string())
            .replace("{text}", text)
    }

    /// The numbered entity lines of one answer, one per line, no trailing
    /// newline.
    pub fn render_answer<'a>(&self, entities: impl IntoIterator<Item = &'a Entity>) -> String {
        entities
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                self.entity_line
                    .replace("{index}", &(i + 1).to_string())
                    .replace("{label}", &e.label)
                    .replace("{segment}", &e.segment)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render(&self, label_set: &LabelSet, examples: &[&Example], input_text: &str) -> Result<String> {
        if label_set.is_empty() {
            return Err(Error::InvalidLabelSet("cannot render a prompt without labels".into()));
        }
        let mut out = self.definition.replace("{labels}", &join_labels(label_set.labels()));
        out.push_str("\n\n");
        for (i, example) in examples.iter().enumerate() {
            out.push_str(&self.header(i + 1, example.text()));
            out.push('\n');
            out.push_str(&self.answer_marker);
            out.push('\n');
            let answer = self.render_answer(example.entities());
            if !answer.is_empty() {
                out.push_str(&answer);
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str(&self.header(examples.len() + 1, input_text));
        out.push('\n');
        out.push_str(&self.answer_marker);
        Ok(out)
    }

    /// Recovers the input text from a prompt rendered by this template.
    pub fn input_text<'p>(&self, prompt: &'p str) -> Option<&'p str> {
        let body = prompt.strip_suffix(self.answer_marker.as_str())?.strip_suffix('\n')?;
        let last = body.rsplit('\n').next()?;
        let start = self.input_header.captures(last)?.get(1)?.start();
        Some(&last[start..])
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT_ASSET).expect("bundled prompt template is valid")
    }
}

/// Renders the few-shot prompt with the bundled template.
pub fn render_prompt(label_set: &LabelSet, examples: &[&Example], input_text: &str) -> Result<String> {
    PromptTemplate::default().render(label_set, examples, input_text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        LabelSet::new(["person", "location"]).unwrap()
    }

    fn john() -> Example {
        Example::new(
            "e1",
            "John lives in Paris",
            [Entity::new("John", "person"), Entity::new("Paris", "location")],
        )
        .unwrap()
    }

    #[test]
    fn renders_the_listing_layout_exactly() {
        let prompt = render_prompt(&labels(), &[&john()], "Anna visited Rome").unwrap();
        let expected = "Defn: An entity is a person, or location.\n\
                        \n\
                        Example 1: John lives in Paris\n\
                        Answer:\n\
                        1. John (person)\n\
                        2. Paris (location)\n\
                        \n\
                        Example 2: Anna visited Rome\n\
                        Answer:";
        assert_eq!(prompt, expected);
    }

    #[test]
    fn label_lists_use_a_final_or() {
        let render = |ls: &[&str]| join_labels(&ls.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        assert_eq!(render(&["person"]), "person");
        assert_eq!(render(&["a", "b", "c"]), "a, b, or c");
    }

    #[test]
    fn empty_entity_set_has_no_numbered_lines() {
        let empty = Example::new("e2", "Nothing to see", []).unwrap();
        let prompt = render_prompt(&labels(), &[&empty], "x").unwrap();
        assert!(prompt.contains("Example 1: Nothing to see\nAnswer:\n\nExample 2: x\nAnswer:"));
    }

    #[test]
    fn zero_shot_and_empty_labels() {
        let prompt = render_prompt(&labels(), &[], "Anna").unwrap();
        assert_eq!(prompt, "Defn: An entity is a person, or location.\n\nExample 1: Anna\nAnswer:");
        let none = LabelSet::new(Vec::<String>::new()).unwrap();
        assert!(render_prompt(&none, &[], "Anna").is_err());
    }

    #[test]
    fn header_and_marker_counts_follow_example_count() {
        let ex = john();
        for n in 0..5 {
            let examples: Vec<&Example> = std::iter::repeat_n(&ex, n).collect();
            let prompt = render_prompt(&labels(), &examples, "Anna visited Rome").unwrap();
            let headers = prompt.lines().filter(|l| l.starts_with("Example ")).count();
            let markers = prompt.lines().filter(|l| *l == "Answer:").count();
            assert_eq!((headers, markers), (n + 1, n + 1));
        }
    }

    #[test]
    fn input_text_is_recoverable() {
        let t = PromptTemplate::default();
        let prompt = t.render(&labels(), &[&john()], "Example 3: tricky (text)").unwrap();
        assert_eq!(t.input_text(&prompt), Some("Example 3: tricky (text)"));
        assert_eq!(t.input_text("garbage"), None);
    }

    #[test]
    fn version_tracks_asset_content() {
        let a = PromptTemplate::default();
        assert!(a.version().starts_with("rener-prompt-v1@"));
        let edited = DEFAULT_ASSET.replace("Answer:", "Entities:");
        let b = PromptTemplate::from_toml(&edited).unwrap();
        assert_ne!(a.version(), b.version());
        assert!(PromptTemplate::from_toml(&DEFAULT_ASSET.replace("{text}", "")).is_err());
    }
}
