//! Structured example files (YAML, or JSON with the same schema):
//!
//! ```yaml
//! name: demo
//! labels: [person, location]
//! examples:
//!   - id: demo-0          # optional
//!     text: John lives in Paris
//!     entities:
//!       - segment: John
//!         label: person
//! ```

use serde::{Deserialize, Serialize};

use super::{Dataset, Entity, Example, LabelSet};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    labels: Vec<String>,
    examples: Vec<ExampleRepr>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    text: String,
    #[serde(default)]
    entities: Vec<Entity>,
}

fn build(doc: DocumentRepr, default_name: &str) -> Result<Dataset> {
    let name = doc.name.unwrap_or_else(|| default_name.to_owned());
    let labels = LabelSet::new(doc.labels)?;
    let mut examples = Vec::with_capacity(doc.examples.len());
    for (index, record) in doc.examples.into_iter().enumerate() {
        let id = record.id.unwrap_or_else(|| format!("{name}-{index:06}"));
        let mut entities = Vec::with_capacity(record.entities.len());
        for entity in record.entities {
            let label = labels.canonical(&entity.label).ok_or_else(|| Error::InvalidExample {
                id: id.clone(),
                reason: format!("label `{}` is not in the label set", entity.label),
            })?;
            entities.push(Entity::new(entity.segment, label));
        }
        examples.push(Example::new(id, record.text, entities)?);
    }
    Dataset::new(name, labels, examples)
}

fn repr(dataset: &Dataset) -> DocumentRepr {
    DocumentRepr {
        name: Some(dataset.name().to_owned()),
        labels: dataset.label_set().labels().to_vec(),
        examples: dataset
            .examples()
            .iter()
            .map(|e| ExampleRepr {
                id: Some(e.id().to_string()),
                text: e.text().to_owned(),
                entities: e.entities().iter().cloned().collect(),
            })
            .collect(),
    }
}

/// Parses a YAML example document. `default_name` is used when the document
/// has no `name` field.
pub fn parse_yaml_examples(input: &str, default_name: &str) -> Result<Dataset> {
    build(serde_yaml::from_str(input)?, default_name)
}

pub fn parse_json_examples(input: &str, default_name: &str) -> Result<Dataset> {
    build(serde_json::from_str(input)?, default_name)
}

pub fn to_yaml(dataset: &Dataset) -> Result<String> {
    Ok(serde_yaml::to_string(&repr(dataset))?)
}

pub fn to_json(dataset: &Dataset) -> Result<String> {
    Ok(serde_json::to_string_pretty(&repr(dataset))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "\
labels: [person, location]
examples:
  - text: John lives in Paris
    entities:
      - {segment: John, label: person}
      - {segment: Paris, label: location}
  - text: Nothing here
";

    #[test]
    fn parses_minimal_record() {
        let ds = parse_yaml_examples(DOC, "demo").unwrap();
        assert_eq!(ds.name(), "demo");
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.examples()[0].id().as_str(), "demo-000000");
        assert!(ds.examples()[0].entities().contains(&Entity::new("Paris", "location")));
        assert!(ds.examples()[1].entities().is_empty());
    }

    #[test]
    fn rejects_segment_absent_from_text() {
        let doc = "labels: [person]\nexamples:\n  - id: ex7\n    text: John lives here\n    entities: [{segment: Jon, label: person}]\n";
        let err = parse_yaml_examples(doc, "d").unwrap_err();
        assert!(err.to_string().contains("ex7"), "{err}");
    }

    #[test]
    fn rejects_unknown_label() {
        let doc = "labels: [person]\nexamples:\n  - text: Jupiter\n    entities: [{segment: Jupiter, label: planet}]\n";
        assert!(parse_yaml_examples(doc, "d").is_err());
    }

    #[test]
    fn label_case_is_canonicalized() {
        let doc = "labels: [person]\nexamples:\n  - text: John\n    entities: [{segment: John, label: Person}]\n";
        let ds = parse_yaml_examples(doc, "d").unwrap();
        assert!(ds.examples()[0].entities().contains(&Entity::new("John", "person")));
    }

    #[test]
    fn json_and_yaml_share_a_schema() {
        let ds = parse_yaml_examples(DOC, "demo").unwrap();
        let json = to_json(&ds).unwrap();
        assert_eq!(parse_json_examples(&json, "other").unwrap(), ds);
        assert_eq!(parse_yaml_examples(&to_yaml(&ds).unwrap(), "other").unwrap(), ds);
    }
}
