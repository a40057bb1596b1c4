use std::fmt;
use std::sync::LazyLock;

use indexmap::IndexSet;
use regex::Regex;
use serde::Serialize;

use crate::corpus::{Entity, LabelSet};

static ENTITY_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\d+\.\s*(.+?)\s*\(([^()]+)\)\s*$").expect("valid entity-line pattern"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    EmptyLine,
    NotAnEntityLine,
    InvalidLabel,
    SegmentNotInInput,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::EmptyLine => "empty-line",
            DiscardReason::NotAnEntityLine => "not-an-entity-line",
            DiscardReason::InvalidLabel => "invalid-label",
            DiscardReason::SegmentNotInInput => "segment-not-in-input",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discarded {
    pub line: String,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedOutput {
    pub entities: IndexSet<Entity>,
    pub discarded: Vec<Discarded>,
}

/// Turns raw model output into the entities it names.
///
/// Only numbered lines of the form `n. segment (label)` are candidates. The
/// label is the last parenthesized group and is matched case-insensitively
/// against `label_set`. A candidate is kept when its label is known and its
/// segment occurs verbatim in `input_text`. Every other line is recorded in
/// `discarded` with the reason. This function never fails.
pub fn parse_output(raw: &str, input_text: &str, label_set: &LabelSet) -> ParsedOutput {
    let mut out = ParsedOutput::default();
    if raw.is_empty() {
        return out;
    }
    for line in raw.lines() {
        let discard = |reason| Discarded {
            line: line.to_owned(),
            reason,
        };
        if line.trim().is_empty() {
            out.discarded.push(discard(DiscardReason::EmptyLine));
            continue;
        }
        let Some(caps) = ENTITY_LINE.captures(line) else {
            out.discarded.push(discard(DiscardReason::NotAnEntityLine));
            continue;
        };
        let segment = &caps[1];
        if segment.trim().is_empty() {
            out.discarded.push(discard(DiscardReason::NotAnEntityLine));
            continue;
        }
        let Some(label) = label_set.canonical(&caps[2]) else {
            out.discarded.push(discard(DiscardReason::InvalidLabel));
            continue;
        };
        if !input_text.contains(segment) {
            out.discarded.push(discard(DiscardReason::SegmentNotInInput));
            continue;
        }
        out.entities.insert(Entity::new(segment, label));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSet {
        LabelSet::new(["person", "location", "organization"]).unwrap()
    }

    fn reasons(p: &ParsedOutput) -> Vec<DiscardReason> {
        p.discarded.iter().map(|d| d.reason).collect()
    }

    #[test]
    fn well_formed_lines_are_kept() {
        let input = "Barack Obama was born in Hawaii";
        let p = parse_output("1. Barack Obama (person)\n2. Hawaii (location)", input, &labels());
        let expected: IndexSet<Entity> =
            [Entity::new("Barack Obama", "person"), Entity::new("Hawaii", "location")].into_iter().collect();
        assert_eq!(p.entities, expected);
        assert!(p.discarded.is_empty());
    }

    #[test]
    fn unknown_labels_and_absent_segments_are_discarded() {
        let p = parse_output("1. Jupiter (planet)", "Jupiter is big", &labels());
        assert!(p.entities.is_empty());
        assert_eq!(reasons(&p), [DiscardReason::InvalidLabel]);

        let p = parse_output("1. Barak Obama (person)", "Barack Obama spoke", &labels());
        assert!(p.entities.is_empty());
        assert_eq!(reasons(&p), [DiscardReason::SegmentNotInInput]);
    }

    #[test]
    fn labels_are_canonicalized_and_duplicates_collapse() {
        let p = parse_output("1. Rome (Location)\n2. Rome ( LOCATION )\n3. Rome (location)", "Rome", &labels());
        assert_eq!(p.entities.len(), 1);
        assert_eq!(p.entities[0], Entity::new("Rome", "location"));
    }

    #[test]
    fn last_parenthesized_group_is_the_label() {
        let input = "The Party (Reform) won";
        let p = parse_output("1. Party (Reform) (organization)", input, &labels());
        assert_eq!(p.entities[0], Entity::new("Party (Reform)", "organization"));
    }

    #[test]
    fn prose_headers_and_blank_lines_are_discarded() {
        let raw = "Answer:\nHere are the entities.\n\n1. Rome (location)\nExample 2: Rome";
        let p = parse_output(raw, "Rome", &labels());
        assert_eq!(p.entities.len(), 1);
        assert_eq!(
            reasons(&p),
            [
                DiscardReason::NotAnEntityLine,
                DiscardReason::NotAnEntityLine,
                DiscardReason::EmptyLine,
                DiscardReason::NotAnEntityLine
            ]
        );
    }

    #[test]
    fn same_segment_with_two_labels_keeps_both() {
        let p = parse_output("1. Jordan (person)\n2. Jordan (location)", "Jordan", &labels());
        assert_eq!(p.entities.len(), 2);
    }

    #[test]
    fn empty_output_has_no_discards() {
        let p = parse_output("", "anything", &labels());
        assert!(p.entities.is_empty() && p.discarded.is_empty());
    }
}
