//! Set-intersection scoring of predicted against gold entities.

use std::ops::{Add, AddAssign};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::corpus::Entity;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl Add for EvalCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for EvalCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Exact `(segment, label)` matching, case-sensitive on segments.
pub fn compare(predicted: &IndexSet<Entity>, expected: &IndexSet<Entity>) -> EvalCounts {
    let tp = predicted.intersection(expected).count() as u64;
    EvalCounts::new(tp, predicted.len() as u64 - tp, expected.len() as u64 - tp)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(flatten)]
    pub counts: EvalCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalResult {
    /// Ratios with `0/0` taken as 0.
    pub fn from_counts(counts: EvalCounts) -> Self {
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            counts,
            precision,
            recall,
            f1,
        }
    }

    pub const CSV_HEADER: &'static str = "tp,fp,fn,precision,recall,f1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6}",
            self.counts.tp, self.counts.fp, self.counts.fn_, self.precision, self.recall, self.f1
        )
    }
}

/// Micro average: counts are summed before the ratios are taken.
pub fn aggregate<'a>(per_example: impl IntoIterator<Item = &'a EvalCounts>) -> EvalResult {
    EvalResult::from_counts(per_example.into_iter().copied().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, &str)]) -> IndexSet<Entity> {
        items.iter().map(|(s, l)| Entity::new(*s, *l)).collect()
    }

    #[test]
    fn identity_and_forced_example() {
        let john = set(&[("John", "person")]);
        assert_eq!(compare(&john, &john), EvalCounts::new(1, 0, 0));

        let predicted = set(&[("A", "person"), ("B", "location")]);
        let expected = set(&[("A", "person"), ("C", "organization")]);
        let counts = compare(&predicted, &expected);
        assert_eq!(counts, EvalCounts::new(1, 1, 1));
        let r = EvalResult::from_counts(counts);
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn aggregation_is_micro() {
        let r = aggregate(&[EvalCounts::new(1, 1, 1), EvalCounts::new(1, 0, 0)]);
        assert_eq!(r.counts, EvalCounts::new(2, 1, 1));
        assert_eq!(r.precision, 2.0 / 3.0);
        assert_eq!(r.recall, 2.0 / 3.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases_are_zero() {
        assert_eq!(aggregate(&[]), EvalResult::default());
        let r = aggregate(&[EvalCounts::new(0, 0, 3)]);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn segments_match_case_sensitively() {
        let counts = compare(&set(&[("rome", "location")]), &set(&[("Rome", "location")]));
        assert_eq!(counts, EvalCounts::new(0, 1, 1));
    }

    #[test]
    fn json_uses_fn_field_name() {
        let v = serde_json::to_value(EvalResult::from_counts(EvalCounts::new(1, 0, 0))).unwrap();
        assert_eq!(v["fn"], 0);
        assert_eq!(v["f1"], 1.0);
    }
}
