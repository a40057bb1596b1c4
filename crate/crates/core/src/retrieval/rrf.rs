use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{RankedList, Scored};
use crate::corpus::ExampleId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrfParams {
    c: f64,
}

impl RrfParams {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParam(format!("RRF constant must be positive, got {c}")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl Default for RrfParams {
    fn default() -> Self {
        Self { c: 60.0 }
    }
}

/// Reciprocal rank fusion: `score(d) = Σ_lists 1 / (C + rank(d))` with
/// 1-based ranks. An id missing from a list gets nothing from that list.
pub fn rrf_fuse(lists: &[RankedList], params: RrfParams, k: usize) -> Result<RankedList> {
    if lists.is_empty() {
        return Err(Error::InvalidParam("reciprocal rank fusion needs at least one ranking".into()));
    }
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let mut fused: HashMap<&ExampleId, f64> = HashMap::new();
    let mut order: Vec<&ExampleId> = Vec::new();
    for list in lists {
        for (position, item) in list.iter().enumerate() {
            let contribution = 1.0 / (params.c + (position + 1) as f64);
            match fused.get_mut(&item.id) {
                Some(score) => *score += contribution,
                None => {
                    fused.insert(&item.id, contribution);
                    order.push(&item.id);
                }
            }
        }
    }
    let items = order
        .into_iter()
        .map(|id| Scored {
            id: id.clone(),
            score: fused[id],
        })
        .collect();
    Ok(RankedList::sorted(items, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str]) -> RankedList {
        RankedList::from_sorted(
            ids.iter()
                .enumerate()
                .map(|(i, id)| Scored {
                    id: ExampleId::new(*id),
                    score: (ids.len() - i) as f64,
                })
                .collect(),
        )
    }

    #[test]
    fn identical_lists_keep_their_order() {
        let a = list(&["d3", "d1", "d2"]);
        let fused = rrf_fuse(&[a.clone(), a], RrfParams::default(), 3).unwrap();
        assert_eq!(fused.ids_str(), ["d3", "d1", "d2"]);
    }

    #[test]
    fn reversed_lists_tie_at_the_ends() {
        let fused = rrf_fuse(&[list(&["d1", "d2", "d3"]), list(&["d3", "d2", "d1"])], RrfParams::default(), 3).unwrap();
        assert_eq!(fused.ids_str(), ["d1", "d3", "d2"]);
        let s = fused.items();
        assert_eq!(s[0].score, 1.0 / 61.0 + 1.0 / 63.0);
        assert_eq!(s[0].score, s[1].score);
        assert_eq!(s[2].score, 2.0 / 62.0);
        assert!((s[0].score - 0.0322664).abs() < 1e-7);
        assert!((s[2].score - 0.0322581).abs() < 1e-7);
    }

    #[test]
    fn missing_ids_contribute_nothing() {
        let fused = rrf_fuse(&[list(&["a", "b"]), list(&["c"])], RrfParams::default(), 10).unwrap();
        assert_eq!(fused.ids_str(), ["a", "c", "b"]);
        assert_eq!(fused.items()[2].score, 1.0 / 62.0);
    }

    #[test]
    fn errors() {
        assert!(rrf_fuse(&[], RrfParams::default(), 3).is_err());
        assert!(RrfParams::new(0.0).is_err());
        assert!(RrfParams::new(-5.0).is_err());
    }
}
