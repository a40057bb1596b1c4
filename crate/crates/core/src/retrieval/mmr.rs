//! Maximal marginal relevance re-ranking of semantic search results.
//!
//! Greedy: each step picks the unselected example maximizing
//! `(1 − λ) · sim(d, query) − λ · max_{s ∈ selected} sim(d, s)`.
//! λ = 0 reduces to plain similarity ranking; larger λ favours diversity.
//! Ties go to the higher query similarity, then to the smaller id.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::semantic::{cosine_similarity, Embedding, SemanticIndex};
use super::{RankedList, Scored};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmrParams {
    lambda: f64,
}

impl MmrParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParam(format!("MMR lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Scores in the returned list are the MMR objective at the step each
/// example was picked; they never increase from one step to the next.
pub fn mmr_rerank(index: &SemanticIndex, query: &Embedding, params: MmrParams, k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    if index.is_empty() {
        return Err(Error::Empty);
    }
    let lambda = params.lambda;
    let relevance = index.similarities(query)?;
    let embeddings = index.embeddings();
    let ids = index.ids();
    let n = ids.len();
    let k = k.min(n);

    let mut selected = vec![false; n];
    // Max similarity to anything selected so far; 0 before the first pick.
    let mut redundancy = vec![0.0f64; n];
    let mut out = Vec::with_capacity(k);

    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for d in (0..n).filter(|&d| !selected[d]) {
            let score = (1.0 - lambda) * relevance[d] - lambda * redundancy[d];
            let better = match best {
                None => true,
                Some((b, best_score)) => match score.partial_cmp(&best_score).unwrap_or(Ordering::Equal) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => match relevance[d].partial_cmp(&relevance[b]).unwrap_or(Ordering::Equal) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => ids[d] < ids[b],
                    },
                },
            };
            if better {
                best = Some((d, score));
            }
        }
        let (pick, score) = best.expect("k <= n leaves a candidate");
        selected[pick] = true;
        out.push(Scored {
            id: ids[pick].clone(),
            score,
        });
        if step + 1 < k && lambda > 0.0 {
            for d in (0..n).filter(|&d| !selected[d]) {
                let sim = cosine_similarity(&embeddings[d], &embeddings[pick])?;
                if step == 0 || sim > redundancy[d] {
                    redundancy[d] = sim;
                }
            }
        }
    }
    Ok(RankedList::from_sorted(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ExampleId;

    fn index(vectors: &[&[f64]]) -> SemanticIndex {
        let ids = (0..vectors.len()).map(|i| ExampleId::new(format!("e{i}"))).collect();
        let embs = vectors.iter().map(|v| Embedding::new(v.to_vec()).unwrap()).collect();
        SemanticIndex::from_embeddings(ids, embs, "test".into(), None).unwrap()
    }

    #[test]
    fn lambda_must_be_in_unit_interval() {
        assert!(MmrParams::new(-0.01).is_err());
        assert!(MmrParams::new(1.01).is_err());
        assert!(MmrParams::new(0.5).is_ok());
    }

    /// Two near-duplicates of the query and one distinct vector. Enumerate
    /// all ordered pairs, score each second pick against the first, and
    /// check that greedy matches the best pair starting from the top item.
    #[test]
    fn diverse_second_pick_matches_enumeration() {
        let vectors: [&[f64]; 3] = [&[1.0, 0.02], &[1.0, 0.03], &[0.6, -0.8]];
        let ix = index(&vectors);
        let q = Embedding::new(vec![1.0, 0.0]).unwrap();
        let lambda = 0.5;

        let sim = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let rel: Vec<f64> = vectors.iter().map(|v| sim(v, &[1.0, 0.0])).collect();
        let first = (0..3).max_by(|&a, &b| rel[a].partial_cmp(&rel[b]).unwrap()).unwrap();
        let second = (0..3)
            .filter(|&d| d != first)
            .max_by(|&a, &b| {
                let s = |d: usize| (1.0 - lambda) * rel[d] - lambda * sim(vectors[d], vectors[first]);
                s(a).partial_cmp(&s(b)).unwrap()
            })
            .unwrap();
        assert_eq!(second, 2);

        let ranked = mmr_rerank(&ix, &q, MmrParams::new(lambda).unwrap(), 2).unwrap();
        assert_eq!(ranked.ids_str(), [format!("e{first}"), format!("e{second}")]);
    }

    #[test]
    fn full_lambda_with_k1_still_returns_top_similarity() {
        let ix = index(&[&[0.0, 1.0], &[1.0, 0.1], &[1.0, 1.0]]);
        let q = Embedding::new(vec![1.0, 0.0]).unwrap();
        let ranked = mmr_rerank(&ix, &q, MmrParams::new(1.0).unwrap(), 1).unwrap();
        assert_eq!(ranked.ids_str(), ["e1"]);
    }

    #[test]
    fn objective_is_non_increasing() {
        let ix = index(&[&[1.0, 0.0, 0.0], &[0.9, 0.1, 0.0], &[0.0, 1.0, 0.0], &[0.1, 0.1, 1.0], &[0.5, 0.5, 0.5]]);
        let q = Embedding::new(vec![1.0, 0.2, 0.1]).unwrap();
        let ranked = mmr_rerank(&ix, &q, MmrParams::new(0.7).unwrap(), 5).unwrap();
        let scores: Vec<f64> = ranked.iter().map(|s| s.score).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
    }
}
