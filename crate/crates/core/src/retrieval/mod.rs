//! Example retrieval: given an input text, pick the `k` training examples
//! to show the model.
//!
//! Every ranking orders by descending score, then ascending example id.

mod bm25;
mod mmr;
mod random;
mod rrf;
mod semantic;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_copy, Dataset, Example, ExampleId, Normalizer};
use crate::error::{Error, Result};
use crate::modelclient::EmbeddingProvider;

pub use bm25::{bm25_retrieve, Bm25Index, Bm25Params};
pub use mmr::{mmr_rerank, MmrParams};
pub use random::{fixed_random_positions, fixed_random_select};
pub use rrf::{rrf_fuse, RrfParams};
pub use semantic::{cosine_similarity, encode, encode_batched, semantic_retrieve, Embedding, SemanticIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: ExampleId,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    items: Vec<Scored>,
}

fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

impl RankedList {
    /// Sorts by the tie rule and keeps the first `k`.
    pub fn sorted(mut items: Vec<Scored>, k: usize) -> Self {
        items.sort_by(rank_order);
        items.truncate(k);
        Self { items }
    }

    /// Wraps items that are already in rank order.
    pub fn from_sorted(items: Vec<Scored>) -> Self {
        Self { items }
    }

    pub fn items(&self) -> &[Scored] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scored> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<&ExampleId> {
        self.items.iter().map(|s| &s.id).collect()
    }

    pub fn ids_str(&self) -> Vec<String> {
        self.items.iter().map(|s| s.id.to_string()).collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }
}

/// Ranks `ids` by aligned `scores` and keeps the top `k`.
pub(crate) fn top_k(ids: &[ExampleId], scores: &[f64], k: usize) -> RankedList {
    debug_assert_eq!(ids.len(), scores.len());
    let items = ids
        .iter()
        .zip(scores)
        .map(|(id, &score)| Scored { id: id.clone(), score })
        .collect();
    RankedList::sorted(items, k)
}

/// A configured way of choosing examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    Bm25,
    Semantic,
    /// Semantic search re-ranked with maximal marginal relevance.
    Mmr(MmrParams),
    /// BM25 and semantic rankings fused with reciprocal rank fusion.
    Hybrid(RrfParams),
    /// The same seeded random draw for every input.
    FixedRandom { seed: u64 },
    /// Zero-shot: no examples.
    None,
}

impl Mechanism {
    pub fn needs_bm25(&self) -> bool {
        matches!(self, Mechanism::Bm25 | Mechanism::Hybrid(_))
    }

    pub fn needs_embeddings(&self) -> bool {
        matches!(self, Mechanism::Semantic | Mechanism::Mmr(_) | Mechanism::Hybrid(_))
    }

    /// Whether the examples depend on the input text.
    pub fn is_dynamic(&self) -> bool {
        !matches!(self, Mechanism::FixedRandom { .. } | Mechanism::None)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Bm25 => f.write_str("bm25"),
            Mechanism::Semantic => f.write_str("semantic"),
            Mechanism::Mmr(p) => write!(f, "semantic+mmr({})", p.lambda()),
            Mechanism::Hybrid(p) => write!(f, "hybrid({})", p.c()),
            Mechanism::FixedRandom { seed } => write!(f, "fixed-random({seed})"),
            Mechanism::None => f.write_str("none"),
        }
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    /// Accepts `bm25`, `semantic`, `mmr(λ)` or `semantic+mmr(λ)`, `hybrid`
    /// or `hybrid(C)`, `fixed-random(seed)` or `random(seed)`, and `none`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_lowercase();
        let (head, arg) = match s.split_once('(') {
            Some((head, rest)) => {
                let arg = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidParam(format!("unbalanced parenthesis in mechanism `{s}`")))?;
                (head.trim().to_owned(), Some(arg.trim().to_owned()))
            }
            None => (s.clone(), None),
        };
        let number = |what: &str| -> Result<f64> {
            let arg = arg
                .as_deref()
                .ok_or_else(|| Error::InvalidParam(format!("mechanism `{s}` needs a {what}")))?;
            arg.parse()
                .map_err(|_| Error::InvalidParam(format!("bad {what} `{arg}` in mechanism `{s}`")))
        };
        match head.as_str() {
            "bm25" if arg.is_none() => Ok(Mechanism::Bm25),
            "semantic" if arg.is_none() => Ok(Mechanism::Semantic),
            "mmr" | "semantic+mmr" => Ok(Mechanism::Mmr(MmrParams::new(number("lambda")?)?)),
            "hybrid" if arg.is_none() => Ok(Mechanism::Hybrid(RrfParams::default())),
            "hybrid" => Ok(Mechanism::Hybrid(RrfParams::new(number("constant")?)?)),
            "fixed-random" | "random" => {
                let seed = arg.as_deref().unwrap_or("0");
                let seed = seed
                    .parse()
                    .map_err(|_| Error::InvalidParam(format!("bad seed `{seed}` in mechanism `{s}`")))?;
                Ok(Mechanism::FixedRandom { seed })
            }
            "none" | "zero-shot" if arg.is_none() => Ok(Mechanism::None),
            _ => Err(Error::InvalidParam(format!("unknown mechanism `{s}`"))),
        }
    }
}

impl Serialize for Mechanism {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mechanism {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters shared by all index builds.
#[derive(Clone)]
pub struct RetrievalSettings {
    pub bm25: Bm25Params,
    pub normalizer: Normalizer,
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
    /// Prefix for query texts sent to the embedder.
    pub query_instruction: Option<String>,
    pub embed_batch_size: usize,
    pub embed_parallelism: usize,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            bm25: Bm25Params::default(),
            normalizer: Normalizer::default(),
            embedder: None,
            query_instruction: None,
            embed_batch_size: 32,
            embed_parallelism: 1,
        }
    }
}

fn positions_of(dataset: &Dataset) -> HashMap<ExampleId, usize> {
    dataset.examples().iter().enumerate().map(|(i, e)| (e.id().clone(), i)).collect()
}

/// Indexes over one training set, built once and queried many times.
pub struct TrainingIndex {
    train: Arc<Dataset>,
    positions: HashMap<ExampleId, usize>,
    normalizer: Normalizer,
    bm25: Option<Bm25Index>,
    semantic: Option<SemanticIndex>,
    embedder: Option<Arc<dyn EmbeddingProvider>>,
}

impl TrainingIndex {
    /// Builds whatever the given mechanisms need.
    pub fn build(train: Arc<Dataset>, mechanisms: &[Mechanism], settings: &RetrievalSettings) -> Result<Self> {
        let bm25 = if mechanisms.iter().any(Mechanism::needs_bm25) {
            let copy = normalize_copy(&train, &settings.normalizer);
            Some(Bm25Index::build(&copy, &settings.normalizer, settings.bm25)?)
        } else {
            None
        };
        let semantic = if mechanisms.iter().any(Mechanism::needs_embeddings) {
            let embedder = settings
                .embedder
                .as_deref()
                .ok_or_else(|| Error::Config("semantic retrieval needs an embedding provider".into()))?;
            Some(SemanticIndex::build(
                &train,
                embedder,
                settings.query_instruction.clone(),
                settings.embed_batch_size,
                settings.embed_parallelism,
            )?)
        } else {
            None
        };
        Ok(Self {
            positions: positions_of(&train),
            train,
            normalizer: settings.normalizer.clone(),
            bm25,
            semantic,
            embedder: settings.embedder.clone(),
        })
    }

    /// Assembles an index from prebuilt parts, e.g. loaded from disk.
    pub fn from_parts(
        train: Arc<Dataset>,
        normalizer: Normalizer,
        bm25: Option<Bm25Index>,
        semantic: Option<SemanticIndex>,
        embedder: Option<Arc<dyn EmbeddingProvider>>,
    ) -> Self {
        Self {
            positions: positions_of(&train),
            train,
            normalizer,
            bm25,
            semantic,
            embedder,
        }
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn bm25(&self) -> Option<&Bm25Index> {
        self.bm25.as_ref()
    }

    pub fn semantic(&self) -> Option<&SemanticIndex> {
        self.semantic.as_ref()
    }

    fn bm25_index(&self) -> Result<&Bm25Index> {
        self.bm25.as_ref().ok_or_else(|| Error::Config("BM25 index was not built".into()))
    }

    fn semantic_parts(&self) -> Result<(&SemanticIndex, &dyn EmbeddingProvider)> {
        match (&self.semantic, &self.embedder) {
            (Some(index), Some(embedder)) => Ok((index, embedder.as_ref())),
            _ => Err(Error::Config("semantic index was not built".into())),
        }
    }

    /// The ranking `mechanism` produces for `input_text`, at most `k` long.
    pub fn rank(&self, mechanism: Mechanism, input_text: &str, k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        match mechanism {
            Mechanism::Bm25 => self.bm25_index()?.retrieve(input_text, &self.normalizer, k),
            Mechanism::Semantic => {
                let (index, embedder) = self.semantic_parts()?;
                semantic_retrieve(index, embedder, input_text, k)
            }
            Mechanism::Mmr(params) => {
                let (index, embedder) = self.semantic_parts()?;
                let query = index.embed_query(embedder, input_text)?;
                mmr_rerank(index, &query, params, k)
            }
            Mechanism::Hybrid(params) => {
                let full = self.train.len();
                let lexical = self.bm25_index()?.retrieve(input_text, &self.normalizer, full)?;
                let (index, embedder) = self.semantic_parts()?;
                let dense = semantic_retrieve(index, embedder, input_text, full)?;
                rrf_fuse(&[lexical, dense], params, k)
            }
            Mechanism::FixedRandom { seed } => {
                let k = k.min(self.train.len());
                let items = fixed_random_positions(self.train.len(), k, seed)?
                    .into_iter()
                    .map(|p| Scored {
                        id: self.train.examples()[p].id().clone(),
                        score: 0.0,
                    })
                    .collect();
                Ok(RankedList::from_sorted(items))
            }
            Mechanism::None => Ok(RankedList::default()),
        }
    }

    /// The original (un-normalized) examples, most similar first.
    pub fn retrieve(&self, mechanism: Mechanism, input_text: &str, k: usize) -> Result<Vec<&Example>> {
        let ranked = self.rank(mechanism, input_text, k)?;
        self.resolve(&ranked)
    }

    pub fn resolve(&self, ranked: &RankedList) -> Result<Vec<&Example>> {
        ranked
            .iter()
            .map(|s| {
                self.positions
                    .get(&s.id)
                    .map(|&i| &self.train.examples()[i])
                    .ok_or_else(|| Error::InvalidParam(format!("ranked id `{}` is not in the training set", s.id)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_strings_round_trip() {
        for s in ["bm25", "semantic", "semantic+mmr(0.5)", "hybrid(60)", "fixed-random(42)", "none"] {
            let m: Mechanism = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("hybrid".parse::<Mechanism>().unwrap(), Mechanism::Hybrid(RrfParams::default()));
        assert_eq!("MMR(0)".parse::<Mechanism>().unwrap().to_string(), "semantic+mmr(0)");
        assert!("mmr".parse::<Mechanism>().is_err());
        assert!("mmr(2)".parse::<Mechanism>().is_err());
        assert!("bm26".parse::<Mechanism>().is_err());
    }

    #[test]
    fn sorted_applies_tie_rule() {
        let items = vec![
            Scored { id: "b".into(), score: 1.0 },
            Scored { id: "c".into(), score: 2.0 },
            Scored { id: "a".into(), score: 1.0 },
        ];
        assert_eq!(RankedList::sorted(items, 10).ids_str(), ["c", "a", "b"]);
    }
}
