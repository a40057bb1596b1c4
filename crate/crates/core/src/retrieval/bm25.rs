//! Okapi BM25 over the normalized retrieval copy of a training set.
//!
//! ```text
//! score(D, Q) = Σ_{q ∈ Q} idf(q) · tf(q, D) · (k1 + 1) / (tf(q, D) + k1 · (1 − b + b · |D| / avgdl))
//! idf(q)      = ln(1 + (N − df(q) + 0.5) / (df(q) + 0.5))
//! ```
//!
//! `Q` is the query token sequence, so a repeated query term counts once per
//! occurrence.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{top_k, RankedList};
use crate::corpus::{Dataset, ExampleId, Normalizer};
use crate::error::{Error, Result};

const FORMAT: &str = "rener-bm25";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    k1: f64,
    b: f64,
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::InvalidParam(format!("k1 must be non-negative, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidParam(format!("b must lie in [0, 1], got {b}")));
        }
        Ok(Self { k1, b })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    format: String,
    version: u32,
    params: Bm25Params,
    /// Descriptor of the normalizer that produced the indexed texts.
    normalizer: String,
    ids: Vec<ExampleId>,
    doc_lengths: Vec<u32>,
    doc_terms: Vec<BTreeMap<String, u32>>,
    doc_freq: BTreeMap<String, u32>,
    avgdl: f64,
    #[serde(skip)]
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl PartialEq for Bm25Index {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.normalizer == other.normalizer
            && self.ids == other.ids
            && self.doc_lengths == other.doc_lengths
            && self.doc_terms == other.doc_terms
            && self.doc_freq == other.doc_freq
            && self.avgdl == other.avgdl
    }
}

impl Bm25Index {
    /// Indexes an already-normalized dataset; texts are split on whitespace.
    pub fn build(normalized: &Dataset, normalizer: &Normalizer, params: Bm25Params) -> Result<Self> {
        if normalized.is_empty() {
            return Err(Error::Empty);
        }
        let mut ids = Vec::with_capacity(normalized.len());
        let mut doc_lengths = Vec::with_capacity(normalized.len());
        let mut doc_terms = Vec::with_capacity(normalized.len());
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        for example in normalized.examples() {
            let mut terms: BTreeMap<String, u32> = BTreeMap::new();
            let mut length = 0u32;
            for token in example.text().split_whitespace() {
                *terms.entry(token.to_owned()).or_default() += 1;
                length += 1;
            }
            for term in terms.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            ids.push(example.id().clone());
            doc_lengths.push(length);
            doc_terms.push(terms);
        }
        let avgdl = doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64;
        let mut index = Self {
            format: FORMAT.into(),
            version: VERSION,
            params,
            normalizer: normalizer.descriptor(),
            ids,
            doc_lengths,
            doc_terms,
            doc_freq,
            avgdl,
            postings: HashMap::new(),
        };
        index.rebuild_postings();
        Ok(index)
    }

    fn rebuild_postings(&mut self) {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::with_capacity(self.doc_freq.len());
        for (doc, terms) in self.doc_terms.iter().enumerate() {
            for (term, &tf) in terms {
                postings.entry(term.clone()).or_default().push((doc as u32, tf));
            }
        }
        self.postings = postings;
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn normalizer(&self) -> &str {
        &self.normalizer
    }

    pub fn ids(&self) -> &[ExampleId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn doc_length(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    pub fn term_freq(&self, doc: usize, term: &str) -> u32 {
        self.doc_terms[doc].get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = f64::from(self.doc_freq(term));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores of every indexed document, aligned with [`Bm25Index::ids`].
    pub fn scores(&self, query_terms: &[String]) -> Vec<f64> {
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0; self.ids.len()];
        for term in query_terms {
            let Some(postings) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(doc, tf) in postings {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[doc as usize]);
                let norm = k1 * (1.0 - b + b * len / self.avgdl);
                scores[doc as usize] += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        scores
    }

    /// Top-`k` documents for `query_text`, normalized with `normalizer`.
    /// Queries with no matching term still return `min(k, N)` documents,
    /// all scored 0 and ordered by ascending id.
    pub fn retrieve(&self, query_text: &str, normalizer: &Normalizer, k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        let terms = normalizer.normalize(query_text);
        Ok(top_k(&self.ids, &self.scores(&terms), k))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut index: Self = serde_json::from_str(&raw)?;
        if index.format != FORMAT || index.version != VERSION {
            return Err(Error::Format(format!(
                "{}: expected {FORMAT} v{VERSION}, found {} v{}",
                path.display(),
                index.format,
                index.version
            )));
        }
        index.rebuild_postings();
        Ok(index)
    }
}

/// Free-function form of [`Bm25Index::retrieve`].
pub fn bm25_retrieve(index: &Bm25Index, query_text: &str, normalizer: &Normalizer, k: usize) -> Result<RankedList> {
    index.retrieve(query_text, normalizer, k)
}
