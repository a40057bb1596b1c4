//! Dense-embedding retrieval ranked by cosine similarity.

use serde::{Deserialize, Serialize};

use super::{top_k, RankedList};
use crate::corpus::{Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::modelclient::EmbeddingProvider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("embedding has a non-finite entry".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Encodes `texts`, prepending `instruction` and a space to each one.
/// The instruction is meant for query texts only.
pub fn encode(provider: &dyn EmbeddingProvider, texts: &[String], instruction: Option<&str>) -> Result<Vec<Embedding>> {
    let prefixed: Vec<String>;
    let inputs = match instruction {
        Some(instruction) => {
            prefixed = texts.iter().map(|t| format!("{instruction} {t}")).collect();
            &prefixed
        }
        None => texts,
    };
    let embeddings = provider.embed(inputs)?;
    if embeddings.len() != texts.len() {
        return Err(Error::provider(
            format!("expected {} embeddings, provider returned {}", texts.len(), embeddings.len()),
            false,
        ));
    }
    Ok(embeddings)
}

/// Encodes `texts` in batches of `batch_size`, with at most `parallelism`
/// batches in flight. Output order matches input order.
pub fn encode_batched(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
    batch_size: usize,
    parallelism: usize,
) -> Result<Vec<Embedding>> {
    let batches: Vec<&[String]> = texts.chunks(batch_size.max(1)).collect();
    let results = crate::parallel::map(&batches, parallelism, |batch| encode(provider, batch, None))?;
    Ok(results.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticIndex {
    ids: Vec<ExampleId>,
    embeddings: Vec<Embedding>,
    dim: usize,
    encoder: String,
    instruction: Option<String>,
}

impl SemanticIndex {
    /// Embeds every example text (never with the query instruction).
    pub fn build(
        dataset: &Dataset,
        provider: &dyn EmbeddingProvider,
        instruction: Option<String>,
        batch_size: usize,
        parallelism: usize,
    ) -> Result<Self> {
        let texts: Vec<String> = dataset.examples().iter().map(|e| e.text().to_owned()).collect();
        let embeddings = encode_batched(provider, &texts, batch_size, parallelism)?;
        let ids = dataset.examples().iter().map(|e| e.id().clone()).collect();
        Self::from_embeddings(ids, embeddings, provider.descriptor(), instruction)
    }

    pub fn from_embeddings(
        ids: Vec<ExampleId>,
        embeddings: Vec<Embedding>,
        encoder: String,
        instruction: Option<String>,
    ) -> Result<Self> {
        let first = embeddings.first().ok_or(Error::Empty)?;
        let dim = first.dim();
        if ids.len() != embeddings.len() {
            return Err(Error::InvalidParam(format!(
                "{} ids but {} embeddings",
                ids.len(),
                embeddings.len()
            )));
        }
        for embedding in &embeddings {
            if embedding.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: embedding.dim(),
                });
            }
            if embedding.is_zero() {
                return Err(Error::ZeroVector);
            }
        }
        Ok(Self {
            ids,
            embeddings,
            dim,
            encoder,
            instruction,
        })
    }

    pub fn ids(&self) -> &[ExampleId] {
        &self.ids
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder(&self) -> &str {
        &self.encoder
    }

    pub fn instruction(&self) -> Option<&str> {
        self.instruction.as_deref()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn embed_query(&self, provider: &dyn EmbeddingProvider, query_text: &str) -> Result<Embedding> {
        let mut out = encode(provider, &[query_text.to_owned()], self.instruction())?;
        Ok(out.remove(0))
    }

    pub fn similarities(&self, query: &Embedding) -> Result<Vec<f64>> {
        self.embeddings.iter().map(|e| cosine_similarity(e, query)).collect()
    }

    pub fn rank(&self, query: &Embedding, k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        if self.is_empty() {
            return Err(Error::Empty);
        }
        Ok(top_k(&self.ids, &self.similarities(query)?, k))
    }
}

/// Top-`k` training examples by cosine similarity to the embedded query.
/// `k` larger than the index returns every example.
pub fn semantic_retrieve(
    index: &SemanticIndex,
    provider: &dyn EmbeddingProvider,
    query_text: &str,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let query = index.embed_query(provider, query_text)?;
    index.rank(&query, k)
}
