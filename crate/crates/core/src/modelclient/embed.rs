//! Embedding providers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::digest;
use crate::corpus::ExampleId;
use crate::error::{Error, Result};
use crate::retrieval::Embedding;

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the encoder, e.g. `hash-bow:64`.
    fn descriptor(&self) -> String;

    /// One embedding per input text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic bag-of-words embedding for tests and offline runs.
///
/// Each whitespace-separated token is lowercased and hashed with FNV-1a
/// (64-bit). The hash seeds a SplitMix64 stream; draw `i` becomes
/// coordinate `i` as `(z >> 11) · 2⁻⁵³ · 2 − 1`, a value in `[−1, 1)`.
/// Token vectors are summed (with multiplicity) and the sum is scaled to
/// unit length. Texts without tokens map to the zero vector.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedding {
    dim: usize,
}

impl HashEmbedding {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dim];
        for token in text.split_whitespace() {
            let mut state = fnv1a64(token.to_lowercase().as_bytes());
            for slot in acc.iter_mut() {
                let z = splitmix64(&mut state);
                *slot += (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut acc {
                *v /= norm;
            }
        }
        Embedding::new(acc).expect("finite by construction")
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn descriptor(&self) -> String {
        format!("hash-bow:{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

const EMBEDDINGS_FORMAT: &str = "rener-embeddings";
const EMBEDDINGS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingsHeader {
    format: String,
    version: u32,
    provider: String,
    dim: usize,
}

/// One line of a precomputed-embedding file after the header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: ExampleId,
    /// SHA-256 of the exact text that was embedded, instruction included.
    pub digest: String,
    pub vector: Embedding,
}

/// Writes a JSON-lines embeddings file: a header naming the provider and
/// dimension, then one record per `(id, text, embedding)`.
pub fn write_embeddings_file(path: &Path, provider: &str, records: &[(ExampleId, String, Embedding)]) -> Result<()> {
    let dim = records.first().map_or(0, |(_, _, e)| e.dim());
    let mut out = String::new();
    let header = EmbeddingsHeader {
        format: EMBEDDINGS_FORMAT.into(),
        version: EMBEDDINGS_VERSION,
        provider: provider.into(),
        dim,
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for (id, text, vector) in records {
        if vector.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: vector.dim(),
            });
        }
        let record = EmbeddingRecord {
            id: id.clone(),
            digest: digest(text),
            vector: vector.clone(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Serves embeddings from a file written by [`write_embeddings_file`],
/// looked up by text digest.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    provider: String,
    dim: usize,
    by_digest: HashMap<String, Embedding>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: missing header", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: EmbeddingsHeader = serde_json::from_str(&header_line)?;
        if header.format != EMBEDDINGS_FORMAT || header.version != EMBEDDINGS_VERSION {
            return Err(Error::Format(format!(
                "{}: expected {EMBEDDINGS_FORMAT} v{EMBEDDINGS_VERSION}, found {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        let mut by_digest = HashMap::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = serde_json::from_str(&line)?;
            if record.vector.dim() != header.dim {
                return Err(Error::DimensionMismatch {
                    expected: header.dim,
                    got: record.vector.dim(),
                });
            }
            by_digest.insert(record.digest, record.vector);
        }
        Ok(Self {
            provider: header.provider,
            dim: header.dim,
            by_digest,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn descriptor(&self) -> String {
        self.provider.clone()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|t| {
                let d = digest(t);
                self.by_digest.get(&d).cloned().ok_or(Error::MissingEmbedding { digest: d })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedding_is_deterministic_and_unit_length() {
        let p = HashEmbedding::new(64).unwrap();
        let a = p.embed_one("EU rejects German call");
        assert_eq!(a, p.embed_one("eu REJECTS german call"));
        let norm: f64 = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_ne!(a, p.embed_one("EU rejects French call"));
        assert!(p.embed_one("   ").is_zero());
    }

    #[test]
    fn hash_embedding_matches_documented_projection() {
        // FNV-1a 64 test vector.
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        // Recompute two coordinates of "a" with an inline SplitMix64.
        let mut state = 0xaf63_dc4c_8601_ec8cu64;
        let mut coords = Vec::new();
        for _ in 0..2 {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            coords.push((z >> 11) as f64 / 9_007_199_254_740_992.0 * 2.0 - 1.0);
        }
        let norm = (coords[0] * coords[0] + coords[1] * coords[1]).sqrt();
        let e = HashEmbedding::new(2).unwrap().embed_one("a");
        assert_eq!(e.as_slice(), &[coords[0] / norm, coords[1] / norm]);
        // Repeated tokens scale the sum, which normalization removes.
        assert_eq!(HashEmbedding::new(2).unwrap().embed_one("a A"), e);
    }

    #[test]
    fn precomputed_file_round_trip_and_missing_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let p = HashEmbedding::new(8).unwrap();
        let records = vec![
            (ExampleId::new("a"), "alpha".to_string(), p.embed_one("alpha")),
            (ExampleId::new("b"), "beta".to_string(), p.embed_one("beta")),
        ];
        write_embeddings_file(&path, &p.descriptor(), &records).unwrap();
        let pre = PrecomputedEmbeddings::load(&path).unwrap();
        assert_eq!(pre.descriptor(), "hash-bow:8");
        assert_eq!(pre.dim(), 8);
        let got = pre.embed(&["beta".into(), "alpha".into()]).unwrap();
        assert_eq!(got, vec![p.embed_one("beta"), p.embed_one("alpha")]);
        match pre.embed(&["gamma".into()]) {
            Err(Error::MissingEmbedding { digest: d }) => assert_eq!(d, digest("gamma")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
