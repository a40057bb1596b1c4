//! Experiment configuration.
//!
//! A TOML file with the sections below. Relative paths are resolved against
//! the directory of the config file. Credentials are never stored here, only
//! the names of the environment variables that hold them.
//!
//! ```toml
//! [experiment]
//! domain = "politics"              # defaults to the config file stem
//! mechanisms = ["bm25", "semantic", "semantic+mmr(0.5)", "hybrid(60)"]
//! k_min = 1
//! k_max = 25
//! k = 20                           # single-k evaluation, optional
//! seed = 0                         # fixed-random baseline seed
//! max_examples = 50                # optional cap per split
//! example_order = "most-similar-first"
//!
//! [data]
//! format = "bio"                   # bio | yaml | json
//! labels = ["person", "location"]  # bio only
//! tag_scheme = "conll2003"         # bio only, optional
//! tags = { PER = "person" }        # bio only, optional
//! bio_mode = "lenient"             # lenient | strict
//! train = "data/train.txt"
//! validation = "data/dev.txt"
//! test = "data/test.txt"
//!
//! [retrieval]
//! k1 = 1.2
//! b = 0.75
//! query_instruction = "Represent this sentence for searching relevant passages:"
//! stemming = "english"             # english | none
//! lowercase = true
//!
//! [embedding]
//! provider = "hash"                # hash | precomputed | http
//! dim = 64                         # hash
//! path = "emb.jsonl"               # precomputed
//! endpoint = "https://…"           # http
//! model = "…"                      # http
//! api_key_env = "OPENAI_API_KEY"   # http
//!
//! [model]
//! backend = "http"                 # http | gold-echo | empty | scripted
//! responses = "responses.yaml"     # scripted only: input text -> response
//! id = "gemini-1.5-flash"
//! temperature = 0.0
//! max_output_tokens = 512
//! max_concurrency = 4
//! template = "prompt.toml"         # optional, defaults to the bundled one
//! http = { adapter = "gemini", endpoint = "https://…", api_key_env = "GEMINI_API_KEY" }
//! retry = { max_retries = 5, base_delay_ms = 500, max_delay_ms = 30000 }
//!
//! [output]
//! cache_dir = "cache"
//! report_dir = "reports"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{BioMode, Normalizer, Stemming};
use crate::error::{Error, Result};
use crate::modelclient::{digest, Decoding, HttpSettings, RetryPolicy};
use crate::retrieval::{Bm25Params, Mechanism};

pub const DEFAULT_QUERY_INSTRUCTION: &str = "Represent this sentence for searching relevant passages:";

/// The shipped default parameter file.
pub const SHIPPED_DEFAULTS: &str = include_str!("../../assets/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<Mechanism>,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// The k used by single-k evaluation.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_examples: Option<usize>,
    #[serde(default)]
    pub example_order: ExampleOrder,
}

fn default_mechanisms() -> Vec<Mechanism> {
    ["bm25", "semantic", "semantic+mmr(0)", "semantic+mmr(0.5)", "hybrid(60)"]
        .iter()
        .map(|m| m.parse().expect("valid default mechanism"))
        .collect()
}

fn default_k_min() -> usize {
    1
}

fn default_k_max() -> usize {
    25
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            domain: None,
            mechanisms: default_mechanisms(),
            k_min: default_k_min(),
            k_max: default_k_max(),
            k: None,
            seed: 0,
            max_examples: None,
            example_order: ExampleOrder::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Bio,
    Yaml,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    Conll2003,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub format: DataFormat,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub tag_scheme: Option<TagScheme>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    #[serde(default, with = "bio_mode")]
    pub bio_mode: BioMode,
    pub train: PathBuf,
    #[serde(default)]
    pub validation: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

mod bio_mode {
    use super::BioMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mode: &BioMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match mode {
            BioMode::Lenient => "lenient",
            BioMode::Strict => "strict",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BioMode, D::Error> {
        match String::deserialize(d)?.as_str() {
            "lenient" => Ok(BioMode::Lenient),
            "strict" => Ok(BioMode::Strict),
            other => Err(serde::de::Error::custom(format!("unknown bio_mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemmingSpec {
    #[default]
    English,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_instruction")]
    pub query_instruction: Option<String>,
    #[serde(default)]
    pub stemming: StemmingSpec,
    #[serde(default = "yes")]
    pub lowercase: bool,
}

fn default_k1() -> f64 {
    1.2
}

fn default_b() -> f64 {
    0.75
}

fn default_instruction() -> Option<String> {
    Some(DEFAULT_QUERY_INSTRUCTION.into())
}

fn yes() -> bool {
    true
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            k1: default_k1(),
            b: default_b(),
            query_instruction: default_instruction(),
            stemming: StemmingSpec::default(),
            lowercase: true,
        }
    }
}

impl RetrievalSection {
    pub fn bm25(&self) -> Result<Bm25Params> {
        Bm25Params::new(self.k1, self.b)
    }

    pub fn normalizer(&self) -> Normalizer {
        let stemming = match self.stemming {
            StemmingSpec::English => Stemming::English,
            StemmingSpec::None => Stemming::None,
        };
        Normalizer::new(self.lowercase, stemming)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSection {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Precomputed {
        path: PathBuf,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
    },
}

fn default_dim() -> usize {
    64
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection::Hash { dim: default_dim() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Http,
    GoldEcho,
    Empty,
    /// Canned responses from `model.responses`, keyed by input text.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub backend: Backend,
    #[serde(default = "default_model_id")]
    pub id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub template: Option<PathBuf>,
    /// YAML or JSON map from input text to raw response, for the scripted
    /// backend.
    #[serde(default)]
    pub responses: Option<PathBuf>,
    #[serde(default)]
    pub http: Option<HttpSettings>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_model_id() -> String {
    "stub".into()
}

fn default_max_tokens() -> u32 {
    Decoding::default().max_output_tokens
}

fn default_concurrency() -> usize {
    4
}

impl ModelSection {
    pub fn decoding(&self) -> Decoding {
        Decoding {
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    /// Provider name recorded in cache keys.
    pub fn provider(&self) -> Result<String> {
        match self.backend {
            Backend::GoldEcho => Ok("gold-echo".into()),
            Backend::Empty => Ok("empty".into()),
            Backend::Scripted => Ok("scripted".into()),
            Backend::Http => Ok(self.http_settings()?.provider_name()),
        }
    }

    pub fn http_settings(&self) -> Result<&HttpSettings> {
        self.http
            .as_ref()
            .ok_or_else(|| Error::Config("model.backend = \"http\" needs a [model.http] table".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_report_dir")]
    pub report_dir: PathBuf,
}

fn default_cache_dir() -> PathBuf {
    "cache".into()
}

fn default_report_dir() -> PathBuf {
    "reports".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            cache_dir: default_cache_dir(),
            report_dir: default_report_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub data: DataSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    pub model: ModelSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// The tunable parameters of the shipped defaults file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDefaults {
    pub experiment: ExperimentSection,
    pub retrieval: RetrievalSection,
}

impl ParameterDefaults {
    pub fn shipped() -> Result<Self> {
        toml::from_str(SHIPPED_DEFAULTS).map_err(|e| Error::Config(format!("defaults.toml: {e}")))
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl ExperimentConfig {
    /// Parses `source`, resolving relative paths against `base_dir`.
    pub fn from_toml(source: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(source).map_err(|e| Error::Config(e.to_string()))?;
        let data = &mut config.data;
        resolve(base_dir, &mut data.train);
        for path in [&mut data.validation, &mut data.test].into_iter().flatten() {
            resolve(base_dir, path);
        }
        if let EmbeddingSection::Precomputed { path } = &mut config.embedding {
            resolve(base_dir, path);
        }
        for path in [&mut config.model.template, &mut config.model.responses].into_iter().flatten() {
            resolve(base_dir, path);
        }
        resolve(base_dir, &mut config.output.cache_dir);
        resolve(base_dir, &mut config.output.report_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = Self::from_toml(&source, base)?;
        if config.experiment.domain.is_none() {
            config.experiment.domain = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(config)
    }

    /// Checks everything that can be checked without reading the data.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.k_min == 0 || e.k_min > e.k_max {
            return Err(Error::Config(format!("invalid k range [{}, {}]", e.k_min, e.k_max)));
        }
        if e.k == Some(0) {
            return Err(Error::Config("experiment.k must be at least 1".into()));
        }
        if e.mechanisms.is_empty() {
            return Err(Error::Config("no mechanisms configured".into()));
        }
        if self.data.format == DataFormat::Bio && self.data.labels.is_none() {
            return Err(Error::Config("data.format = \"bio\" needs data.labels".into()));
        }
        if self.model.max_concurrency == 0 {
            return Err(Error::Config("model.max_concurrency must be positive".into()));
        }
        self.retrieval.bm25()?;
        if self.model.backend == Backend::Http {
            self.model.http_settings()?;
        }
        if self.model.backend == Backend::Scripted && self.model.responses.is_none() {
            return Err(Error::Config("model.backend = \"scripted\" needs model.responses".into()));
        }
        let mut paths = vec![&self.data.train];
        paths.extend(self.data.validation.iter());
        paths.extend(self.data.test.iter());
        if let EmbeddingSection::Precomputed { path } = &self.embedding {
            paths.push(path);
        }
        paths.extend(self.model.template.iter());
        paths.extend(self.model.responses.iter());
        for path in paths {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &str {
        self.experiment.domain.as_deref().unwrap_or("experiment")
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn digest(&self) -> String {
        digest(&serde_json::to_string(self).expect("config serializes"))
    }
}
