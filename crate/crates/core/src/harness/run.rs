use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Backend, DataFormat, EmbeddingSection, ExampleOrder, ExperimentConfig, TagScheme};
use super::report::{ExampleRow, Report, ReportKind, ReportRow, Runtime};
use crate::corpus::{parse_bio, parse_json_examples, parse_yaml_examples, Dataset, Example, ExampleId, LabelSet, TagMap};
use crate::error::{Error, Result};
use crate::eval::{aggregate, compare, EvalCounts};
use crate::modelclient::{
    CompletionBackend, CompletionClient, EmbeddingProvider, EmptyBackend, GoldEchoBackend, HashEmbedding,
    HttpCompletionBackend, HttpEmbeddingProvider, PrecomputedEmbeddings, ResponseCache, ScriptedBackend,
};
use crate::parallel;
use crate::recognition::{PromptTemplate, Recognizer};
use crate::retrieval::{Mechanism, RetrievalSettings, TrainingIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" | "dev" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// The loaded splits of one experiment.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Arc<Dataset>,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
}

impl Corpus {
    /// Checks that all splits share one label set and that no example id
    /// appears in two splits.
    pub fn new(train: Dataset, validation: Option<Dataset>, test: Option<Dataset>) -> Result<Self> {
        let mut seen: HashSet<&ExampleId> = HashSet::new();
        for dataset in std::iter::once(&train).chain(validation.iter()).chain(test.iter()) {
            if dataset.label_set() != train.label_set() {
                return Err(Error::Config(format!(
                    "split `{}` has labels {:?}, training split has {:?}",
                    dataset.name(),
                    dataset.label_set().labels(),
                    train.label_set().labels()
                )));
            }
            for example in dataset.examples() {
                if !seen.insert(example.id()) {
                    return Err(Error::Config(format!("example id `{}` occurs in more than one split", example.id())));
                }
            }
        }
        Ok(Self {
            train: Arc::new(train),
            validation,
            test,
        })
    }

    pub fn split(&self, split: Split) -> Result<&Dataset> {
        match split {
            Split::Validation => self.validation.as_ref(),
            Split::Test => self.test.as_ref(),
        }
        .ok_or_else(|| Error::Config(format!("no {split} split configured")))
    }

    pub fn label_set(&self) -> &LabelSet {
        self.train.label_set()
    }
}

fn load_dataset(config: &ExperimentConfig, path: &Path, name: &str) -> Result<Dataset> {
    let data = &config.data;
    match data.format {
        DataFormat::Bio => {
            let labels = LabelSet::new(data.labels.clone().unwrap_or_default())?;
            let mut tags = match data.tag_scheme {
                Some(TagScheme::Conll2003) => TagMap::conll2003(),
                None => TagMap::new(),
            };
            for (code, label) in &data.tags {
                tags.insert(code.clone(), label.clone());
            }
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            parse_bio(name, BufReader::new(file), &labels, &tags, data.bio_mode).map_err(|e| match e {
                Error::Bio { line, message } => Error::Bio {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })
        }
        DataFormat::Yaml | DataFormat::Json => {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            if data.format == DataFormat::Yaml {
                parse_yaml_examples(&raw, name)
            } else {
                parse_json_examples(&raw, name)
            }
        }
    }
}

/// Loads every configured split. Split datasets are named
/// `{domain}-{train|validation|test}`.
pub fn load_corpus(config: &ExperimentConfig) -> Result<Corpus> {
    let domain = config.domain();
    let train = load_dataset(config, &config.data.train, &format!("{domain}-train"))?;
    let validation = config
        .data
        .validation
        .as_deref()
        .map(|p| load_dataset(config, p, &format!("{domain}-validation")))
        .transpose()?;
    let test = config
        .data
        .test
        .as_deref()
        .map(|p| load_dataset(config, p, &format!("{domain}-test")))
        .transpose()?;
    Corpus::new(train, validation, test)
}

pub fn embedder_for(config: &ExperimentConfig) -> Result<Arc<dyn EmbeddingProvider>> {
    Ok(match &config.embedding {
        EmbeddingSection::Hash { dim } => Arc::new(HashEmbedding::new(*dim)?),
        EmbeddingSection::Precomputed { path } => Arc::new(PrecomputedEmbeddings::load(path)?),
        EmbeddingSection::Http {
            endpoint,
            model,
            api_key_env,
        } => Arc::new(HttpEmbeddingProvider::new(
            endpoint.clone(),
            model.clone(),
            api_key_env.as_deref(),
            config.model.retry,
        )?),
    })
}

pub fn retrieval_settings(config: &ExperimentConfig, mechanisms: &[Mechanism]) -> Result<RetrievalSettings> {
    let embedder = if mechanisms.iter().any(Mechanism::needs_embeddings) {
        Some(embedder_for(config)?)
    } else {
        None
    };
    Ok(RetrievalSettings {
        bm25: config.retrieval.bm25()?,
        normalizer: config.retrieval.normalizer(),
        embedder,
        query_instruction: config.retrieval.query_instruction.clone(),
        embed_parallelism: config.model.max_concurrency,
        ..RetrievalSettings::default()
    })
}

pub fn template_for(config: &ExperimentConfig) -> Result<PromptTemplate> {
    match &config.model.template {
        Some(path) => PromptTemplate::load(path),
        None => Ok(PromptTemplate::default()),
    }
}

fn scripted_backend(config: &ExperimentConfig, template: &PromptTemplate) -> Result<ScriptedBackend> {
    let path = config
        .model
        .responses
        .as_deref()
        .ok_or_else(|| Error::Config("model.backend = \"scripted\" needs model.responses".into()))?;
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let responses: BTreeMap<String, String> = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&raw)?
    } else {
        serde_yaml::from_str(&raw)?
    };
    Ok(responses
        .into_iter()
        .fold(ScriptedBackend::new("scripted").with_template(template.clone()), |b, (input, response)| {
            b.on_input(input, response)
        }))
}

/// Where completions come from.
#[derive(Clone, Default)]
pub enum ClientChoice {
    /// The backend named in the config.
    #[default]
    FromConfig,
    /// Cache only; a miss is an error.
    ReplayOnly,
    /// A caller-supplied backend.
    Backend(Arc<dyn CompletionBackend>),
}

pub fn build_client(
    config: &ExperimentConfig,
    corpus: &Corpus,
    template: &PromptTemplate,
    choice: ClientChoice,
) -> Result<CompletionClient> {
    let cache = Arc::new(ResponseCache::open(&config.output.cache_dir)?);
    let backend: Arc<dyn CompletionBackend> = match choice {
        ClientChoice::ReplayOnly => {
            return Ok(CompletionClient::replay_only(config.model.provider()?, cache, template.version()));
        }
        ClientChoice::Backend(backend) => backend,
        ClientChoice::FromConfig => match config.model.backend {
            Backend::Http => Arc::new(HttpCompletionBackend::new(config.model.http_settings()?.clone())?),
            Backend::GoldEcho => Arc::new(GoldEchoBackend::new(
                template.clone(),
                corpus.validation.iter().chain(corpus.test.iter()),
            )),
            Backend::Empty => Arc::new(EmptyBackend),
            Backend::Scripted => Arc::new(scripted_backend(config, template)?),
        },
    };
    Ok(CompletionClient::new(backend, template.version())
        .with_cache(cache)
        .with_retry(config.model.retry)
        .with_max_concurrency(config.model.max_concurrency))
}

/// What the observer sees for every rendered prompt.
#[derive(Debug)]
pub struct PromptEvent<'a> {
    pub split: Split,
    pub input_id: &'a ExampleId,
    pub mechanism: Mechanism,
    pub k: usize,
    pub example_ids: Vec<&'a ExampleId>,
    pub prompt: &'a str,
}

pub type PromptObserver = dyn Fn(&PromptEvent<'_>) + Send + Sync;

/// One configured experiment, ready to run.
pub struct Experiment {
    config: ExperimentConfig,
    corpus: Corpus,
    index: TrainingIndex,
    template: PromptTemplate,
    client: CompletionClient,
    observer: Option<Arc<PromptObserver>>,
}

struct Unit {
    mechanism: Mechanism,
    k: usize,
    baseline: bool,
}

impl Experiment {
    pub fn open(config: ExperimentConfig, choice: ClientChoice) -> Result<Self> {
        let corpus = load_corpus(&config)?;
        Self::with_corpus(config, corpus, choice)
    }

    pub fn with_corpus(config: ExperimentConfig, corpus: Corpus, choice: ClientChoice) -> Result<Self> {
        config.validate()?;
        let n = corpus.train.len();
        let e = &config.experiment;
        let k_needed = e.k_max.max(e.k.unwrap_or(0));
        if k_needed > n {
            return Err(Error::Config(format!(
                "k = {k_needed} exceeds the {n} training examples"
            )));
        }
        let mechanisms = &config.experiment.mechanisms;
        let index = TrainingIndex::build(corpus.train.clone(), mechanisms, &retrieval_settings(&config, mechanisms)?)?;
        let template = template_for(&config)?;
        let client = build_client(&config, &corpus, &template, choice)?;
        Ok(Self {
            config,
            corpus,
            index,
            template,
            client,
            observer: None,
        })
    }

    /// Called with every prompt just before it is sent.
    pub fn with_observer(mut self, observer: Arc<PromptObserver>) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &TrainingIndex {
        &self.index
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn client(&self) -> &CompletionClient {
        &self.client
    }

    fn inputs(&self, split: Split) -> Result<&[Example]> {
        let examples = self.corpus.split(split)?.examples();
        let limit = self.config.experiment.max_examples.unwrap_or(examples.len());
        Ok(&examples[..limit.min(examples.len())])
    }

    fn baseline(&self) -> Mechanism {
        Mechanism::FixedRandom {
            seed: self.config.experiment.seed,
        }
    }

    /// Runs every unit for every input and returns per-unit, per-input
    /// counts in input order.
    fn run_units(&self, split: Split, units: &[Unit]) -> Result<Vec<Vec<EvalCounts>>> {
        let inputs = self.inputs(split)?;
        let evaluated: HashSet<&ExampleId> = self.corpus.split(split)?.examples().iter().map(Example::id).collect();
        let k_max = units.iter().map(|u| u.k).max().unwrap_or(0);
        let mut distinct: Vec<Mechanism> = Vec::new();
        for unit in units {
            if !distinct.contains(&unit.mechanism) {
                distinct.push(unit.mechanism);
            }
        }
        let recognizer = Recognizer {
            client: &self.client,
            template: &self.template,
            model: &self.config.model.id,
            decoding: self.config.model.decoding(),
        };
        let label_set = self.corpus.label_set();
        let order = self.config.experiment.example_order;
        let done = std::sync::atomic::AtomicUsize::new(0);
        let per_input = parallel::map(inputs, self.client.max_concurrency(), |input| -> Result<Vec<EvalCounts>> {
            let mut rankings = Vec::with_capacity(distinct.len());
            for &mechanism in &distinct {
                let examples = if k_max == 0 {
                    Vec::new()
                } else {
                    self.index.retrieve(mechanism, input.text(), k_max)?
                };
                if let Some(leaked) = examples.iter().find(|e| evaluated.contains(e.id())) {
                    return Err(Error::Leakage(leaked.id().to_string()));
                }
                rankings.push(examples);
            }
            let mut counts = Vec::with_capacity(units.len());
            for unit in units {
                let slot = distinct.iter().position(|m| *m == unit.mechanism).expect("collected above");
                let ranked = &rankings[slot];
                let mut shots: Vec<&Example> = ranked[..unit.k.min(ranked.len())].to_vec();
                if order == ExampleOrder::MostSimilarLast {
                    shots.reverse();
                }
                let recognition = recognizer.recognize(label_set, &shots, input.text())?;
                if let Some(observer) = &self.observer {
                    observer(&PromptEvent {
                        split,
                        input_id: input.id(),
                        mechanism: unit.mechanism,
                        k: unit.k,
                        example_ids: shots.iter().map(|e| e.id()).collect(),
                        prompt: &recognition.prompt,
                    });
                }
                counts.push(compare(&recognition.parsed.entities, input.entities()));
            }
            let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            log::debug!("{split}: {finished}/{} inputs done", inputs.len());
            Ok(counts)
        })
        .map_err(|e| {
            log::error!(
                "run stopped: {e}. Completed calls are cached; rerunning resumes from the cache."
            );
            e
        })?;
        Ok((0..units.len())
            .map(|u| per_input.iter().map(|counts| counts[u]).collect())
            .collect())
    }

    fn runtime(&self, started: Instant) -> Runtime {
        let stats = self.client.stats();
        Runtime {
            elapsed_ms: started.elapsed().as_millis() as u64,
            cache_hits: stats.cache_hits,
            backend_calls: stats.backend_calls,
            cache_hit_ratio: stats.hit_ratio(),
        }
    }

    fn report(&self, kind: ReportKind, split: Split, rows: Vec<ReportRow>, examples: Vec<ExampleRow>, started: Instant) -> Report {
        Report::new(
            kind,
            self.config.domain(),
            split,
            &self.config.model.id,
            self.client.provider(),
            self.template.version(),
            &self.config.digest(),
            self.config.experiment.seed,
            rows,
            examples,
            self.runtime(started),
        )
    }

    /// Evaluates each of `mechanisms` at a single `k`, with the fixed-random
    /// baseline at the same `k` as the "without retrieval" score.
    pub fn run_eval(&self, split: Split, mechanisms: &[Mechanism], k: usize) -> Result<Report> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        if k > self.corpus.train.len() {
            return Err(Error::KExceedsDataset {
                k,
                n: self.corpus.train.len(),
            });
        }
        let started = Instant::now();
        let mut units: Vec<Unit> = mechanisms
            .iter()
            .map(|&mechanism| Unit {
                mechanism,
                k,
                baseline: false,
            })
            .collect();
        units.push(Unit {
            mechanism: self.baseline(),
            k,
            baseline: true,
        });
        self.ensure_indexed(mechanisms)?;
        let counts = self.run_units(split, &units)?;
        let baseline = aggregate(counts.last().expect("baseline unit"));
        let inputs = self.inputs(split)?;
        let mut rows = Vec::new();
        let mut examples = Vec::new();
        for (unit, per_input) in units.iter().zip(&counts) {
            if unit.baseline {
                continue;
            }
            rows.push(ReportRow {
                mechanism: unit.mechanism,
                k,
                with_retrieval: aggregate(per_input),
                without_retrieval: baseline,
            });
            for (input, c) in inputs.iter().zip(per_input) {
                examples.push(ExampleRow {
                    id: input.id().clone(),
                    mechanism: unit.mechanism,
                    k,
                    counts: *c,
                });
            }
        }
        Ok(self.report(ReportKind::Eval, split, rows, examples, started))
    }

    /// The configured k-range sweep over the configured mechanisms.
    pub fn sweep_k(&self, split: Split) -> Result<Report> {
        let e = &self.config.experiment;
        self.sweep(split, &e.mechanisms.clone(), e.k_min, e.k_max)
    }

    pub fn sweep(&self, split: Split, mechanisms: &[Mechanism], k_min: usize, k_max: usize) -> Result<Report> {
        if k_min == 0 || k_min > k_max {
            return Err(Error::Config(format!("invalid k range [{k_min}, {k_max}]")));
        }
        if k_max > self.corpus.train.len() {
            return Err(Error::KExceedsDataset {
                k: k_max,
                n: self.corpus.train.len(),
            });
        }
        self.ensure_indexed(mechanisms)?;
        let started = Instant::now();
        let mut units = Vec::new();
        for k in k_min..=k_max {
            for &mechanism in mechanisms {
                units.push(Unit {
                    mechanism,
                    k,
                    baseline: false,
                });
            }
            units.push(Unit {
                mechanism: self.baseline(),
                k,
                baseline: true,
            });
        }
        let counts = self.run_units(split, &units)?;
        let mut rows = Vec::new();
        let mut baseline_at = std::collections::HashMap::new();
        for (unit, per_input) in units.iter().zip(&counts) {
            if unit.baseline {
                baseline_at.insert(unit.k, aggregate(per_input));
            }
        }
        for (unit, per_input) in units.iter().zip(&counts) {
            if !unit.baseline {
                rows.push(ReportRow {
                    mechanism: unit.mechanism,
                    k: unit.k,
                    with_retrieval: aggregate(per_input),
                    without_retrieval: baseline_at[&unit.k],
                });
            }
        }
        Ok(self.report(ReportKind::Sweep, split, rows, Vec::new(), started))
    }

    fn ensure_indexed(&self, mechanisms: &[Mechanism]) -> Result<()> {
        for m in mechanisms {
            let missing = (m.needs_bm25() && self.index.bm25().is_none())
                || (m.needs_embeddings() && self.index.semantic().is_none());
            if missing {
                return Err(Error::Config(format!(
                    "mechanism {m} is not among the configured mechanisms, so its index was not built"
                )));
            }
        }
        Ok(())
    }
}
