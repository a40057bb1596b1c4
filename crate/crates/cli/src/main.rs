use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rener::harness::{embedder_for, load_corpus, retrieval_settings, ClientChoice, Experiment, ExperimentConfig, Report, Split};
use rener::modelclient::{write_embeddings_file, ResponseCache};
use rener::retrieval::{encode, Mechanism, TrainingIndex};

#[derive(Parser)]
#[command(name = "rener", version, about = "Retrieval-enhanced few-shot named entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the retrieval indexes and write them next to the reports.
    Index(RunArgs),
    /// Run the k-sweep and write a sweep report.
    Sweep(RunArgs),
    /// Evaluate at a single k and write an evaluation report.
    Eval(RunArgs),
    /// Regenerate report files from a report.json.
    Report {
        /// Path to a report.json.
        #[arg(long)]
        from: PathBuf,
        /// Output directory, defaults to the directory of the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inspect or fill the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Summarize the cached responses.
    Inspect {
        #[arg(long, required_unless_present = "dir")]
        config: Option<PathBuf>,
        /// Cache directory, instead of the one named in a config.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Print the full entry with this key.
        #[arg(long)]
        key: Option<String>,
    },
    /// Run the configured sweep to populate the cache without writing a report.
    Warm(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// validation or test.
    #[arg(long)]
    split: Option<Split>,
    /// Mechanism to run; repeat for several. Replaces the configured list.
    #[arg(long = "mechanism")]
    mechanisms: Vec<Mechanism>,
    /// A single k (`20`) or an inclusive range (`1..25`).
    #[arg(long)]
    k: Option<String>,
    /// Seed of the fixed-random baseline.
    #[arg(long)]
    seed: Option<u64>,
    /// Model id override.
    #[arg(long)]
    model: Option<String>,
    /// Answer only from the response cache; fail on a miss.
    #[arg(long)]
    replay_only: bool,
    /// Report directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_k(raw: &str) -> Result<RangeInclusive<usize>> {
    let parse = |s: &str| s.trim().parse::<usize>().with_context(|| format!("bad k `{s}`"));
    match raw.split_once("..") {
        Some((lo, hi)) => Ok(parse(lo)?..=parse(hi.trim_start_matches('='))?),
        None => {
            let k = parse(raw)?;
            Ok(k..=k)
        }
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        let e = &mut config.experiment;
        if !self.mechanisms.is_empty() {
            e.mechanisms = self.mechanisms.clone();
        }
        if let Some(seed) = self.seed {
            e.seed = seed;
        }
        if let Some(raw) = &self.k {
            let range = parse_k(raw)?;
            e.k_min = *range.start();
            e.k_max = *range.end();
            if range.start() == range.end() {
                e.k = Some(*range.start());
            }
        }
        if let Some(model) = &self.model {
            config.model.id = model.clone();
        }
        if let Some(out) = &self.out {
            config.output.report_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    fn experiment(&self, config: ExperimentConfig) -> Result<Experiment> {
        let choice = if self.replay_only {
            ClientChoice::ReplayOnly
        } else {
            ClientChoice::FromConfig
        };
        Ok(Experiment::open(config, choice)?)
    }
}

fn finish(report: &Report, dir: &Path, experiment: &Experiment) -> Result<()> {
    let written = report.write(dir)?;
    print!("{}", report.text());
    for path in written {
        log::info!("wrote {}", path.display());
    }
    let stats = experiment.client().stats();
    eprintln!(
        "{} cache hits, {} backend calls, {} failed attempts",
        stats.cache_hits, stats.backend_calls, stats.failures
    );
    Ok(())
}

fn index(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let corpus = load_corpus(&config)?;
    let mechanisms = &config.experiment.mechanisms;
    let settings = retrieval_settings(&config, mechanisms)?;
    let index = TrainingIndex::build(corpus.train.clone(), mechanisms, &settings)?;
    let dir = config.output.report_dir.join("index");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if let Some(bm25) = index.bm25() {
        let path = dir.join("bm25.json");
        bm25.save(&path)?;
        println!("bm25: {} documents -> {}", corpus.train.len(), path.display());
    }
    if let Some(semantic) = index.semantic() {
        let provider = embedder_for(&config)?;
        let instruction = config.retrieval.query_instruction.as_deref();
        let mut records: Vec<_> = corpus
            .train
            .examples()
            .iter()
            .zip(semantic.embeddings())
            .map(|(e, v)| (e.id().clone(), e.text().to_owned(), v.clone()))
            .collect();
        for split in corpus.validation.iter().chain(corpus.test.iter()) {
            let texts: Vec<String> = split.examples().iter().map(|e| e.text().to_owned()).collect();
            let vectors = encode(provider.as_ref(), &texts, instruction)?;
            for ((example, text), vector) in split.examples().iter().zip(texts).zip(vectors) {
                let embedded = match instruction {
                    Some(i) => format!("{i} {text}"),
                    None => text,
                };
                records.push((example.id().clone(), embedded, vector));
            }
        }
        let path = dir.join("embeddings.jsonl");
        write_embeddings_file(&path, semantic.encoder(), &records)?;
        println!("embeddings: {} vectors of dim {} -> {}", records.len(), semantic.dim(), path.display());
    }
    Ok(())
}

fn sweep(args: &RunArgs, write: bool) -> Result<()> {
    let config = args.config()?;
    let split = args.split.unwrap_or(Split::Validation);
    let dir = config.output.report_dir.join(format!("sweep-{split}"));
    let experiment = args.experiment(config)?;
    let report = experiment.sweep_k(split)?;
    if write {
        finish(&report, &dir, &experiment)
    } else {
        let stats = experiment.client().stats();
        println!(
            "cache warm: {} responses already cached, {} fetched",
            stats.cache_hits, stats.backend_calls
        );
        Ok(())
    }
}

fn eval(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let split = args.split.unwrap_or(Split::Test);
    let Some(k) = config.experiment.k else {
        bail!("no single k given: pass --k or set experiment.k");
    };
    let mechanisms = config.experiment.mechanisms.clone();
    let dir = config.output.report_dir.join(format!("eval-{split}-k{k}"));
    let experiment = args.experiment(config)?;
    let report = experiment.run_eval(split, &mechanisms, k)?;
    finish(&report, &dir, &experiment)
}

fn inspect(config: Option<&Path>, dir: Option<&Path>, key: Option<&str>) -> Result<()> {
    let dir = match (dir, config) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(config)) => ExperimentConfig::load(config)?.output.cache_dir,
        (None, None) => bail!("pass --config or --dir"),
    };
    let cache = ResponseCache::open(&dir)?;
    if let Some(key) = key {
        let entry = cache.get(key).with_context(|| format!("no entry with key {key}"))?;
        println!("{}", serde_json::to_string_pretty(&entry)?);
        return Ok(());
    }
    println!("{}: {} entries", dir.display(), cache.len());
    let entries = cache.entries();
    let mut groups: Vec<(String, String, String, usize)> = Vec::new();
    for e in &entries {
        match groups.last_mut() {
            Some((p, m, t, n)) if *p == e.provider && *m == e.model && *t == e.template_version => *n += 1,
            _ => groups.push((e.provider.clone(), e.model.clone(), e.template_version.clone(), 1)),
        }
    }
    for (provider, model, template, n) in groups {
        println!("  {provider} / {model} / {template}: {n}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Index(args) => index(args),
        Command::Sweep(args) => sweep(args, true),
        Command::Eval(args) => eval(args),
        Command::Report { from, out } => {
            let dir = out
                .clone()
                .unwrap_or_else(|| from.parent().map(Path::to_path_buf).unwrap_or_default());
            let report = Report::load(from)?;
            report.write(&dir)?;
            print!("{}", report.text());
            Ok(())
        }
        Command::Cache { action } => match action {
            CacheAction::Inspect { config, dir, key } => inspect(config.as_deref(), dir.as_deref(), key.as_deref()),
            CacheAction::Warm(args) => sweep(args, false),
        },
    }
}
