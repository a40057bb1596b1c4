mod common;

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rener::corpus::Dataset;
use rener::harness::{ClientChoice, Corpus, Experiment, ExampleOrder, ExperimentConfig, PromptEvent, Report, Split};
use rener::modelclient::{CompletionBackend, CompletionRequest, FnBackend, GoldEchoBackend, ResponseCache};
use rener::recognition::PromptTemplate;
use rener::retrieval::Mechanism;
use rener::Error;

use common::fixture_config;

fn replay_config(out: &Path) -> ExperimentConfig {
    let mut config = fixture_config("replay/config.toml", out);
    config.experiment.k_max = 5;
    config.experiment.mechanisms = vec![Mechanism::Bm25, Mechanism::Semantic];
    config
}

fn examples_in(prompt: &str) -> usize {
    prompt.lines().filter(|l| l.starts_with("Example ")).count() - 1
}

fn gold_backend(config: &ExperimentConfig) -> GoldEchoBackend {
    let corpus = rener::harness::load_corpus(config).unwrap();
    GoldEchoBackend::new(PromptTemplate::default(), corpus.validation.iter())
}

#[test]
fn input_keyed_answers_give_flat_f_across_k() {
    let out = tempfile::tempdir().unwrap();
    let experiment = Experiment::open(replay_config(out.path()), ClientChoice::FromConfig).unwrap();
    let report = experiment.sweep_k(Split::Validation).unwrap();
    assert_eq!(report.rows.len(), 10);
    let f = report.rows[0].with_retrieval.f1;
    assert!(f > 0.0 && f < 1.0);
    for row in &report.rows {
        assert_eq!(row.with_retrieval, report.rows[0].with_retrieval, "{} at k = {}", row.mechanism, row.k);
        assert_eq!(row.without_retrieval, row.with_retrieval);
    }
}

#[test]
fn f_rises_with_k_when_more_examples_help() {
    let out = tempfile::tempdir().unwrap();
    let mut config = replay_config(out.path());
    config.experiment.k_max = 6;
    let gold = gold_backend(&config);
    let backend = FnBackend::new("needs-examples", move |request: &CompletionRequest| {
        let prompt = request.prompt();
        let template = PromptTemplate::default();
        let needed = 1 + template.input_text(prompt).unwrap().len() % 6;
        if examples_in(prompt) >= needed {
            gold.complete(request).map(|c| c.text)
        } else {
            Ok(String::new())
        }
    });
    let experiment = Experiment::open(config, ClientChoice::Backend(Arc::new(backend))).unwrap();
    let report = experiment.sweep(Split::Validation, &[Mechanism::Bm25], 1, 6).unwrap();
    let f: Vec<f64> = report.rows.iter().map(|r| r.with_retrieval.f1).collect();
    assert!(f[0] < 1.0, "{f:?}");
    assert!(f.windows(2).all(|w| w[0] <= w[1]), "{f:?}");
    assert_eq!(*f.last().unwrap(), 1.0);
    assert_eq!(report.best[0].k, 6);
}

#[test]
fn sweep_report_regenerates_byte_identically() {
    let out = tempfile::tempdir().unwrap();
    let experiment = Experiment::open(replay_config(out.path()), ClientChoice::FromConfig).unwrap();
    let report = experiment.sweep_k(Split::Validation).unwrap();
    let first = out.path().join("first");
    let second = out.path().join("second");
    let written = report.write(&first).unwrap();
    Report::regenerate(&first.join("report.json"), &second).unwrap();
    assert_eq!(written.len(), 5);
    for path in written {
        let name = path.file_name().unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name:?}");
    }
    let table = std::fs::read_to_string(first.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn interrupted_run_resumes_from_the_cache() {
    let out = tempfile::tempdir().unwrap();
    let mut config = replay_config(out.path());
    config.model.max_concurrency = 1;
    let gold = Arc::new(gold_backend(&config));

    let calls = Arc::new(AtomicUsize::new(0));
    let failing = {
        let (gold, calls) = (gold.clone(), calls.clone());
        FnBackend::new("resumable", move |request: &CompletionRequest| {
            if calls.fetch_add(1, Ordering::SeqCst) >= 15 {
                return Err(Error::Provider {
                    message: "connection reset".into(),
                    retriable: false,
                });
            }
            gold.complete(request).map(|c| c.text)
        })
    };
    let steady = {
        let gold = gold.clone();
        Arc::new(FnBackend::new("resumable", move |request: &CompletionRequest| gold.complete(request).map(|c| c.text)))
    };

    let experiment = Experiment::open(config.clone(), ClientChoice::Backend(Arc::new(failing))).unwrap();
    assert!(experiment.sweep_k(Split::Validation).is_err());
    assert_eq!(ResponseCache::open(&config.output.cache_dir).unwrap().len(), 15);

    let resumed = Experiment::open(config.clone(), ClientChoice::Backend(steady.clone())).unwrap();
    let resumed_report = resumed.sweep_k(Split::Validation).unwrap();

    let fresh_dir = tempfile::tempdir().unwrap();
    let mut fresh_config = config.clone();
    fresh_config.output.cache_dir = fresh_dir.path().join("cache");
    let fresh = Experiment::open(fresh_config, ClientChoice::Backend(steady)).unwrap();
    let fresh_report = fresh.sweep_k(Split::Validation).unwrap();

    assert_eq!(resumed_report.rows, fresh_report.rows);
    assert_eq!(resumed_report.runtime.backend_calls + 15, fresh_report.runtime.backend_calls);
}

#[test]
fn distinct_prompts_get_distinct_cache_keys() {
    let out = tempfile::tempdir().unwrap();
    let config = replay_config(out.path());
    let prompts = Arc::new(Mutex::new(HashSet::new()));
    let observer = {
        let prompts = prompts.clone();
        move |event: &PromptEvent<'_>| {
            prompts.lock().unwrap().insert(event.prompt.to_owned());
        }
    };
    let experiment = Experiment::open(config.clone(), ClientChoice::FromConfig).unwrap().with_observer(Arc::new(observer));
    experiment.sweep_k(Split::Validation).unwrap();
    let prompts = prompts.lock().unwrap();
    let keys: HashSet<String> = prompts
        .iter()
        .map(|p| experiment.client().key_for(&CompletionRequest::new(&config.model.id, p.as_str(), config.model.decoding()).unwrap()))
        .collect();
    assert!(prompts.len() > 100);
    assert_eq!(keys.len(), prompts.len());
    assert_eq!(ResponseCache::open(&config.output.cache_dir).unwrap().len(), prompts.len());
}

fn shots_by_unit(config: ExperimentConfig) -> HashMap<(String, usize, String), Vec<String>> {
    let seen = Arc::new(Mutex::new(HashMap::new()));
    let observer = {
        let seen = seen.clone();
        move |event: &PromptEvent<'_>| {
            let ids = event.example_ids.iter().map(|id| id.to_string()).collect();
            seen.lock().unwrap().insert((event.input_id.to_string(), event.k, event.mechanism.to_string()), ids);
        }
    };
    let experiment = Experiment::open(config, ClientChoice::FromConfig).unwrap().with_observer(Arc::new(observer));
    experiment.sweep_k(Split::Validation).unwrap();
    let seen = seen.lock().unwrap().clone();
    seen
}

#[test]
fn most_similar_last_reverses_the_examples() {
    let out = tempfile::tempdir().unwrap();
    let first = shots_by_unit(replay_config(out.path()));
    let mut config = replay_config(out.path());
    config.experiment.example_order = ExampleOrder::MostSimilarLast;
    let last = shots_by_unit(config);
    assert_eq!(first.len(), last.len());
    for (unit, ids) in &first {
        let mut reversed = ids.clone();
        reversed.reverse();
        assert_eq!(&last[unit], &reversed, "{unit:?}");
    }
    let prefix = |k: usize| first[&("replay-mini-000".to_owned(), k, "bm25".to_owned())].clone();
    assert_eq!(prefix(5)[..3], prefix(3)[..]);
}

#[test]
fn replay_only_fails_on_a_cache_miss() {
    let out = tempfile::tempdir().unwrap();
    let experiment = Experiment::open(replay_config(out.path()), ClientChoice::ReplayOnly).unwrap();
    match experiment.run_eval(Split::Validation, &[Mechanism::Bm25], 1) {
        Err(Error::ModelFailure { source, .. }) => assert!(matches!(*source, Error::ReplayMiss { .. })),
        other => panic!("expected a replay miss, got {:?}", other.map(|r| r.rows)),
    }
}

#[test]
fn splits_must_not_share_ids_and_k_must_fit() {
    let out = tempfile::tempdir().unwrap();
    let config = replay_config(out.path());
    let corpus = rener::harness::load_corpus(&config).unwrap();
    let validation = corpus.validation.clone().unwrap();
    let overlapping = Dataset::new("copy", validation.label_set().clone(), validation.examples().to_vec()).unwrap();
    assert!(Corpus::new(overlapping, Some(validation), None).is_err());

    let mut too_big = config.clone();
    too_big.experiment.k_max = 31;
    assert!(Experiment::open(too_big, ClientChoice::FromConfig).is_err());
    let experiment = Experiment::open(config, ClientChoice::FromConfig).unwrap();
    assert!(matches!(
        experiment.run_eval(Split::Validation, &[Mechanism::Bm25], 31),
        Err(Error::KExceedsDataset { k: 31, n: 30 })
    ));
    assert!(experiment.run_eval(Split::Test, &[Mechanism::Bm25], 1).is_err());
}
