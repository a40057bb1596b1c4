//! Experiment orchestration: configuration, k-sweeps, evaluation and
//! reports.

mod config;
mod report;
mod run;

pub use config::{
    Backend, DataFormat, DataSection, EmbeddingSection, ExampleOrder, ExperimentConfig, ExperimentSection, ModelSection,
    OutputSection, ParameterDefaults, RetrievalSection, StemmingSpec, TagScheme, DEFAULT_QUERY_INSTRUCTION,
    SHIPPED_DEFAULTS,
};
pub use report::{best_rows, BestRow, ExampleRow, Report, ReportKind, ReportRow, Runtime};
pub use run::{
    build_client, embedder_for, load_corpus, retrieval_settings, template_for, ClientChoice, Corpus, Experiment,
    PromptEvent, PromptObserver, Split,
};
