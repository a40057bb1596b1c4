//! Deterministic completion backends for tests and offline runs.

use std::collections::HashMap;

use super::{digest, Completion, CompletionBackend, CompletionRequest};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::recognition::PromptTemplate;

/// Answers every prompt with the gold answer block of the input it asks
/// about. Inputs are recovered from the prompt through the template.
pub struct GoldEchoBackend {
    template: PromptTemplate,
    answers: HashMap<String, String>,
}

impl GoldEchoBackend {
    /// When several examples share a text, the first one's answer is used.
    pub fn new<'a>(template: PromptTemplate, datasets: impl IntoIterator<Item = &'a Dataset>) -> Self {
        let mut answers = HashMap::new();
        for dataset in datasets {
            for example in dataset.examples() {
                answers
                    .entry(example.text().to_owned())
                    .or_insert_with(|| template.render_answer(example.entities()));
            }
        }
        Self { template, answers }
    }
}

impl CompletionBackend for GoldEchoBackend {
    fn provider(&self) -> String {
        "gold-echo".into()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let input = self
            .template
            .input_text(request.prompt())
            .ok_or_else(|| Error::provider("gold-echo: prompt does not follow the template", false))?;
        self.answers
            .get(input)
            .map(|a| Completion::from(a.as_str()))
            .ok_or_else(|| Error::provider(format!("gold-echo: unknown input {input:?}"), false))
    }
}

/// Always answers with the empty string.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyBackend;

impl CompletionBackend for EmptyBackend {
    fn provider(&self) -> String {
        "empty".into()
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<Completion> {
        Ok(Completion::default())
    }
}

/// Canned responses looked up by prompt digest, then by input text.
pub struct ScriptedBackend {
    name: String,
    template: PromptTemplate,
    by_prompt: HashMap<String, String>,
    by_input: HashMap<String, String>,
    fallback: Option<String>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            template: PromptTemplate::default(),
            by_prompt: HashMap::new(),
            by_input: HashMap::new(),
            fallback: None,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    /// Responds with `response` to the prompt whose SHA-256 hex digest is
    /// `prompt_digest`.
    pub fn on_prompt_digest(mut self, prompt_digest: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_prompt.insert(prompt_digest.into(), response.into());
        self
    }

    /// Responds with `response` to any prompt asking about `input`.
    pub fn on_input(mut self, input: impl Into<String>, response: impl Into<String>) -> Self {
        self.by_input.insert(input.into(), response.into());
        self
    }

    pub fn otherwise(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }
}

impl CompletionBackend for ScriptedBackend {
    fn provider(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let by_digest = self.by_prompt.get(&digest(request.prompt()));
        let by_input = || {
            self.template
                .input_text(request.prompt())
                .and_then(|input| self.by_input.get(input))
        };
        by_digest
            .or_else(by_input)
            .or(self.fallback.as_ref())
            .map(|r| Completion::from(r.as_str()))
            .ok_or_else(|| Error::provider(format!("{}: no scripted response", self.name), false))
    }
}

type Respond = dyn Fn(&CompletionRequest) -> Result<String> + Send + Sync;

/// Wraps a closure as a backend.
pub struct FnBackend {
    name: String,
    respond: Box<Respond>,
}

impl FnBackend {
    pub fn new<F>(name: impl Into<String>, respond: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            respond: Box::new(respond),
        }
    }
}

impl CompletionBackend for FnBackend {
    fn provider(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        (self.respond)(request).map(|text| Completion { text, usage: None })
    }
}
