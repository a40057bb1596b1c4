//! Prompt rendering, model invocation and output parsing.

mod parser;
mod template;

use crate::corpus::{Example, LabelSet};
use crate::error::{Error, Result};
use crate::modelclient::{digest, CompletionClient, CompletionRequest, Decoding};

pub use parser::{parse_output, DiscardReason, Discarded, ParsedOutput};
pub use template::{render_prompt, PromptTemplate};

/// Everything produced while recognizing one input.
#[derive(Debug, Clone)]
pub struct Recognition {
    pub prompt: String,
    pub response: String,
    pub parsed: ParsedOutput,
}

/// Model identity and decoding settings shared by every call of a run.
#[derive(Clone, Copy)]
pub struct Recognizer<'a> {
    pub client: &'a CompletionClient,
    pub template: &'a PromptTemplate,
    pub model: &'a str,
    pub decoding: Decoding,
}

impl Recognizer<'_> {
    /// Renders the prompt, queries the model and parses its answer.
    ///
    /// A model failure is reported as [`Error::ModelFailure`] carrying the
    /// prompt digest so the call can be located in the cache.
    pub fn recognize(&self, label_set: &LabelSet, examples: &[&Example], input_text: &str) -> Result<Recognition> {
        let prompt = self.template.render(label_set, examples, input_text)?;
        let request = CompletionRequest::new(self.model, prompt.as_str(), self.decoding)?;
        let response = self.client.complete(&request).map_err(|e| Error::ModelFailure {
            prompt_hash: digest(&prompt),
            source: Box::new(e),
        })?;
        let parsed = parse_output(&response, input_text, label_set);
        Ok(Recognition {
            prompt,
            response,
            parsed,
        })
    }
}

/// One-shot form of [`Recognizer::recognize`].
pub fn recognize(
    client: &CompletionClient,
    template: &PromptTemplate,
    model: &str,
    decoding: Decoding,
    label_set: &LabelSet,
    examples: &[&Example],
    input_text: &str,
) -> Result<Recognition> {
    Recognizer {
        client,
        template,
        model,
        decoding,
    }
    .recognize(label_set, examples, input_text)
}
