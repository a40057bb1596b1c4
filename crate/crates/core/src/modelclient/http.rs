//! HTTP completion and embedding providers.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Completion, CompletionBackend, CompletionRequest, EmbeddingProvider, RetryPolicy};
use crate::error::{Error, Result};
use crate::retrieval::Embedding;

const EXCERPT_CHARS: usize = 200;

/// Request and response shape spoken by a provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HttpAdapter {
    /// `POST {endpoint}` with an OpenAI-style chat completions body.
    OpenaiChat,
    /// `POST {endpoint}/models/{model}:generateContent`.
    Gemini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSettings {
    pub adapter: HttpAdapter,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Name recorded in cache keys. Defaults to the adapter name.
    #[serde(default)]
    pub provider: Option<String>,
}

fn default_timeout_secs() -> u64 {
    120
}

impl HttpSettings {
    pub(crate) fn provider_name(&self) -> String {
        self.provider.clone().unwrap_or_else(|| match self.adapter {
            HttpAdapter::OpenaiChat => "openai".into(),
            HttpAdapter::Gemini => "gemini".into(),
        })
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
        }
    }
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(EXCERPT_CHARS).collect();
    if body.chars().count() > EXCERPT_CHARS {
        s.push('…');
    }
    s
}

fn client(timeout_secs: u64) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| Error::provider(format!("building HTTP client: {e}"), false))
}

/// Sends `body` and returns the parsed JSON payload. Transport errors, 429
/// and 5xx are retriable.
fn post_json(request: reqwest::blocking::RequestBuilder, body: &Value) -> Result<Value> {
    let response = request
        .json(body)
        .send()
        .map_err(|e| Error::provider(format!("transport: {e}"), true))?;
    let status = response.status();
    let text = response
        .text()
        .map_err(|e| Error::provider(format!("reading response: {e}"), true))?;
    if !status.is_success() {
        let retriable = status.as_u16() == 429 || status.is_server_error();
        return Err(Error::provider(format!("HTTP {status}: {}", excerpt(&text)), retriable));
    }
    serde_json::from_str(&text).map_err(|e| Error::provider(format!("malformed payload ({e}): {}", excerpt(&text)), false))
}

fn malformed(what: &str, payload: &Value) -> Error {
    Error::provider(format!("malformed payload, {what}: {}", excerpt(&payload.to_string())), false)
}

pub struct HttpCompletionBackend {
    settings: HttpSettings,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpCompletionBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(settings: HttpSettings) -> Result<Self> {
        let api_key = settings.api_key()?;
        let client = client(settings.timeout_secs)?;
        Ok(Self {
            settings,
            api_key,
            client,
        })
    }

    fn openai(&self, request: &CompletionRequest) -> Result<Completion> {
        let body = json!({
            "model": request.model(),
            "messages": [{"role": "user", "content": request.prompt()}],
            "temperature": request.decoding().temperature,
            "max_tokens": request.decoding().max_output_tokens,
        });
        let mut builder = self.client.post(&self.settings.endpoint);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let payload = post_json(builder, &body)?;
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("no choices[0].message.content", &payload))?;
        Ok(Completion {
            text: text.to_owned(),
            usage: payload.get("usage").cloned(),
        })
    }

    fn gemini(&self, request: &CompletionRequest) -> Result<Completion> {
        let body = json!({
            "contents": [{"role": "user", "parts": [{"text": request.prompt()}]}],
            "generationConfig": {
                "temperature": request.decoding().temperature,
                "maxOutputTokens": request.decoding().max_output_tokens,
            },
        });
        let url = format!(
            "{}/models/{}:generateContent",
            self.settings.endpoint.trim_end_matches('/'),
            request.model()
        );
        let mut builder = self.client.post(url);
        if let Some(key) = &self.api_key {
            builder = builder.header("x-goog-api-key", key);
        }
        let payload = post_json(builder, &body)?;
        let parts = payload
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("no candidates[0].content.parts", &payload))?;
        let text = parts
            .iter()
            .map(|p| p.get("text").and_then(Value::as_str).ok_or_else(|| malformed("part without text", &payload)))
            .collect::<Result<String>>()?;
        Ok(Completion {
            text,
            usage: payload.get("usageMetadata").cloned(),
        })
    }
}

impl CompletionBackend for HttpCompletionBackend {
    fn provider(&self) -> String {
        self.settings.provider_name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        match self.settings.adapter {
            HttpAdapter::OpenaiChat => self.openai(request),
            HttpAdapter::Gemini => self.gemini(request),
        }
    }
}

/// Embeddings over an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key_env: Option<&str>, retry: RetryPolicy) -> Result<Self> {
        let api_key = match api_key_env {
            None => None,
            Some(var) => {
                Some(std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?)
            }
        };
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client: client(default_timeout_secs())?,
            retry,
        })
    }

    fn embed_once(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let mut builder = self.client.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let payload = post_json(builder, &json!({"model": self.model, "input": texts}))?;
        let data = payload
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("no data array", &payload))?;
        if data.len() != texts.len() {
            return Err(malformed(&format!("expected {} embeddings, got {}", texts.len(), data.len()), &payload));
        }
        let mut slots: Vec<Option<Embedding>> = vec![None; texts.len()];
        for (position, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map_or(position, |i| i as usize);
            let vector: Vec<f64> = item
                .get("embedding")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| malformed("item without numeric embedding", &payload))?;
            let slot = slots
                .get_mut(index)
                .ok_or_else(|| malformed("embedding index out of range", &payload))?;
            *slot = Some(Embedding::new(vector)?);
        }
        slots
            .into_iter()
            .map(|s| s.ok_or_else(|| malformed("missing embedding index", &payload)))
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn descriptor(&self) -> String {
        format!("http:{}", self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let mut attempt = 0;
        loop {
            match self.embed_once(texts) {
                Err(e) if e.is_retriable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.delay(attempt);
                    log::warn!("embeddings: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelclient::{CompletionClient, Decoding};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves the canned `(status, body)` replies in order, one per
    /// connection, and records each request body.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut request = vec![0; length];
                reader.read_exact(&mut request).unwrap();
                log.lock().unwrap().push(String::from_utf8(request).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                reader.get_mut().write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, seen)
    }

    fn settings(adapter: HttpAdapter, endpoint: String) -> HttpSettings {
        HttpSettings {
            adapter,
            endpoint,
            api_key_env: None,
            timeout_secs: 5,
            provider: None,
        }
    }

    fn request() -> CompletionRequest {
        CompletionRequest::new("gpt-test", "Example 1: Rome\nAnswer:", Decoding::default()).unwrap()
    }

    #[test]
    fn openai_shape_round_trip() {
        let body = r#"{"choices":[{"message":{"content":"1. Rome (location)"}}],"usage":{"total_tokens":9}}"#;
        let (url, seen) = serve(vec![(200, body.into())]);
        let backend = HttpCompletionBackend::new(settings(HttpAdapter::OpenaiChat, url)).unwrap();
        let done = backend.complete(&request()).unwrap();
        assert_eq!(done.text, "1. Rome (location)");
        assert_eq!(done.usage.unwrap()["total_tokens"], 9);
        let sent: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["model"], "gpt-test");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["content"], "Example 1: Rome\nAnswer:");
    }

    #[test]
    fn gemini_shape_round_trip() {
        let body = r#"{"candidates":[{"content":{"parts":[{"text":"1. Rome "},{"text":"(location)"}]}}]}"#;
        let (url, seen) = serve(vec![(200, body.into())]);
        let backend = HttpCompletionBackend::new(settings(HttpAdapter::Gemini, url)).unwrap();
        assert_eq!(backend.provider(), "gemini");
        assert_eq!(backend.complete(&request()).unwrap().text, "1. Rome (location)");
        let sent: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["generationConfig"]["maxOutputTokens"], 512);
    }

    #[test]
    fn server_errors_are_retried_and_malformed_payloads_reported() {
        let ok = r#"{"choices":[{"message":{"content":"fine"}}]}"#;
        let (url, _) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, ok.into())]);
        let backend = Arc::new(HttpCompletionBackend::new(settings(HttpAdapter::OpenaiChat, url)).unwrap());
        let client = CompletionClient::new(backend, "t").with_retry(RetryPolicy {
            max_retries: 3,
            base_delay_ms: 1,
            max_delay_ms: 2,
        });
        assert_eq!(client.complete(&request()).unwrap(), "fine");
        assert_eq!(client.stats().backend_calls, 3);

        let (url, _) = serve(vec![(200, r#"{"unexpected":true}"#.into())]);
        let backend = HttpCompletionBackend::new(settings(HttpAdapter::OpenaiChat, url)).unwrap();
        let err = backend.complete(&request()).unwrap_err();
        assert!(!err.is_retriable());
        assert!(err.to_string().contains("unexpected"), "{err}");

        let (url, _) = serve(vec![(400, "bad request".into())]);
        let backend = HttpCompletionBackend::new(settings(HttpAdapter::OpenaiChat, url)).unwrap();
        let err = backend.complete(&request()).unwrap_err();
        assert!(!err.is_retriable() && err.to_string().contains("bad request"));
    }

    #[test]
    fn embeddings_are_returned_in_input_order() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let (url, _) = serve(vec![(200, body.into())]);
        let provider = HttpEmbeddingProvider::new(url, "emb", None, RetryPolicy::default()).unwrap();
        let got = provider.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(got[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(got[1].as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let mut s = settings(HttpAdapter::OpenaiChat, "http://127.0.0.1:9".into());
        s.api_key_env = Some("RENER_TEST_SURELY_UNSET_KEY".into());
        assert!(matches!(HttpCompletionBackend::new(s), Err(Error::Config(_))));
    }
}
