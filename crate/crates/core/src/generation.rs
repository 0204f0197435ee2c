//! Answer generation from retrieved chunks, scored by query/answer cosine.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::distance::cosine_similarity;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::http::{self, RetryPolicy};

pub const API_KEY_ENV: &str = "GEN_API_KEY";

pub const DEFAULT_TEMPLATE: &str = "Answer the question using only the context below.\n\n\
Context:\n{chunks}\n\nQuestion: {query}\nAnswer:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub endpoint: String,
    pub model_id: String,
    pub prompt_template: String,
    /// Attempts per request, including the first.
    pub max_retries: u32,
    pub top_k_context: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Extra request fields (temperature and the like), sent as-is.
    pub options: serde_json::Map<String, serde_json::Value>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_id: String::new(),
            prompt_template: DEFAULT_TEMPLATE.to_string(),
            max_retries: 3,
            top_k_context: 5,
            max_in_flight: 2,
            timeout_secs: 120,
            options: serde_json::Map::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        for slot in ["{query}", "{chunks}"] {
            if !self.prompt_template.contains(slot) {
                return Err(Error::Config(format!("prompt_template lacks the {slot} slot")));
            }
        }
        if self.top_k_context < 1 {
            return Err(Error::Config("top_k_context must be >= 1".into()));
        }
        if self.max_in_flight < 1 {
            return Err(Error::Config("max_in_flight must be >= 1".into()));
        }
        if self.endpoint.is_empty() || self.model_id.is_empty() {
            return Err(Error::Config("generation endpoint and model_id are required".into()));
        }
        for key in ["model", "prompt"] {
            if self.options.contains_key(key) {
                return Err(Error::Config(format!("options may not override {key:?}")));
            }
        }
        Ok(())
    }
}

/// Fills `{query}` and `{chunks}` in one left-to-right pass, so slot-like
/// text inside the substituted values is left alone.
pub fn render_prompt(template: &str, query: &str, chunks: &[&str]) -> String {
    let joined = chunks.join("\n\n");
    let mut out = String::with_capacity(template.len() + query.len() + joined.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix("{query}") {
            out.push_str(query);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{chunks}") {
            out.push_str(&joined);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    #[serde(flatten)]
    options: &'a serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

pub struct Generator {
    config: GenerationConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl Generator {
    pub fn new(config: GenerationConfig) -> Result<Self> {
        let retry = RetryPolicy {
            attempts: config.max_retries.max(1),
            ..RetryPolicy::default()
        };
        Self::with_retry(config, retry)
    }

    pub fn with_retry(config: GenerationConfig, retry: RetryPolicy) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            agent: http::agent(Duration::from_secs(config.timeout_secs)),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            config,
            retry,
        })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    /// Sends one prompt built from `chunks` (in retrieval order) and
    /// returns the completion verbatim.
    pub fn generate_answer(&self, query_id: &str, query: &str, chunks: &[&str]) -> Result<String> {
        if chunks.is_empty() || chunks.len() > self.config.top_k_context {
            return Err(Error::Parameter(format!(
                "query {query_id}: expected 1..={} context chunks, got {}",
                self.config.top_k_context,
                chunks.len()
            )));
        }
        let prompt = render_prompt(&self.config.prompt_template, query, chunks);
        let body = GenerateRequest {
            model: &self.config.model_id,
            prompt: &prompt,
            options: &self.config.options,
        };
        http::post_json::<_, GenerateResponse>(
            &self.agent,
            &self.config.endpoint,
            self.api_key.as_deref(),
            &body,
            self.retry,
        )
        .map(|r| r.text)
        .map_err(|e| Error::Generation {
            query_id: query_id.to_string(),
            message: e.to_string(),
        })
    }
}

/// Cosine similarity of the two texts' embeddings, unclipped.
pub fn qa_similarity(query: &str, answer: &str, embedder: &Embedder) -> Result<f64> {
    if query.trim().is_empty() || answer.trim().is_empty() {
        return Err(Error::Parameter("qa_similarity needs non-empty texts".into()));
    }
    let v = embedder.embed_batch(&[query, answer])?;
    cosine_similarity(&v[0], &v[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub query_id: String,
    pub answer: String,
    pub qa_similarity: f64,
}

#[derive(Debug, Clone)]
pub struct GenerationInput {
    pub query_id: String,
    pub query: String,
    pub chunks: Vec<String>,
}

/// Generates and scores every input with at most `max_in_flight` requests
/// outstanding. Results come back sorted by query_id.
pub fn generate_all(
    generator: &Generator,
    embedder: &Embedder,
    inputs: &[GenerationInput],
) -> Vec<(String, Result<AnswerRecord>)> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(inputs.len()));
    let workers = generator.config.max_in_flight.min(inputs.len()).max(1);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let chunks: Vec<&str> = input.chunks.iter().map(String::as_str).collect();
                let outcome = generator
                    .generate_answer(&input.query_id, &input.query, &chunks)
                    .and_then(|answer| {
                        let qa = qa_similarity(&input.query, &answer, embedder)?;
                        Ok(AnswerRecord {
                            query_id: input.query_id.clone(),
                            answer,
                            qa_similarity: qa,
                        })
                    });
                results.lock().unwrap().push((input.query_id.clone(), outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    results
}
