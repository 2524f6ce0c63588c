//! Chat-completion client and the language-model-backed coverage mapper.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{PromptSet, PromptTemplate};
use super::records::{parse_assignments, parse_numbered, render_numbered};
use super::{ChatBackend, ChatRequest, LlmError};
use crate::coverage::{CoverageMapper, Functionality};
use crate::domain::{Query, Tool, ToolId};

pub const ENV_URL: &str = "TOOLREC_LLM_URL";
pub const ENV_API_KEY: &str = "TOOLREC_LLM_API_KEY";
pub const ENV_MODEL: &str = "TOOLREC_LLM_MODEL";

const DEFAULT_URL: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    #[serde(skip)]
    pub api_key: String,
    pub model: String,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }

    /// Reads `TOOLREC_LLM_URL`, `TOOLREC_LLM_API_KEY` and `TOOLREC_LLM_MODEL`.
    /// Only the key is required.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(LlmError::MissingEnv(ENV_API_KEY))?;
        let url = std::env::var(ENV_URL).unwrap_or_else(|_| DEFAULT_URL.to_string());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(EndpointConfig::new(url, key, model))
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub requests: u64,
    pub retries: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Blocking HTTP client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpChat {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    permits: Permits,
    next_id: AtomicU64,
    usage: Mutex<Usage>,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct TokenUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fail(LlmError),
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 300;
    match body.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

impl HttpChat {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let permits = Permits {
            available: Mutex::new(config.max_in_flight.max(1)),
            freed: Condvar::new(),
        };
        Ok(HttpChat {
            config,
            client,
            permits,
            next_id: AtomicU64::new(1),
            usage: Mutex::new(Usage::default()),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().unwrap()
    }

    fn attempt(&self, body: &serde_json::Value, request_id: &str) -> Attempt {
        let response = self
            .client
            .post(self.config.completions_url())
            .bearer_auth(&self.config.api_key)
            .header("x-request-id", request_id)
            .json(body)
            .send();
        let response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        if let Some(echo) = response.headers().get("x-request-id") {
            if echo.as_bytes() != request_id.as_bytes() {
                return Attempt::Fail(LlmError::Protocol(format!(
                    "response correlation id {:?} does not match request {request_id}",
                    echo
                )));
            }
        }
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        if !status.is_success() {
            let err = LlmError::Status {
                status: status.as_u16(),
                body: excerpt(&text),
            };
            return if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        let parsed: CompletionBody = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fail(LlmError::Protocol(format!("{e}: {}", excerpt(&text)))),
        };
        let Some(content) = parsed.choices.into_iter().next().and_then(|c| c.message.content) else {
            return Attempt::Fail(LlmError::Protocol("no message content in reply".into()));
        };
        if let Some(u) = parsed.usage {
            let mut usage = self.usage.lock().unwrap();
            usage.prompt_tokens += u.prompt_tokens;
            usage.completion_tokens += u.completion_tokens;
        }
        Attempt::Done(content)
    }

    /// Sends one request, retrying transport failures, 5xx and 429 replies
    /// with exponential backoff.
    pub fn complete_request(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let request_id = format!("toolrec-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let _permit = self.permits.acquire();
        self.usage.lock().unwrap().requests += 1;

        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(&body, &request_id) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => return Err(e),
                Attempt::Retry(e) => {
                    attempt += 1;
                    self.usage.lock().unwrap().retries += 1;
                    warn!("{request_id}: attempt {attempt} failed ({e}); retrying in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                }
            }
        }
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.complete_request(request)
    }
}

pub fn remote_complete(request: &ChatRequest, client: &HttpChat) -> Result<String, LlmError> {
    client.complete_request(request)
}

/// Serves replies from a recorded transcript keyed by the exact user prompt.
///
/// Transcript files hold one JSON object per line:
/// `{"user_prompt": "...", "response": "..."}`.
#[derive(Debug, Clone, Default)]
pub struct ReplayChat {
    replies: HashMap<String, String>,
}

#[derive(Deserialize)]
struct TranscriptEntry {
    user_prompt: String,
    response: String,
}

impl ReplayChat {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut replies = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry =
                serde_json::from_str(line).map_err(|err| LlmError::Replay(format!("line {}: {err}", i + 1)))?;
            replies.insert(e.user_prompt, e.response);
        }
        Ok(ReplayChat { replies })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Replay(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

impl ChatBackend for ReplayChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.replies
            .get(&request.user_prompt)
            .cloned()
            .ok_or_else(|| LlmError::Replay("no recorded reply for this prompt".into()))
    }
}

/// Coverage mapper that prompts a chat model and parses its line records.
///
/// A reply that fails to parse is re-asked once with the parse error
/// appended; a second failure is returned to the caller, whose fallbacks
/// then apply.
pub struct RemoteMapper<B> {
    backend: B,
    prompts: PromptSet,
    model: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl<B: ChatBackend> RemoteMapper<B> {
    pub fn new(backend: B, prompts: PromptSet, model: impl Into<String>) -> Self {
        RemoteMapper {
            backend,
            prompts,
            model: model.into(),
            temperature: 0.0,
            max_tokens: 512,
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn ask<T>(
        &self,
        template: &PromptTemplate,
        vars: BTreeMap<&str, String>,
        parse: impl Fn(&str) -> Result<T, LlmError>,
    ) -> Result<T, LlmError> {
        let mut request = ChatRequest {
            model_name: self.model.clone(),
            system_prompt: self.prompts.system.clone(),
            user_prompt: template.render(&vars),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let reply = self.backend.complete(&request)?;
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(first) => {
                debug!("re-asking after unparseable reply: {first}");
                request.user_prompt = format!(
                    "{}\n\nYour previous reply could not be parsed ({first}). Reply again using exactly the required format.",
                    request.user_prompt
                );
                let reply = self.backend.complete(&request)?;
                parse(&reply)
            }
        }
    }
}

fn numbered_functionalities(fs: &[Functionality]) -> String {
    render_numbered(&fs.iter().map(|f| f.text.as_str()).collect::<Vec<_>>())
        .trim_end()
        .to_string()
}

impl<B: ChatBackend> CoverageMapper for RemoteMapper<B> {
    fn extract(&self, query: &Query) -> Result<Vec<String>, LlmError> {
        let vars = BTreeMap::from([("query", query.text().to_string())]);
        self.ask(&self.prompts.extract, vars, parse_numbered)
    }

    fn match_tools(&self, functionalities: &[Functionality], tools: &[Tool]) -> Result<Vec<(usize, ToolId)>, LlmError> {
        // The prompt numbers functionalities 1..m; map back to their indices.
        let catalog = tools
            .iter()
            .map(|t| format!("{}: {} - {}", t.id, t.name, t.description))
            .collect::<Vec<_>>()
            .join("\n");
        let vars = BTreeMap::from([
            ("functionalities", numbered_functionalities(functionalities)),
            ("tool_catalog", catalog),
        ]);
        let pairs = self.ask(&self.prompts.matching, vars, parse_assignments)?;
        Ok(pairs
            .into_iter()
            .filter_map(|(n, tool)| {
                let f = functionalities.get(n.checked_sub(1)?)?;
                Some((f.index, ToolId::new(tool).ok()?))
            })
            .collect())
    }

    fn restate(&self, query: &Query, unmet: &[Functionality]) -> Result<Vec<String>, LlmError> {
        let vars = BTreeMap::from([
            ("query", query.text().to_string()),
            ("functionalities", numbered_functionalities(unmet)),
        ]);
        self.ask(&self.prompts.restate, vars, parse_numbered)
    }
}
