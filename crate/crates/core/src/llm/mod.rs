//! Coverage mappers backed by a language model or by a deterministic rule table.

pub mod mock;
pub mod prompt;
pub mod records;
pub mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockRuleTable, RuleMockMapper};
pub use prompt::{PromptSet, PromptStage, PromptTemplate};
pub use records::{parse_structured, Records, Schema};
pub use remote::{remote_complete, EndpointConfig, HttpChat, RemoteMapper, ReplayChat, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),

    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed reply at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unexpected response body: {0}")]
    Protocol(String),

    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),

    #[error("prompt template: {0}")]
    Template(String),

    #[error("rule table line {line}: {reason}")]
    Rules { line: usize, reason: String },

    #[error("replay transcript: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(LlmError::Template("empty prompt".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::Template(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Template("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that turns a chat request into reply text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self(request)
    }
}
