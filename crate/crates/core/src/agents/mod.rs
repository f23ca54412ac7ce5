//! Agent backend abstraction: given a rendered message list and sampling
//! parameters, produce a completion with token usage. Implementations are
//! scripted (deterministic), replay (from stored transcripts), and HTTP
//! chat-completion (live LLMs).

mod http;
mod replay;
mod scripted;

pub use http::HttpBackend;
pub use replay::ReplayBackend;
pub use scripted::ScriptedBackend;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{Message, MessageList, SpeakerTag};
use crate::types::{AgentRole, DebateConfig};

/// One model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub backend_id: String,
    /// Elapsed generation time; deterministic backends report 0.
    pub wall_time_ms: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("scripted backend exhausted: {0}")]
    ScriptExhausted(String),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// How a scripted entry decides whether it answers a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// `"*"` matches anything, `"re:<pattern>"` is a regex, anything else is
    /// a substring test over the rendered messages.
    pub matcher: String,
    pub response: String,
    /// Fixture override; whitespace estimate of the rendered prompt when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u32>,
    /// Fixture override; whitespace estimate of the response when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u32>,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        Self {
            matcher: "*".to_string(),
            response: response.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn substring(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            response: response.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn with_tokens(mut self, prompt: u32, completion: u32) -> Self {
        self.prompt_tokens = Some(prompt);
        self.completion_tokens = Some(completion);
        self
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    250
}

/// Declarative description of a backend; instantiated per role via
/// [`build_backend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Scripted {
        script: Vec<ScriptEntry>,
    },
    Replay {
        replay_path: String,
    },
    Http {
        base_url: String,
        model_name: String,
        /// Overrides the MAD_API_KEY environment variable when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_backoff_base_ms")]
        backoff_base_ms: u64,
        /// Cap on in-flight requests through this backend instance.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_concurrent: Option<u32>,
        /// Minimum spacing between requests, shared across callers.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_interval_ms: Option<u64>,
    },
}

impl BackendSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendSpec::Scripted { script } => {
                if script.is_empty() {
                    return Err(BackendError::InvalidSpec(
                        "scripted backend requires a non-empty script".to_string(),
                    ));
                }
            }
            BackendSpec::Replay { replay_path } => {
                if replay_path.is_empty() {
                    return Err(BackendError::InvalidSpec(
                        "replay backend requires replay_path".to_string(),
                    ));
                }
            }
            BackendSpec::Http {
                base_url,
                model_name,
                ..
            } => {
                if base_url.is_empty() || model_name.is_empty() {
                    return Err(BackendError::InvalidSpec(
                        "http backend requires base_url and model_name".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A backend callable from multiple concurrent debates.
pub trait Backend: Send + Sync {
    fn generate(&self, messages: &MessageList, temperature: f64)
        -> Result<Completion, BackendError>;
}

/// Instantiates the backend a role is bound to. Scripted and replay backends
/// are stateful (cursor), so callers wanting reproducible runs should build a
/// fresh instance per run.
pub fn build_backend(spec: &BackendSpec, role: AgentRole) -> Result<Arc<dyn Backend>, BackendError> {
    spec.validate()?;
    match spec {
        BackendSpec::Scripted { script } => Ok(Arc::new(ScriptedBackend::new(script.clone())?)),
        BackendSpec::Replay { replay_path } => Ok(Arc::new(ReplayBackend::from_path(
            std::path::Path::new(replay_path),
            role,
        )?)),
        BackendSpec::Http { .. } => Ok(Arc::new(HttpBackend::from_spec(spec)?)),
    }
}

/// Count of maximal non-whitespace runs; the fallback token estimate when a
/// backend reports no usage.
pub fn estimate_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

/// Flattens a message list into the text scripted matchers run against.
pub fn match_text(messages: &MessageList) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

/// Projects a rendered message list onto chat-completion roles: the system
/// entry maps to "system", the viewer's own turns map to "assistant", and
/// everything else maps to "user" with the speaker label prefixed.
pub fn to_chat_messages(messages: &[Message]) -> Vec<(String, String)> {
    messages
        .iter()
        .map(|m| match &m.speaker {
            SpeakerTag::System => ("system".to_string(), m.content.clone()),
            SpeakerTag::Viewer => ("assistant".to_string(), m.content.clone()),
            SpeakerTag::Other(label) => {
                ("user".to_string(), format!("{}: {}", label, m.content))
            }
            SpeakerTag::Instruction => ("user".to_string(), m.content.clone()),
        })
        .collect()
}

/// The instantiated backends for one debate run.
pub struct RoleBackends {
    debaters: Vec<Arc<dyn Backend>>,
    judge: Option<Arc<dyn Backend>>,
}

impl RoleBackends {
    /// Builds one backend per bound role. `judge` stays unset for
    /// baseline-only configs.
    pub fn from_config(config: &DebateConfig) -> Result<Self, BackendError> {
        let mut debaters = Vec::new();
        for side in 1..=config.n_debaters {
            let role = AgentRole::debater(side);
            match config.backend_bindings.get(&role.binding_key()) {
                Some(spec) => debaters.push(build_backend(spec, role)?),
                None if side == 1 => {
                    return Err(BackendError::InvalidSpec(
                        "missing backend binding for role 'side1'".to_string(),
                    ))
                }
                None => break,
            }
        }
        let judge = config
            .backend_bindings
            .get(&AgentRole::Judge.binding_key())
            .map(|spec| build_backend(spec, AgentRole::Judge))
            .transpose()?;
        Ok(Self { debaters, judge })
    }

    /// Assembles a set from already-built backends (used by tests that need
    /// to keep handles for call counting).
    pub fn from_parts(debaters: Vec<Arc<dyn Backend>>, judge: Option<Arc<dyn Backend>>) -> Self {
        Self { debaters, judge }
    }

    pub fn debater(&self, side: u32) -> Result<&Arc<dyn Backend>, BackendError> {
        self.debaters
            .get((side as usize).saturating_sub(1))
            .ok_or_else(|| {
                BackendError::InvalidSpec(format!("no backend bound for side {side}"))
            })
    }

    pub fn judge(&self) -> Result<&Arc<dyn Backend>, BackendError> {
        self.judge
            .as_ref()
            .ok_or_else(|| BackendError::InvalidSpec("no backend bound for judge".to_string()))
    }

    /// The solo agent used by the single-agent baselines: side 1's backend.
    pub fn solo(&self) -> Result<&Arc<dyn Backend>, BackendError> {
        self.debater(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_counts_whitespace_runs() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("a b  c"), 3);
        assert_eq!(estimate_tokens("Let's think step by step"), 5);
        assert_eq!(estimate_tokens("  leading and trailing  "), 3);
    }

    #[test]
    fn chat_projection_maps_speaker_tags() {
        let messages = vec![
            Message::system("meta"),
            Message::other("Affirmative side", "X"),
            Message::viewer("Y"),
            Message::instruction("decide"),
        ];
        let chat = to_chat_messages(&messages);
        assert_eq!(
            chat,
            vec![
                ("system".to_string(), "meta".to_string()),
                ("user".to_string(), "Affirmative side: X".to_string()),
                ("assistant".to_string(), "Y".to_string()),
                ("user".to_string(), "decide".to_string()),
            ]
        );
    }

    #[test]
    fn spec_validation_rules() {
        assert!(BackendSpec::Scripted { script: vec![] }.validate().is_err());
        assert!(BackendSpec::Replay {
            replay_path: String::new()
        }
        .validate()
        .is_err());
        assert!(BackendSpec::Http {
            base_url: String::new(),
            model_name: "m".into(),
            api_key: None,
            timeout_ms: 1000,
            max_retries: 0,
            backoff_base_ms: 1,
            max_concurrent: None,
            min_interval_ms: None,
        }
        .validate()
        .is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = BackendSpec::Scripted {
            script: vec![ScriptEntry::any("hello").with_tokens(10, 5)],
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: BackendSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
