//! Rendering of the shared debate history into the message list an agent
//! sees. Every agent gets full visibility: the complete chronological history
//! including judge utterances, with each entry attributed as the viewer's own
//! turn or labeled with the speaker's role name.

use thiserror::Error;

use crate::prompts::{JudgeMode, PromptError, PromptKit};
use crate::transcript::Transcript;
use crate::types::{AgentRole, DebateConfig, TopicRecord};

/// Who a rendered message is attributed to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpeakerTag {
    /// The system-level entry carrying meta prompt plus role prompt.
    System,
    /// Spoken by the viewing agent itself.
    Viewer,
    /// Spoken by another agent; carries the human-readable role label.
    Other(String),
    /// A protocol instruction injected by the orchestrator (judge queries,
    /// baseline prompts).
    Instruction,
}

/// One entry of a rendered context.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub speaker: SpeakerTag,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            speaker: SpeakerTag::System,
            content: content.into(),
        }
    }

    pub fn viewer(content: impl Into<String>) -> Self {
        Self {
            speaker: SpeakerTag::Viewer,
            content: content.into(),
        }
    }

    pub fn other(label: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            speaker: SpeakerTag::Other(label.into()),
            content: content.into(),
        }
    }

    pub fn instruction(content: impl Into<String>) -> Self {
        Self {
            speaker: SpeakerTag::Instruction,
            content: content.into(),
        }
    }
}

pub type MessageList = Vec<Message>;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("role '{0}' is not bound in the debate config")]
    UnknownRole(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Renders what `viewer` sees: one system entry (meta prompt plus the
/// viewer's role prompt), then the full shared history in order. Pure
/// function of its inputs.
pub fn render_context(
    transcript: &Transcript,
    viewer: AgentRole,
    config: &DebateConfig,
    topic: &TopicRecord,
    kit: &PromptKit,
) -> Result<MessageList, ContextError> {
    let key = viewer.binding_key();
    let bound = config.backend_bindings.contains_key(&key)
        && viewer.side_index().is_none_or(|s| s >= 1 && s <= config.n_debaters);
    if !bound {
        return Err(ContextError::UnknownRole(key));
    }

    let system = match viewer {
        AgentRole::Debater { .. } => format!(
            "{}\n\n{}",
            kit.build_meta_prompt(topic, config)?,
            kit.build_debater_prompt(viewer)?
        ),
        // The judge keeps the moderator preamble instead of the debater
        // greeting; the topic is restated so the judge sees it directly.
        AgentRole::Judge => format!(
            "{}\n\nThe debate topic is stated as follows: {}",
            kit.build_judge_prompt(JudgeMode::System)?,
            topic.topic_text
        ),
    };

    let mut messages = Vec::with_capacity(transcript.len() + 1);
    messages.push(Message::system(system));
    for u in &transcript.utterances {
        if u.role == viewer {
            messages.push(Message::viewer(u.text.clone()));
        } else {
            messages.push(Message::other(u.role.label(), u.text.clone()));
        }
    }
    Ok(messages)
}
