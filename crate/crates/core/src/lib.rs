//! Backend-agnostic engine for judge-moderated multi-agent debates.
//!
//! The crate is organized around the protocol pipeline:
//!
//! - [`types`]: shared domain types (topics, roles, configs, decisions).
//! - [`transcript`]: ordered debate history, validation, JSONL persistence.
//! - [`context`]: rendering the shared history into per-agent message lists.
//! - [`prompts`]: every prompt string in the protocol, with template overrides.
//! - [`agents`]: scripted, replay and HTTP chat-completion backends.
//! - [`orchestrator`]: the debate loop with adaptive break, plus the
//!   chain-of-thought, self-reflection and self-consistency baselines.
//! - [`metrics`]: disagreement curves, Self-BLEU diversity, winner counts,
//!   token-cost ratios, accuracy.
//! - [`harness`]: datasets, answer normalization, batch execution with
//!   resume, report generation.

pub mod agents;
pub mod context;
pub mod harness;
pub mod metrics;
pub mod orchestrator;
pub mod prompts;
pub mod transcript;
pub mod types;

pub use agents::{
    estimate_tokens, Backend, BackendError, BackendSpec, Completion, HttpBackend, ReplayBackend,
    RoleBackends, ScriptEntry, ScriptedBackend,
};
pub use context::{render_context, ContextError, Message, MessageList, SpeakerTag};
pub use harness::{
    load_mt_dataset, load_qa_dataset, normalize_answer, run_experiment, BatchSummary,
    ExperimentManifest, HarnessError, ResultRecord,
};
pub use metrics::{
    classify_mt_output, debater_stances, disagreement_curve, disagreement_curve_from_sequences,
    diversity, qa_accuracy, self_bleu, token_cost_ratio, winner_counts, MetricsError,
    MetricsReport, MtLabel, WinnerCounts,
};
pub use orchestrator::{
    extract_at_iteration, parse_judge_decision, run_cot, run_debate, run_self_consistency,
    run_self_reflection, DebateError, DebateOutcome, ParseMode,
};
pub use prompts::{BaselinePrompt, JudgeMode, PromptError, PromptKit, PromptTemplate};
pub use transcript::{Transcript, TranscriptError, Utterance, Violation};
pub use types::{
    AgentRole, DebateConfig, JudgeDecision, Method, PreferredSide, RunResult, TaskKind,
    TopicRecord,
};
