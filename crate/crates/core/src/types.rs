//! Domain types shared by every other module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::BackendSpec;

/// Kind of task a topic belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(alias = "mt")]
    Translation,
    #[default]
    Qa,
}

/// Method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mad,
    SelfReflect,
    Cot,
    SelfConsistency,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mad => "mad",
            Method::SelfReflect => "self_reflect",
            Method::Cot => "cot",
            Method::SelfConsistency => "self_consistency",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mad" => Ok(Method::Mad),
            "self_reflect" | "reflect" => Ok(Method::SelfReflect),
            "cot" => Ok(Method::Cot),
            "self_consistency" | "consistency" => Ok(Method::SelfConsistency),
            other => Err(format!("unknown method: {other}")),
        }
    }
}

/// One task instance: a debate topic plus optional gold/foil answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRecord {
    pub id: String,
    pub task_kind: TaskKind,
    pub topic_text: String,
    #[serde(default)]
    pub correct_answer: Option<String>,
    #[serde(default)]
    pub incorrect_answer: Option<String>,
    #[serde(default)]
    pub correct_explanation: Option<String>,
    #[serde(default)]
    pub incorrect_explanation: Option<String>,
    #[serde(default)]
    pub source_metadata: BTreeMap<String, String>,
}

impl TopicRecord {
    pub fn new(id: impl Into<String>, task_kind: TaskKind, topic_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            task_kind,
            topic_text: topic_text.into(),
            correct_answer: None,
            incorrect_answer: None,
            correct_explanation: None,
            incorrect_explanation: None,
            source_metadata: BTreeMap::new(),
        }
    }
}

/// Role an agent plays in a debate. Debater sides are 1-based; side 1 is the
/// affirmative, later sides argue against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentRole {
    Debater { side: u32 },
    Judge,
}

impl AgentRole {
    pub fn debater(side: u32) -> Self {
        AgentRole::Debater { side }
    }

    pub fn is_debater(self) -> bool {
        matches!(self, AgentRole::Debater { .. })
    }

    pub fn side_index(self) -> Option<u32> {
        match self {
            AgentRole::Debater { side } => Some(side),
            AgentRole::Judge => None,
        }
    }

    /// Human-readable label used when rendering debate history.
    pub fn label(self) -> String {
        match self {
            AgentRole::Debater { side: 1 } => "Affirmative side".to_string(),
            AgentRole::Debater { side: 2 } => "Negative side".to_string(),
            AgentRole::Debater { side } => format!("Negative side {}", side - 1),
            AgentRole::Judge => "Moderator".to_string(),
        }
    }

    /// Key used for this role in `DebateConfig::backend_bindings`.
    pub fn binding_key(self) -> String {
        match self {
            AgentRole::Debater { side } => format!("side{side}"),
            AgentRole::Judge => "judge".to_string(),
        }
    }
}

impl std::fmt::Display for AgentRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

fn default_n_debaters() -> u32 {
    2
}

fn default_max_iterations() -> u32 {
    3
}

fn default_level() -> u8 {
    2
}

fn default_sc_temperature() -> f64 {
    0.7
}

/// Protocol parameters for one debate (and for the baseline loops, which reuse
/// the same iteration cap and temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    #[serde(default = "default_n_debaters")]
    pub n_debaters: u32,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_level")]
    pub tit_for_tat_level: u8,
    #[serde(default)]
    pub backend_bindings: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub temperature: f64,
    /// Sampling temperature used by self-consistency; a temperature of zero
    /// would make all samples identical.
    #[serde(default = "default_sc_temperature")]
    pub self_consistency_temperature: f64,
    #[serde(default)]
    pub task_kind: TaskKind,
    /// Analysis mode: ignore the judge's break signal and always run the full
    /// iteration budget.
    #[serde(default)]
    pub force_full_rounds: bool,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            n_debaters: default_n_debaters(),
            max_iterations: default_max_iterations(),
            tit_for_tat_level: default_level(),
            backend_bindings: BTreeMap::new(),
            temperature: 0.0,
            self_consistency_temperature: default_sc_temperature(),
            task_kind: TaskKind::Qa,
            force_full_rounds: false,
        }
    }
}

impl DebateConfig {
    /// Checks structural invariants plus the binding requirements of `method`.
    /// MAD needs every debate role bound; the single-agent baselines only need
    /// the side-1 binding, which doubles as the solo agent.
    pub fn validate_for(&self, method: Method) -> Result<(), String> {
        if self.n_debaters < 2 {
            return Err(format!("n_debaters must be >= 2, got {}", self.n_debaters));
        }
        if self.max_iterations < 1 {
            return Err("max_iterations must be >= 1".to_string());
        }
        if self.tit_for_tat_level > 3 {
            return Err(format!(
                "tit_for_tat_level must be in 0..=3, got {}",
                self.tit_for_tat_level
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        let required: Vec<String> = match method {
            Method::Mad => (1..=self.n_debaters)
                .map(|s| AgentRole::debater(s).binding_key())
                .chain(std::iter::once(AgentRole::Judge.binding_key()))
                .collect(),
            _ => vec![AgentRole::debater(1).binding_key()],
        };
        for key in &required {
            if !self.backend_bindings.contains_key(key) {
                return Err(format!("missing backend binding for role '{key}'"));
            }
        }
        Ok(())
    }

    /// Stable hash over the canonical JSON rendering of the config.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical_json(&value).as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Renders a JSON value with lexicographically ordered object keys so hashes
/// do not depend on serializer features or insertion order.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| {
                    format!(
                        "{}:{}",
                        serde_json::to_string(k).expect("string serializes"),
                        canonical_json(&map[k])
                    )
                })
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => serde_json::to_string(other).expect("scalar serializes"),
    }
}

/// Which side the judge preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreferredSide {
    Affirmative,
    Negative,
    Tie,
    #[default]
    Unknown,
}

/// Parsed judge output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeDecision {
    /// The discriminative-mode break signal.
    pub break_now: bool,
    /// The extracted answer, when an `Answer:` line was present.
    pub final_answer: Option<String>,
    pub preferred_side: PreferredSide,
    pub raw_text: String,
    /// Whether the mode's required field was found.
    pub parse_ok: bool,
}

/// Aggregation record for one (topic, method) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub topic_id: String,
    pub final_answer: String,
    pub rounds_used: u32,
    pub per_iteration_answers: Vec<String>,
    pub total_completion_tokens: u64,
    /// Winner of the debate; `None` for single-agent baselines.
    pub winner: Option<PreferredSide>,
    /// Relative path of the persisted transcript, empty for baselines.
    pub transcript_ref: String,
    /// Number of self-consistency samples that actually succeeded.
    #[serde(default)]
    pub k_effective: Option<u32>,
}
