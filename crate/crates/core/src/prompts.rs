//! Deterministic construction of every prompt string in the protocol: meta
//! prompts with tit-for-tat levels, debater role prompts, judge prompts in
//! both modes, and the baseline prompts.
//!
//! Templates are embedded defaults but can be overridden from a directory of
//! UTF-8 text files named `<template_name>.txt`. Placeholder syntax is a
//! single-brace `{name}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::types::{AgentRole, DebateConfig, TopicRecord};

/// The four tit-for-tat level clauses, index = level.
const LEVEL_CLAUSES: [&str; 4] = [
    "Both sides must reach a full consensus on every point of the debate. \
     Every statement must be agreed upon by both sides.",
    "Most of the debate should be characterized by disagreements, but there \
     may still be a small amount of consensus on less significant points.",
    "It's not necessary to fully agree with each other's perspectives, as our \
     objective is to find the correct answer.",
    "Both sides must disagree with each other on every point of the debate. \
     There should be no consensus whatsoever.",
];

const META: &str = "You are a debater. Hello and welcome to the debate competition. \
There are {n_debaters} debaters and the debate runs for at most {max_iterations} \
iterations. {level_clause} The debate topic is stated as follows: {topic}";

const AFFIRMATIVE: &str = "You are affirmative side. Please express your viewpoints.";

const NEGATIVE: &str = "You are negative side. You disagree with the affirmative \
side's points. Provide your reasons and answer.";

const NEGATIVE_MULTI: &str = "You are negative side. You disagree with the points \
made by {previous_sides}. Provide your reasons and answer.";

const JUDGE_SYSTEM: &str = "You are a moderator. There will be two debaters involved \
in a debate competition. They will present their answers and discuss their \
perspectives on the debate topic. At the end of each round, you will evaluate both \
sides' answers and decide which one is correct.";

const JUDGE_DISCRIMINATIVE: &str = "All debaters have finished their arguments for \
this round. As the moderator, evaluate the round and state whether the correct \
answer can already be determined. Reply with exactly these lines:\n\
Decision: Yes or No\n\
Answer: <your current best answer>\n\
Winner: Affirmative or Negative or Tie";

const JUDGE_EXTRACTIVE: &str = "The debate has concluded. As the moderator, extract \
the final answer from the whole debate history and decide which side presented it. \
Reply with exactly these lines:\n\
Answer: <the final answer>\n\
Winner: Affirmative or Negative or Tie";

const COT: &str = "{topic}\n\nLet's think step by step";

const REFLECT_FEEDBACK: &str = "Review your previous answer to the question and \
check whether it is correct. Give feedback on your own reasoning, then state \
whether your answer is satisfactory or unsatisfactory. Reply with exactly these \
lines at the end:\n\
Verdict: Satisfactory or Unsatisfactory\n\
Answer: <your current answer>";

const MT_TOPIC: &str =
    "What is the correct English translation of the following Chinese text: {source}";

/// Judge prompt flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeMode {
    System,
    Discriminative,
    Extractive,
}

/// Baseline prompt flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePrompt {
    Cot,
    SelfReflectInit,
    SelfReflectFeedback,
    SelfConsistency,
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("topic text is empty")]
    MissingTopic,
    #[error("expected a debater role, got {0}")]
    RoleMismatch(String),
    #[error("tit-for-tat level {0} is out of range 0..=3")]
    InvalidLevel(u8),
    #[error("template '{template}' is missing placeholder '{name}'")]
    MissingPlaceholder { template: String, name: String },
    #[error("unknown template '{0}'")]
    UnknownTemplate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named template body plus the placeholders that must be supplied.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    fn new(name: &str, body: &str, required: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            body: body.to_string(),
            required_placeholders: required.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Placeholders referenced by the body.
    pub fn referenced_placeholders(&self) -> BTreeSet<String> {
        let re = regex::Regex::new(r"\{([a-z0-9_]+)\}").expect("static regex");
        re.captures_iter(&self.body)
            .map(|c| c[1].to_string())
            .collect()
    }

    /// Substitutes placeholders. Fails if a required or referenced
    /// placeholder has no value, so rendered output never carries an
    /// unresolved `{name}` marker.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        for name in &self.required_placeholders {
            if !vars.contains_key(name.as_str()) {
                return Err(PromptError::MissingPlaceholder {
                    template: self.name.clone(),
                    name: name.clone(),
                });
            }
        }
        let mut out = self.body.clone();
        for name in self.referenced_placeholders() {
            match vars.get(name.as_str()) {
                Some(value) => out = out.replace(&format!("{{{name}}}"), value),
                None => {
                    return Err(PromptError::MissingPlaceholder {
                        template: self.name.clone(),
                        name,
                    })
                }
            }
        }
        Ok(out)
    }
}

/// The full set of templates, embedded by default.
#[derive(Debug, Clone)]
pub struct PromptKit {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptKit {
    fn default() -> Self {
        let defaults = [
            PromptTemplate::new(
                "meta",
                META,
                &["topic", "n_debaters", "max_iterations", "level_clause"],
            ),
            PromptTemplate::new("affirmative", AFFIRMATIVE, &[]),
            PromptTemplate::new("negative", NEGATIVE, &[]),
            PromptTemplate::new("negative_multi", NEGATIVE_MULTI, &["previous_sides"]),
            PromptTemplate::new("judge_system", JUDGE_SYSTEM, &[]),
            PromptTemplate::new("judge_discriminative", JUDGE_DISCRIMINATIVE, &[]),
            PromptTemplate::new("judge_extractive", JUDGE_EXTRACTIVE, &[]),
            PromptTemplate::new("cot", COT, &["topic"]),
            PromptTemplate::new("reflect_feedback", REFLECT_FEEDBACK, &[]),
            PromptTemplate::new("mt_topic", MT_TOPIC, &["source"]),
            PromptTemplate::new("level_0", LEVEL_CLAUSES[0], &[]),
            PromptTemplate::new("level_1", LEVEL_CLAUSES[1], &[]),
            PromptTemplate::new("level_2", LEVEL_CLAUSES[2], &[]),
            PromptTemplate::new("level_3", LEVEL_CLAUSES[3], &[]),
        ];
        let templates = defaults
            .into_iter()
            .map(|t| (t.name.clone(), t))
            .collect();
        Self { templates }
    }
}

impl PromptKit {
    /// Defaults plus any `<name>.txt` overrides found in `dir`. Override
    /// bodies keep the required-placeholder contract of the template they
    /// replace.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut kit = Self::default();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let body = std::fs::read_to_string(&path)?;
            let body = body.trim_end_matches('\n').to_string();
            match kit.templates.get_mut(name) {
                Some(t) => t.body = body,
                None => return Err(PromptError::UnknownTemplate(name.to_string())),
            }
        }
        Ok(kit)
    }

    pub fn template(&self, name: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(name)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    pub fn level_clause(&self, level: u8) -> Result<String, PromptError> {
        if level > 3 {
            return Err(PromptError::InvalidLevel(level));
        }
        Ok(self.template(&format!("level_{level}"))?.body.clone())
    }

    /// The debate-competition preamble: greeting, debater count, iteration
    /// limit, the tit-for-tat clause for the configured level, and the topic.
    pub fn build_meta_prompt(
        &self,
        topic: &TopicRecord,
        config: &DebateConfig,
    ) -> Result<String, PromptError> {
        if topic.topic_text.is_empty() {
            return Err(PromptError::MissingTopic);
        }
        let vars = BTreeMap::from([
            ("topic", topic.topic_text.clone()),
            ("n_debaters", config.n_debaters.to_string()),
            ("max_iterations", config.max_iterations.to_string()),
            ("level_clause", self.level_clause(config.tit_for_tat_level)?),
        ]);
        self.template("meta")?.render(&vars)
    }

    /// Side 1 gets the affirmative text; side two the negative text; later
    /// sides get the negative text naming every preceding side.
    pub fn build_debater_prompt(&self, role: AgentRole) -> Result<String, PromptError> {
        let side = match role {
            AgentRole::Debater { side } => side,
            AgentRole::Judge => return Err(PromptError::RoleMismatch(role.label())),
        };
        match side {
            1 => Ok(self.template("affirmative")?.body.clone()),
            2 => Ok(self.template("negative")?.body.clone()),
            k => {
                let names: Vec<String> = (1..k).map(|s| format!("side {s}")).collect();
                let previous = match names.split_last() {
                    Some((last, rest)) if !rest.is_empty() => {
                        format!("{} and {}", rest.join(", "), last)
                    }
                    Some((last, _)) => last.clone(),
                    None => String::new(),
                };
                let vars = BTreeMap::from([("previous_sides", previous)]);
                self.template("negative_multi")?.render(&vars)
            }
        }
    }

    pub fn build_judge_prompt(&self, mode: JudgeMode) -> Result<String, PromptError> {
        let name = match mode {
            JudgeMode::System => "judge_system",
            JudgeMode::Discriminative => "judge_discriminative",
            JudgeMode::Extractive => "judge_extractive",
        };
        Ok(self.template(name)?.body.clone())
    }

    pub fn build_baseline_prompt(
        &self,
        method: BaselinePrompt,
        topic: &TopicRecord,
    ) -> Result<String, PromptError> {
        if topic.topic_text.is_empty() {
            return Err(PromptError::MissingTopic);
        }
        match method {
            BaselinePrompt::Cot | BaselinePrompt::SelfReflectInit | BaselinePrompt::SelfConsistency => {
                let vars = BTreeMap::from([("topic", topic.topic_text.clone())]);
                self.template("cot")?.render(&vars)
            }
            BaselinePrompt::SelfReflectFeedback => {
                Ok(self.template("reflect_feedback")?.body.clone())
            }
        }
    }

    /// Wraps a Chinese source sentence into the translation question used as
    /// the debate topic for MT tasks.
    pub fn translation_topic(&self, source: &str) -> Result<String, PromptError> {
        let vars = BTreeMap::from([("source", source.to_string())]);
        self.template("mt_topic")?.render(&vars)
    }
}
