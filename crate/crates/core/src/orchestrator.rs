//! The debate control loop and the three baseline loops.
//!
//! A debate runs at most `max_iterations` rounds. In each round the debaters
//! speak in fixed side order, then the judge is queried in discriminative
//! mode; a parsed `Decision: Yes` ends the loop early (the adaptive break).
//! Whether the loop ends by break or by cap, the judge is then queried once
//! in extractive mode over the full history, and that single extractive
//! decision supplies the final answer and winner. The extractive utterance is
//! recorded as a judge-only closing iteration after the last debated one.

use std::sync::Arc;

use regex::Regex;
use thiserror::Error;

use crate::agents::{Backend, BackendError, RoleBackends};
use crate::context::{render_context, ContextError, Message, MessageList};
use crate::harness::normalize_answer;
use crate::prompts::{BaselinePrompt, JudgeMode, PromptError, PromptKit};
use crate::transcript::{Transcript, TranscriptError, Utterance};
use crate::types::{
    AgentRole, DebateConfig, JudgeDecision, Method, PreferredSide, RunResult, TopicRecord,
};

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("backend error for {role} at iteration {iteration}: {source}")]
    Backend {
        role: String,
        iteration: u32,
        source: BackendError,
    },
    #[error("iteration {requested} is not complete in the transcript (only {available})")]
    IncompleteIteration { requested: u32, available: u32 },
    #[error("all {attempted} self-consistency samples failed; last error: {last}")]
    AllSamplesFailed { attempted: u32, last: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

fn backend_err(role: &AgentRole, iteration: u32) -> impl FnOnce(BackendError) -> DebateError + '_ {
    move |source| DebateError::Backend {
        role: role.label(),
        iteration,
        source,
    }
}

/// Judge output mode the parser is applied in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Discriminative,
    Extractive,
}

/// Everything one debate produced.
#[derive(Debug, Clone)]
pub struct DebateOutcome {
    pub transcript: Transcript,
    pub result: RunResult,
    /// One discriminative decision per executed iteration.
    pub decisions: Vec<JudgeDecision>,
    /// The single extractive decision that closes every debate.
    pub final_decision: JudgeDecision,
    pub broke_early: bool,
}

/// Case-insensitive, line-anchored scan for `Decision:`, `Answer:` and
/// `Winner:` fields; the last occurrence of each wins. Discriminative mode
/// requires a parsed Decision, extractive mode requires an Answer. Parse
/// failure is data, not an error: `parse_ok` is false and the decision
/// carries no break signal and no preferred side.
pub fn parse_judge_decision(raw: &str, mode: ParseMode) -> JudgeDecision {
    let field = |name: &str| -> Option<String> {
        let re = Regex::new(&format!(r"(?im)^\s*{name}\s*:\s*(.*)$")).expect("static regex");
        re.captures_iter(raw)
            .last()
            .map(|c| c[1].trim().to_string())
    };

    let decision = field("decision").and_then(|v| {
        let v = v.to_ascii_lowercase();
        if v.starts_with("yes") || v.starts_with("true") {
            Some(true)
        } else if v.starts_with("no") || v.starts_with("false") {
            Some(false)
        } else {
            None
        }
    });
    let answer = field("answer").filter(|a| !a.is_empty());
    let winner = field("winner").map(|v| {
        let v = v.to_ascii_lowercase();
        if v.starts_with("affirmative") {
            PreferredSide::Affirmative
        } else if v.starts_with("negative") {
            PreferredSide::Negative
        } else if v.starts_with("tie") {
            PreferredSide::Tie
        } else {
            PreferredSide::Unknown
        }
    });

    let parse_ok = match mode {
        ParseMode::Discriminative => decision.is_some(),
        ParseMode::Extractive => answer.is_some(),
    };
    if parse_ok {
        JudgeDecision {
            break_now: decision.unwrap_or(false),
            final_answer: answer,
            preferred_side: winner.unwrap_or(PreferredSide::Unknown),
            raw_text: raw.to_string(),
            parse_ok: true,
        }
    } else {
        // Contract: an unparsed decision never breaks and prefers no side.
        JudgeDecision {
            break_now: false,
            final_answer: answer,
            preferred_side: PreferredSide::Unknown,
            raw_text: raw.to_string(),
            parse_ok: false,
        }
    }
}

fn utterance_from(role: AgentRole, iteration: u32, completion: &crate::agents::Completion) -> Utterance {
    Utterance {
        role,
        iteration,
        text: completion.text.clone(),
        prompt_tokens: completion.prompt_tokens,
        completion_tokens: completion.completion_tokens,
        wall_time_ms: completion.wall_time_ms,
    }
}

/// Runs one full debate, instantiating backends from the config bindings.
pub fn run_debate(topic: &TopicRecord, config: &DebateConfig) -> Result<DebateOutcome, DebateError> {
    let backends = RoleBackends::from_config(config).map_err(|source| DebateError::Backend {
        role: "bindings".to_string(),
        iteration: 0,
        source,
    })?;
    run_debate_with(topic, config, &backends, &PromptKit::default())
}

/// Runs one full debate against caller-supplied backends and templates.
pub fn run_debate_with(
    topic: &TopicRecord,
    config: &DebateConfig,
    backends: &RoleBackends,
    kit: &PromptKit,
) -> Result<DebateOutcome, DebateError> {
    config
        .validate_for(Method::Mad)
        .map_err(DebateError::InvalidConfig)?;

    let debate_id = format!("mad-{}", topic.id);
    let mut transcript = Transcript::new(debate_id.clone(), &topic.id, config.fingerprint());
    let mut decisions: Vec<JudgeDecision> = Vec::new();
    let mut per_iteration_answers: Vec<String> = Vec::new();
    let mut total_completion_tokens = 0u64;
    let mut rounds_used = 0u32;

    'rounds: for iteration in 1..=config.max_iterations {
        for side in 1..=config.n_debaters {
            let role = AgentRole::debater(side);
            let messages = render_context(&transcript, role, config, topic, kit)?;
            let backend = backends.debater(side).map_err(backend_err(&role, iteration))?;
            let completion = backend
                .generate(&messages, config.temperature)
                .map_err(backend_err(&role, iteration))?;
            total_completion_tokens += u64::from(completion.completion_tokens);
            transcript.append(utterance_from(role, iteration, &completion))?;
        }

        let judge_completion = query_judge(
            &transcript,
            config,
            topic,
            backends,
            kit,
            JudgeMode::Discriminative,
            iteration,
        )?;
        total_completion_tokens += u64::from(judge_completion.completion_tokens);
        transcript.append(utterance_from(AgentRole::Judge, iteration, &judge_completion))?;

        let decision = parse_judge_decision(&judge_completion.text, ParseMode::Discriminative);
        per_iteration_answers.push(decision.final_answer.clone().unwrap_or_default());
        let break_now = decision.break_now;
        decisions.push(decision);
        rounds_used = iteration;

        if break_now && !config.force_full_rounds {
            break 'rounds;
        }
    }

    // Uniform final-answer path: exactly one extractive call per debate,
    // recorded as a judge-only closing iteration.
    let extraction_iteration = rounds_used + 1;
    let final_completion = query_judge(
        &transcript,
        config,
        topic,
        backends,
        kit,
        JudgeMode::Extractive,
        extraction_iteration,
    )?;
    total_completion_tokens += u64::from(final_completion.completion_tokens);
    transcript.append(utterance_from(
        AgentRole::Judge,
        extraction_iteration,
        &final_completion,
    ))?;
    let final_decision = parse_judge_decision(&final_completion.text, ParseMode::Extractive);

    let broke_early = !config.force_full_rounds && rounds_used < config.max_iterations;
    let result = RunResult {
        method: Method::Mad,
        topic_id: topic.id.clone(),
        final_answer: final_decision.final_answer.clone().unwrap_or_default(),
        rounds_used,
        per_iteration_answers,
        total_completion_tokens,
        winner: Some(final_decision.preferred_side),
        transcript_ref: String::new(),
        k_effective: None,
    };
    Ok(DebateOutcome {
        transcript,
        result,
        decisions,
        final_decision,
        broke_early,
    })
}

fn query_judge(
    transcript: &Transcript,
    config: &DebateConfig,
    topic: &TopicRecord,
    backends: &RoleBackends,
    kit: &PromptKit,
    mode: JudgeMode,
    iteration: u32,
) -> Result<crate::agents::Completion, DebateError> {
    let role = AgentRole::Judge;
    let mut messages = render_context(transcript, role, config, topic, kit)?;
    messages.push(Message::instruction(kit.build_judge_prompt(mode)?));
    let backend = backends.judge().map_err(backend_err(&role, iteration))?;
    backend
        .generate(&messages, config.temperature)
        .map_err(backend_err(&role, iteration))
}

/// Re-runs the extractive judge over the history truncated after iteration
/// `i`'s debater utterances; the building block for per-iteration
/// forced-extraction analyses.
pub fn extract_at_iteration(
    transcript: &Transcript,
    i: u32,
    config: &DebateConfig,
    topic: &TopicRecord,
    judge: &Arc<dyn Backend>,
    kit: &PromptKit,
) -> Result<JudgeDecision, DebateError> {
    let available = transcript.complete_iterations(config.n_debaters);
    if i == 0 || i > available {
        return Err(DebateError::IncompleteIteration {
            requested: i,
            available,
        });
    }
    let truncated = transcript.truncated_after_debaters(i);
    let role = AgentRole::Judge;
    let mut messages = render_context(&truncated, role, config, topic, kit)?;
    messages.push(Message::instruction(
        kit.build_judge_prompt(JudgeMode::Extractive)?,
    ));
    let completion = judge
        .generate(&messages, config.temperature)
        .map_err(backend_err(&role, i))?;
    Ok(parse_judge_decision(&completion.text, ParseMode::Extractive))
}

/// Single chain-of-thought call; the answer is extracted with
/// [`normalize_answer`], not a judge.
pub fn run_cot(topic: &TopicRecord, config: &DebateConfig) -> Result<RunResult, DebateError> {
    let backends = solo_backends(config, Method::Cot)?;
    run_cot_with(topic, config, &backends, &PromptKit::default())
}

pub fn run_cot_with(
    topic: &TopicRecord,
    config: &DebateConfig,
    backends: &RoleBackends,
    kit: &PromptKit,
) -> Result<RunResult, DebateError> {
    let role = AgentRole::debater(1);
    let prompt = kit.build_baseline_prompt(BaselinePrompt::Cot, topic)?;
    let messages = vec![Message::instruction(prompt)];
    let backend = backends.solo().map_err(backend_err(&role, 1))?;
    let completion = backend
        .generate(&messages, config.temperature)
        .map_err(|source| DebateError::Backend {
            role: "cot".to_string(),
            iteration: 1,
            source,
        })?;
    let answer = normalize_answer(&completion.text);
    Ok(RunResult {
        method: Method::Cot,
        topic_id: topic.id.clone(),
        final_answer: answer.clone(),
        rounds_used: 1,
        per_iteration_answers: vec![answer],
        total_completion_tokens: u64::from(completion.completion_tokens),
        winner: None,
        transcript_ref: String::new(),
        k_effective: None,
    })
}

fn parse_reflection(raw: &str) -> (Option<bool>, Option<String>) {
    let verdict_re = Regex::new(r"(?im)^\s*verdict\s*:\s*(.*)$").expect("static regex");
    let verdict = verdict_re.captures_iter(raw).last().and_then(|c| {
        let v = c[1].trim().to_ascii_lowercase();
        if v.starts_with("satisfactory") {
            Some(true)
        } else if v.starts_with("unsatisfactory") || v.starts_with("not satisfactory") {
            Some(false)
        } else {
            None
        }
    });
    let answer_re = Regex::new(r"(?im)^\s*answer\s*:\s*(.*)$").expect("static regex");
    let answer = answer_re
        .captures_iter(raw)
        .last()
        .map(|c| c[1].trim().to_string())
        .filter(|a| !a.is_empty());
    (verdict, answer)
}

/// Iterative self-reflection: a base chain-of-thought answer, then feedback
/// rounds until the agent declares the answer satisfactory or the iteration
/// cap is hit. An unparseable verdict counts as unsatisfactory.
pub fn run_self_reflection(
    topic: &TopicRecord,
    config: &DebateConfig,
) -> Result<RunResult, DebateError> {
    let backends = solo_backends(config, Method::SelfReflect)?;
    run_self_reflection_with(topic, config, &backends, &PromptKit::default())
}

pub fn run_self_reflection_with(
    topic: &TopicRecord,
    config: &DebateConfig,
    backends: &RoleBackends,
    kit: &PromptKit,
) -> Result<RunResult, DebateError> {
    let backend = backends.solo().map_err(|source| DebateError::Backend {
        role: "self_reflect".to_string(),
        iteration: 1,
        source,
    })?;
    let mut messages: MessageList = vec![Message::instruction(
        kit.build_baseline_prompt(BaselinePrompt::SelfReflectInit, topic)?,
    )];
    let base = backend
        .generate(&messages, config.temperature)
        .map_err(|source| DebateError::Backend {
            role: "self_reflect".to_string(),
            iteration: 1,
            source,
        })?;
    let mut total_completion_tokens = u64::from(base.completion_tokens);
    let mut answers = vec![normalize_answer(&base.text)];
    messages.push(Message::viewer(base.text.clone()));

    for iteration in 2..=config.max_iterations {
        messages.push(Message::instruction(
            kit.build_baseline_prompt(BaselinePrompt::SelfReflectFeedback, topic)?,
        ));
        let feedback = backend
            .generate(&messages, config.temperature)
            .map_err(|source| DebateError::Backend {
                role: "self_reflect".to_string(),
                iteration,
                source,
            })?;
        total_completion_tokens += u64::from(feedback.completion_tokens);
        let (verdict, answer) = parse_reflection(&feedback.text);
        if verdict == Some(true) {
            break;
        }
        let revised = answer
            .map(|a| normalize_answer(&a))
            .unwrap_or_else(|| normalize_answer(&feedback.text));
        answers.push(revised);
        messages.push(Message::viewer(feedback.text.clone()));
    }

    Ok(RunResult {
        method: Method::SelfReflect,
        topic_id: topic.id.clone(),
        final_answer: answers.last().cloned().unwrap_or_default(),
        rounds_used: answers.len() as u32,
        per_iteration_answers: answers,
        total_completion_tokens,
        winner: None,
        transcript_ref: String::new(),
        k_effective: None,
    })
}

/// Majority vote over normalized answers; ties broken by the earliest sample
/// index. Failed samples are dropped; the run errors only if every sample
/// fails.
pub fn run_self_consistency(
    topic: &TopicRecord,
    config: &DebateConfig,
    k: u32,
) -> Result<RunResult, DebateError> {
    let backends = solo_backends(config, Method::SelfConsistency)?;
    run_self_consistency_with(topic, config, k, &backends, &PromptKit::default())
}

pub fn run_self_consistency_with(
    topic: &TopicRecord,
    config: &DebateConfig,
    k: u32,
    backends: &RoleBackends,
    kit: &PromptKit,
) -> Result<RunResult, DebateError> {
    if k < 1 {
        return Err(DebateError::InvalidConfig("k must be >= 1".to_string()));
    }
    let backend = backends.solo().map_err(|source| DebateError::Backend {
        role: "self_consistency".to_string(),
        iteration: 1,
        source,
    })?;
    let prompt = kit.build_baseline_prompt(BaselinePrompt::SelfConsistency, topic)?;
    let messages = vec![Message::instruction(prompt)];

    let mut answers = Vec::new();
    let mut total_completion_tokens = 0u64;
    let mut last_error = String::new();
    for _ in 0..k {
        match backend.generate(&messages, config.self_consistency_temperature) {
            Ok(completion) => {
                total_completion_tokens += u64::from(completion.completion_tokens);
                answers.push(normalize_answer(&completion.text));
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    if answers.is_empty() {
        return Err(DebateError::AllSamplesFailed {
            attempted: k,
            last: last_error,
        });
    }

    let final_answer = majority_vote(&answers);
    Ok(RunResult {
        method: Method::SelfConsistency,
        topic_id: topic.id.clone(),
        final_answer,
        rounds_used: 1,
        k_effective: Some(answers.len() as u32),
        per_iteration_answers: answers,
        total_completion_tokens,
        winner: None,
        transcript_ref: String::new(),
    })
}

/// Most frequent answer; on ties the answer whose first occurrence is
/// earliest wins.
pub fn majority_vote(answers: &[String]) -> String {
    let mut tally: Vec<(&String, usize)> = Vec::new();
    for answer in answers {
        match tally.iter_mut().find(|(a, _)| *a == answer) {
            Some((_, count)) => *count += 1,
            None => tally.push((answer, 1)),
        }
    }
    let mut best: Option<(&String, usize)> = None;
    for (answer, count) in &tally {
        if best.is_none_or(|(_, c)| *count > c) {
            best = Some((answer, *count));
        }
    }
    best.map(|(answer, _)| answer.clone()).unwrap_or_default()
}

fn solo_backends(config: &DebateConfig, method: Method) -> Result<RoleBackends, DebateError> {
    config
        .validate_for(method)
        .map_err(DebateError::InvalidConfig)?;
    RoleBackends::from_config(config).map_err(|source| DebateError::Backend {
        role: "bindings".to_string(),
        iteration: 0,
        source,
    })
}
