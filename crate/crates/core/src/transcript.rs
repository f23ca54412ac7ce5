//! Debate transcripts: ordered utterance history, ordering validation, and
//! the JSONL persistence format.
//!
//! Ordering contract: within each iteration the debaters speak as sides
//! 1, 2, ..., k in that exact order, then at most one judge utterance closes
//! the iteration. Iterations are contiguous starting at 1. The closing
//! extraction round produced by the orchestrator is a judge-only iteration
//! appended after the last debated one.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::AgentRole;

/// One turn of the debate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: AgentRole,
    pub iteration: u32,
    pub text: String,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub wall_time_ms: u64,
}

impl Utterance {
    pub fn new(role: AgentRole, iteration: u32, text: impl Into<String>) -> Self {
        Self {
            role,
            iteration,
            text: text.into(),
            prompt_tokens: 0,
            completion_tokens: 0,
            wall_time_ms: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error("debater utterance has empty text (side {side}, iteration {iteration})")]
    EmptyText { side: u32, iteration: u32 },
    #[error("malformed transcript line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("transcript mixes debate ids: {0} vs {1}")]
    MixedDebateIds(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single violation found by [`Transcript::validate`]; `index` is the
/// offending utterance position.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at index {}: {}", self.index, self.message)
    }
}

/// The full ordered debate history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub debate_id: String,
    pub topic_id: String,
    pub config_fingerprint: String,
    pub utterances: Vec<Utterance>,
}

impl Transcript {
    pub fn new(
        debate_id: impl Into<String>,
        topic_id: impl Into<String>,
        config_fingerprint: impl Into<String>,
    ) -> Self {
        Self {
            debate_id: debate_id.into(),
            topic_id: topic_id.into(),
            config_fingerprint: config_fingerprint.into(),
            utterances: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Iteration the transcript is currently in; 0 when empty.
    pub fn current_iteration(&self) -> u32 {
        self.utterances.last().map_or(0, |u| u.iteration)
    }

    fn tail_state(&self) -> TailState {
        let current = self.current_iteration();
        let mut debaters_spoken = 0u32;
        let mut judge_spoken = false;
        for u in self.utterances.iter().rev() {
            if u.iteration != current {
                break;
            }
            match u.role {
                AgentRole::Debater { .. } => debaters_spoken += 1,
                AgentRole::Judge => judge_spoken = true,
            }
        }
        TailState {
            current,
            debaters_spoken,
            judge_spoken,
        }
    }

    /// Appends `u` if doing so keeps the ordering invariants intact.
    pub fn append(&mut self, u: Utterance) -> Result<(), TranscriptError> {
        if u.role.is_debater() && u.text.is_empty() {
            return Err(TranscriptError::EmptyText {
                side: u.role.side_index().unwrap_or(0),
                iteration: u.iteration,
            });
        }
        let state = self.tail_state();
        if u.iteration != state.current && u.iteration != state.current + 1 {
            return Err(TranscriptError::OrderViolation(format!(
                "iteration {} does not continue iteration {}",
                u.iteration, state.current
            )));
        }
        let opens_new = u.iteration == state.current + 1;
        match u.role {
            AgentRole::Debater { side } => {
                let expected = if opens_new { 1 } else { state.debaters_spoken + 1 };
                if !opens_new && state.judge_spoken {
                    return Err(TranscriptError::OrderViolation(format!(
                        "iteration {} is closed by a judge utterance",
                        u.iteration
                    )));
                }
                if side != expected {
                    return Err(TranscriptError::OrderViolation(format!(
                        "side {side} may not speak now in iteration {} (expected side {expected})",
                        u.iteration
                    )));
                }
            }
            AgentRole::Judge => {
                if !opens_new && state.judge_spoken {
                    return Err(TranscriptError::OrderViolation(format!(
                        "iteration {} already has a judge utterance",
                        u.iteration
                    )));
                }
            }
        }
        self.utterances.push(u);
        Ok(())
    }

    /// Reports every ordering invariant the transcript breaks. An empty list
    /// means the transcript is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut expected_iteration = 1u32;
        let mut idx = 0usize;
        while idx < self.utterances.len() {
            let iteration = self.utterances[idx].iteration;
            if iteration != expected_iteration {
                violations.push(Violation {
                    index: idx,
                    message: format!(
                        "iteration {iteration} breaks contiguity (expected {expected_iteration})"
                    ),
                });
            }
            // Consume the whole run of utterances for this iteration.
            let start = idx;
            while idx < self.utterances.len() && self.utterances[idx].iteration == iteration {
                idx += 1;
            }
            let group = &self.utterances[start..idx];

            let mut judge_positions = Vec::new();
            let mut side_order_ok = true;
            let mut first_bad = None;
            let mut expected_side = 1u32;
            for (offset, u) in group.iter().enumerate() {
                match u.role {
                    AgentRole::Debater { side } => {
                        let out_of_place = !judge_positions.is_empty() || side != expected_side;
                        if side_order_ok && out_of_place {
                            side_order_ok = false;
                            first_bad = Some(start + offset);
                        }
                        expected_side += 1;
                        if u.text.is_empty() {
                            violations.push(Violation {
                                index: start + offset,
                                message: format!("debater side {side} has empty text"),
                            });
                        }
                    }
                    AgentRole::Judge => judge_positions.push(start + offset),
                }
            }
            if !side_order_ok {
                violations.push(Violation {
                    index: first_bad.unwrap_or(start),
                    message: format!("debater side order broken in iteration {iteration}"),
                });
            }
            if judge_positions.len() > 1 {
                violations.push(Violation {
                    index: judge_positions[1],
                    message: format!("iteration {iteration} has more than one judge utterance"),
                });
            }
            expected_iteration = iteration.wrapping_add(1);
        }
        violations
    }

    /// History truncated after iteration `i`'s debater utterances: everything
    /// before iteration `i`, plus iteration `i`'s debater turns, dropping the
    /// judge utterance of iteration `i` and all later material.
    pub fn truncated_after_debaters(&self, i: u32) -> Transcript {
        let utterances = self
            .utterances
            .iter()
            .filter(|u| u.iteration < i || (u.iteration == i && u.role.is_debater()))
            .cloned()
            .collect();
        Transcript {
            debate_id: self.debate_id.clone(),
            topic_id: self.topic_id.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            utterances,
        }
    }

    /// Number of iterations that contain a full debater round of `n_debaters`.
    pub fn complete_iterations(&self, n_debaters: u32) -> u32 {
        let mut complete = 0u32;
        let mut iteration = 1u32;
        loop {
            let debaters = self
                .utterances
                .iter()
                .filter(|u| u.iteration == iteration && u.role.is_debater())
                .count() as u32;
            if debaters >= n_debaters {
                complete = iteration;
                iteration += 1;
            } else {
                break;
            }
        }
        complete
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            let line = TranscriptLine::from_utterance(self, u);
            out.push_str(&serde_json::to_string(&line).expect("line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TranscriptError> {
        w.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), TranscriptError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::File::create(path)?;
        self.write_jsonl(file)
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Transcript, TranscriptError> {
        let mut transcript: Option<Transcript> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TranscriptLine =
                serde_json::from_str(&line).map_err(|e| TranscriptError::MalformedLine {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            let utterance = parsed.to_utterance().map_err(|message| {
                TranscriptError::MalformedLine {
                    line: idx + 1,
                    message,
                }
            })?;
            match &mut transcript {
                None => {
                    let mut t = Transcript::new(parsed.debate_id, parsed.topic_id, "");
                    t.utterances.push(utterance);
                    transcript = Some(t);
                }
                Some(t) => {
                    if t.debate_id != parsed.debate_id {
                        return Err(TranscriptError::MixedDebateIds(
                            t.debate_id.clone(),
                            parsed.debate_id,
                        ));
                    }
                    t.utterances.push(utterance);
                }
            }
        }
        transcript.ok_or(TranscriptError::MalformedLine {
            line: 0,
            message: "empty transcript file".to_string(),
        })
    }

    pub fn load_jsonl(path: &Path) -> Result<Transcript, TranscriptError> {
        let file = std::fs::File::open(path)?;
        Transcript::from_jsonl(std::io::BufReader::new(file))
    }
}

struct TailState {
    current: u32,
    debaters_spoken: u32,
    judge_spoken: bool,
}

/// One persisted utterance. Fields are declared in lexicographic order so the
/// emitted JSON is canonical and round-trips byte-for-byte.
#[derive(Debug, Serialize, Deserialize)]
struct TranscriptLine {
    completion_tokens: u32,
    debate_id: String,
    iteration: u32,
    prompt_tokens: u32,
    role_kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    side_index: Option<u32>,
    text: String,
    topic_id: String,
    wall_time_ms: u64,
}

impl TranscriptLine {
    fn from_utterance(t: &Transcript, u: &Utterance) -> Self {
        Self {
            completion_tokens: u.completion_tokens,
            debate_id: t.debate_id.clone(),
            iteration: u.iteration,
            prompt_tokens: u.prompt_tokens,
            role_kind: match u.role {
                AgentRole::Debater { .. } => "debater".to_string(),
                AgentRole::Judge => "judge".to_string(),
            },
            side_index: u.role.side_index(),
            text: u.text.clone(),
            topic_id: t.topic_id.clone(),
            wall_time_ms: u.wall_time_ms,
        }
    }

    fn to_utterance(&self) -> Result<Utterance, String> {
        let role = match (self.role_kind.as_str(), self.side_index) {
            ("debater", Some(side)) if side >= 1 => AgentRole::Debater { side },
            ("debater", _) => return Err("debater line requires side_index >= 1".to_string()),
            ("judge", None) => AgentRole::Judge,
            ("judge", Some(_)) => return Err("judge line must omit side_index".to_string()),
            (other, _) => return Err(format!("unknown role_kind: {other}")),
        };
        Ok(Utterance {
            role,
            iteration: self.iteration,
            text: self.text.clone(),
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
            wall_time_ms: self.wall_time_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn debater(side: u32, iteration: u32, text: &str) -> Utterance {
        Utterance::new(AgentRole::debater(side), iteration, text)
    }

    fn judge(iteration: u32, text: &str) -> Utterance {
        Utterance::new(AgentRole::Judge, iteration, text)
    }

    fn full_iteration(t: &mut Transcript, iteration: u32) {
        t.append(debater(1, iteration, "a")).unwrap();
        t.append(debater(2, iteration, "b")).unwrap();
        t.append(judge(iteration, "j")).unwrap();
    }

    #[test]
    fn first_append_accepted() {
        let mut t = Transcript::new("d", "t", "f");
        t.append(debater(1, 1, "A")).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn side_may_not_speak_twice_in_one_iteration() {
        let mut t = Transcript::new("d", "t", "f");
        t.append(debater(1, 1, "A")).unwrap();
        let err = t.append(debater(1, 1, "again")).unwrap_err();
        assert!(matches!(err, TranscriptError::OrderViolation(_)));
    }

    #[test]
    fn new_iteration_opens_after_judge() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        t.append(debater(1, 2, "again")).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.current_iteration(), 2);
    }

    #[test]
    fn judge_may_open_a_closing_iteration() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        t.append(judge(2, "final extraction")).unwrap();
        assert!(t.validate().is_empty());
    }

    #[test]
    fn iteration_jump_rejected() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        let err = t.append(debater(1, 3, "skip")).unwrap_err();
        assert!(matches!(err, TranscriptError::OrderViolation(_)));
    }

    #[test]
    fn debater_after_judge_rejected() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        let err = t.append(debater(2, 1, "late")).unwrap_err();
        assert!(matches!(err, TranscriptError::OrderViolation(_)));
    }

    #[test]
    fn empty_debater_text_rejected() {
        let mut t = Transcript::new("d", "t", "f");
        let err = t.append(debater(1, 1, "")).unwrap_err();
        assert!(matches!(err, TranscriptError::EmptyText { .. }));
    }

    #[test]
    fn validate_accepts_well_formed_transcript() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn validate_flags_contiguity_gap() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        // Bypass append to build the broken history.
        t.utterances.push(debater(1, 3, "gap"));
        let violations = t.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].index, 3);
        assert!(violations[0].message.contains("contiguity"));
    }

    #[test]
    fn validate_flags_reversed_side_order_at_first_offender() {
        let mut t = Transcript::new("d", "t", "f");
        t.utterances.push(debater(2, 1, "x"));
        t.utterances.push(debater(1, 1, "y"));
        let violations = t.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].index, 0);
        assert!(violations[0].message.contains("side order"));
    }

    #[test]
    fn validate_flags_double_judge() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        t.utterances.push(judge(1, "second"));
        let violations = t.validate();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].index, 3);
    }

    #[test]
    fn truncation_keeps_earlier_iterations_and_drops_judge_of_target() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        full_iteration(&mut t, 2);
        full_iteration(&mut t, 3);
        let cut = t.truncated_after_debaters(2);
        assert_eq!(cut.len(), 5); // 3 from iteration 1, 2 debaters of iteration 2
        assert!(cut.utterances.iter().all(|u| u.iteration <= 2));
        assert!(!cut
            .utterances
            .iter()
            .any(|u| u.iteration == 2 && !u.role.is_debater()));
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let mut t = Transcript::new("debate-1", "topic-1", "f");
        full_iteration(&mut t, 1);
        t.append(judge(2, "Answer: 4\nWinner: Negative")).unwrap();
        let first = t.to_jsonl();
        let reloaded = Transcript::from_jsonl(first.as_bytes()).unwrap();
        assert_eq!(reloaded.to_jsonl(), first);
    }

    #[test]
    fn jsonl_omits_side_index_for_judge() {
        let mut t = Transcript::new("d", "t", "f");
        t.append(debater(1, 1, "A")).unwrap();
        t.append(debater(2, 1, "B")).unwrap();
        t.append(judge(1, "J")).unwrap();
        let jsonl = t.to_jsonl();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert!(lines[0].contains("\"side_index\":1"));
        assert!(!lines[2].contains("side_index"));
    }

    #[test]
    fn complete_iterations_counts_full_rounds() {
        let mut t = Transcript::new("d", "t", "f");
        full_iteration(&mut t, 1);
        t.append(debater(1, 2, "a")).unwrap();
        assert_eq!(t.complete_iterations(2), 1);
    }
}
