//! Replay backend: serves the utterances a role produced in a stored
//! transcript, in recorded order.

use std::path::Path;
use std::sync::Mutex;

use crate::context::MessageList;
use crate::transcript::{Transcript, Utterance};
use crate::types::AgentRole;

use super::{Backend, BackendError, Completion};

pub struct ReplayBackend {
    role: AgentRole,
    recorded: Vec<Utterance>,
    cursor: Mutex<usize>,
}

impl ReplayBackend {
    pub fn new(transcript: &Transcript, role: AgentRole) -> Self {
        let recorded = transcript
            .utterances
            .iter()
            .filter(|u| u.role == role)
            .cloned()
            .collect();
        Self {
            role,
            recorded,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_path(path: &Path, role: AgentRole) -> Result<Self, BackendError> {
        let transcript = Transcript::load_jsonl(path)
            .map_err(|e| BackendError::ReplayMismatch(format!("cannot load transcript: {e}")))?;
        Ok(Self::new(&transcript, role))
    }
}

impl Backend for ReplayBackend {
    fn generate(
        &self,
        messages: &MessageList,
        _temperature: f64,
    ) -> Result<Completion, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("empty message list".to_string()));
        }
        let mut cursor = self.cursor.lock().expect("cursor lock");
        match self.recorded.get(*cursor) {
            Some(u) => {
                *cursor += 1;
                if u.text.is_empty() {
                    return Err(BackendError::EmptyResponse);
                }
                Ok(Completion {
                    text: u.text.clone(),
                    prompt_tokens: u.prompt_tokens,
                    completion_tokens: u.completion_tokens,
                    backend_id: "replay".to_string(),
                    wall_time_ms: u.wall_time_ms,
                })
            }
            None => Err(BackendError::ReplayMismatch(format!(
                "{} has no recorded utterance for request {} (only {} recorded)",
                self.role.label(),
                *cursor + 1,
                self.recorded.len()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::Message;

    fn one_iteration_transcript() -> Transcript {
        let mut t = Transcript::new("d", "t", "f");
        let mut push = |role: AgentRole, text: &str| {
            let mut u = Utterance::new(role, 1, text);
            u.prompt_tokens = 3;
            u.completion_tokens = 2;
            t.append(u).unwrap();
        };
        push(AgentRole::debater(1), "aff said this");
        push(AgentRole::debater(2), "neg said this");
        push(AgentRole::Judge, "judge said this");
        t
    }

    #[test]
    fn replays_stored_texts_in_protocol_order() {
        let t = one_iteration_transcript();
        let aff = ReplayBackend::new(&t, AgentRole::debater(1));
        let neg = ReplayBackend::new(&t, AgentRole::debater(2));
        let judge = ReplayBackend::new(&t, AgentRole::Judge);
        let msgs = vec![Message::instruction("go")];
        assert_eq!(aff.generate(&msgs, 0.0).unwrap().text, "aff said this");
        assert_eq!(neg.generate(&msgs, 0.0).unwrap().text, "neg said this");
        let j = judge.generate(&msgs, 0.0).unwrap();
        assert_eq!(j.text, "judge said this");
        assert_eq!((j.prompt_tokens, j.completion_tokens), (3, 2));
    }

    #[test]
    fn exhausted_replay_is_a_mismatch() {
        let t = one_iteration_transcript();
        let aff = ReplayBackend::new(&t, AgentRole::debater(1));
        let msgs = vec![Message::instruction("go")];
        aff.generate(&msgs, 0.0).unwrap();
        let err = aff.generate(&msgs, 0.0).unwrap_err();
        assert!(matches!(err, BackendError::ReplayMismatch(_)));
    }

    #[test]
    fn from_path_round_trips_through_jsonl() {
        let t = one_iteration_transcript();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        t.save_jsonl(&path).unwrap();
        let judge = ReplayBackend::from_path(&path, AgentRole::Judge).unwrap();
        let msgs = vec![Message::instruction("go")];
        assert_eq!(judge.generate(&msgs, 0.0).unwrap().text, "judge said this");
    }
}
