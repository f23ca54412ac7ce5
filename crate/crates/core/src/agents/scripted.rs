//! Deterministic scripted backend for tests and desk-scale protocol runs.

use std::sync::Mutex;

use regex::Regex;

use crate::context::MessageList;

use super::{estimate_tokens, match_text, Backend, BackendError, Completion, ScriptEntry};

enum Matcher {
    Any,
    Substring(String),
    Regex(Regex),
}

impl Matcher {
    fn parse(raw: &str) -> Result<Self, BackendError> {
        if raw == "*" {
            return Ok(Matcher::Any);
        }
        if let Some(pattern) = raw.strip_prefix("re:") {
            let re = Regex::new(pattern)
                .map_err(|e| BackendError::InvalidSpec(format!("bad matcher regex: {e}")))?;
            return Ok(Matcher::Regex(re));
        }
        Ok(Matcher::Substring(raw.to_string()))
    }

    fn matches(&self, text: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Substring(s) => text.contains(s),
            Matcher::Regex(re) => re.is_match(text),
        }
    }
}

struct CompiledEntry {
    matcher: Matcher,
    entry: ScriptEntry,
    consumed: bool,
}

/// Serves scripted responses: each call consumes the first unconsumed entry
/// whose matcher matches the rendered messages. The cursor is serialized
/// behind a mutex so one instance may be shared across threads.
pub struct ScriptedBackend {
    entries: Mutex<Vec<CompiledEntry>>,
    calls: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        if script.is_empty() {
            return Err(BackendError::InvalidSpec(
                "scripted backend requires a non-empty script".to_string(),
            ));
        }
        let entries = script
            .into_iter()
            .map(|entry| {
                Ok(CompiledEntry {
                    matcher: Matcher::parse(&entry.matcher)?,
                    entry,
                    consumed: false,
                })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        Ok(Self {
            entries: Mutex::new(entries),
            calls: Mutex::new(0),
        })
    }

    /// Number of generate calls served so far (including failed ones).
    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("calls lock")
    }

    /// Number of script entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.entries
            .lock()
            .expect("entries lock")
            .iter()
            .filter(|e| !e.consumed)
            .count()
    }
}

impl Backend for ScriptedBackend {
    fn generate(
        &self,
        messages: &MessageList,
        _temperature: f64,
    ) -> Result<Completion, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::InvalidRequest("empty message list".to_string()));
        }
        *self.calls.lock().expect("calls lock") += 1;
        let text = match_text(messages);
        let mut entries = self.entries.lock().expect("entries lock");
        let slot = entries
            .iter_mut()
            .find(|e| !e.consumed && e.matcher.matches(&text));
        match slot {
            Some(slot) => {
                slot.consumed = true;
                let entry = &slot.entry;
                if entry.response.is_empty() {
                    return Err(BackendError::EmptyResponse);
                }
                Ok(Completion {
                    text: entry.response.clone(),
                    prompt_tokens: entry.prompt_tokens.unwrap_or_else(|| estimate_tokens(&text)),
                    completion_tokens: entry
                        .completion_tokens
                        .unwrap_or_else(|| estimate_tokens(&entry.response)),
                    backend_id: "scripted".to_string(),
                    wall_time_ms: 0,
                })
            }
            None => Err(BackendError::ScriptExhausted(
                "no unconsumed entry matches the request".to_string(),
            )),
        }
    }
}
