//! JSONL dataset ingestion for the QA and MT record shapes.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::prompts::PromptKit;
use crate::types::{TaskKind, TopicRecord};

use super::HarnessError;

/// One line of a QA dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaLine {
    pub id: String,
    pub question: String,
    pub correct_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incorrect_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incorrect_explanation: Option<String>,
}

/// One line of an MT dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtLine {
    pub id: String,
    pub source: String,
    pub correct_ref: String,
    pub incorrect_ref: String,
    pub ambiguity_type: String,
}

const AMBIGUITY_TYPES: [&str; 3] = ["lexical", "contextless", "contextual"];

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut lines = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if !line.trim().is_empty() {
            lines.push((idx + 1, line));
        }
    }
    Ok(lines)
}

/// Loads a QA dataset: one record per line with a required question and
/// correct answer; explanations are optional.
pub fn load_qa_dataset(path: &Path) -> Result<Vec<TopicRecord>, HarnessError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in read_lines(path)? {
        let parsed: QaLine =
            serde_json::from_str(&line).map_err(|e| HarnessError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        if parsed.id.is_empty() || parsed.question.is_empty() || parsed.correct_answer.is_empty() {
            return Err(HarnessError::MalformedLine {
                line: line_no,
                message: "id, question and correct_answer must be non-empty".to_string(),
            });
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(HarnessError::DuplicateId(parsed.id));
        }
        records.push(TopicRecord {
            id: parsed.id,
            task_kind: TaskKind::Qa,
            topic_text: parsed.question,
            correct_answer: Some(parsed.correct_answer),
            incorrect_answer: parsed.incorrect_answer,
            correct_explanation: parsed.correct_explanation,
            incorrect_explanation: parsed.incorrect_explanation,
            source_metadata: BTreeMap::new(),
        });
    }
    Ok(records)
}

/// Loads an MT dataset: the topic text wraps the source sentence in the
/// translation question, the reference pair lands in the answer fields, and
/// the ambiguity type is kept as source metadata.
pub fn load_mt_dataset(path: &Path) -> Result<Vec<TopicRecord>, HarnessError> {
    let kit = PromptKit::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in read_lines(path)? {
        let parsed: MtLine =
            serde_json::from_str(&line).map_err(|e| HarnessError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        if parsed.id.is_empty() || parsed.source.is_empty() {
            return Err(HarnessError::MalformedLine {
                line: line_no,
                message: "id and source must be non-empty".to_string(),
            });
        }
        if !AMBIGUITY_TYPES.contains(&parsed.ambiguity_type.as_str()) {
            return Err(HarnessError::UnknownAmbiguityType(parsed.ambiguity_type));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(HarnessError::DuplicateId(parsed.id));
        }
        let topic_text = kit
            .translation_topic(&parsed.source)
            .map_err(|e| HarnessError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        let mut source_metadata = BTreeMap::new();
        source_metadata.insert("ambiguity_type".to_string(), parsed.ambiguity_type);
        source_metadata.insert("source".to_string(), parsed.source);
        records.push(TopicRecord {
            id: parsed.id,
            task_kind: TaskKind::Translation,
            topic_text,
            correct_answer: Some(parsed.correct_ref),
            incorrect_answer: Some(parsed.incorrect_ref),
            correct_explanation: None,
            incorrect_explanation: None,
            source_metadata,
        });
    }
    Ok(records)
}

pub fn load_dataset(path: &Path, task_kind: TaskKind) -> Result<Vec<TopicRecord>, HarnessError> {
    match task_kind {
        TaskKind::Qa => load_qa_dataset(path),
        TaskKind::Translation => load_mt_dataset(path),
    }
}

/// Re-serializes loaded QA records into the dataset line shape.
pub fn save_qa_dataset(records: &[TopicRecord], mut w: impl Write) -> Result<(), HarnessError> {
    for record in records {
        let line = QaLine {
            id: record.id.clone(),
            question: record.topic_text.clone(),
            correct_answer: record.correct_answer.clone().unwrap_or_default(),
            incorrect_answer: record.incorrect_answer.clone(),
            correct_explanation: record.correct_explanation.clone(),
            incorrect_explanation: record.incorrect_explanation.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).map_err(|e| HarnessError::Io {
            path: "<writer>".to_string(),
            source: e,
        })?;
    }
    Ok(())
}

/// Re-serializes loaded MT records into the dataset line shape.
pub fn save_mt_dataset(records: &[TopicRecord], mut w: impl Write) -> Result<(), HarnessError> {
    for record in records {
        let line = MtLine {
            id: record.id.clone(),
            source: record
                .source_metadata
                .get("source")
                .cloned()
                .unwrap_or_default(),
            correct_ref: record.correct_answer.clone().unwrap_or_default(),
            incorrect_ref: record.incorrect_answer.clone().unwrap_or_default(),
            ambiguity_type: record
                .source_metadata
                .get("ambiguity_type")
                .cloned()
                .unwrap_or_default(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?).map_err(|e| HarnessError::Io {
            path: "<writer>".to_string(),
            source: e,
        })?;
    }
    Ok(())
}

/// Per-ambiguity-type record counts for an MT dataset.
pub fn ambiguity_counts(records: &[TopicRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for record in records {
        if let Some(kind) = record.source_metadata.get("ambiguity_type") {
            *counts.entry(kind.clone()).or_insert(0) += 1;
        }
    }
    counts
}
