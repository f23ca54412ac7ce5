//! Batch execution: dataset ingestion, experiment manifests, bounded-
//! concurrency runs with crash-safe persistence and resume, and report
//! generation.

mod dataset;
mod normalize;
mod report;

pub use dataset::{
    ambiguity_counts, load_dataset, load_mt_dataset, load_qa_dataset, save_mt_dataset,
    save_qa_dataset, MtLine, QaLine,
};
pub use normalize::normalize_answer;
pub use report::{build_report, write_report};

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{build_backend, Backend, BackendError, BackendSpec, RoleBackends};
use crate::metrics::MetricsError;
use crate::orchestrator::{
    run_cot_with, run_debate_with, run_self_consistency_with, run_self_reflection_with,
    DebateError,
};
use crate::prompts::{PromptError, PromptKit};
use crate::transcript::TranscriptError;
use crate::types::{canonical_json, AgentRole, DebateConfig, Method, PreferredSide, RunResult, TaskKind, TopicRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate record id '{0}'")]
    DuplicateId(String),
    #[error("unknown ambiguity_type '{0}' (expected lexical, contextless or contextual)")]
    UnknownAmbiguityType(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn default_concurrency() -> usize {
    1
}

fn default_k() -> u32 {
    3
}

/// Declarative description of one batch: dataset, methods, config overrides,
/// and output location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub dataset_path: String,
    #[serde(default)]
    pub task_kind: TaskKind,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub debate: DebateConfig,
    pub output_dir: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Recorded for provenance; sampling order is already deterministic with
    /// scripted backends.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub force_full_rounds: bool,
    #[serde(default = "default_k")]
    pub self_consistency_k: u32,
    /// Directory of `<template_name>.txt` prompt overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<String>,
}

impl ExperimentManifest {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: ExperimentManifest = serde_json::from_str(&raw)?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Manifest("methods must be non-empty".to_string()));
        }
        if self.concurrency < 1 {
            return Err(HarnessError::Manifest("concurrency must be >= 1".to_string()));
        }
        if self.self_consistency_k < 1 {
            return Err(HarnessError::Manifest(
                "self_consistency_k must be >= 1".to_string(),
            ));
        }
        let mut config = self.debate.clone();
        config.task_kind = self.task_kind;
        for method in &self.methods {
            config
                .validate_for(*method)
                .map_err(HarnessError::Manifest)?;
        }
        Ok(())
    }

    /// The effective per-run config: manifest-level knobs folded in.
    pub fn effective_config(&self) -> DebateConfig {
        let mut config = self.debate.clone();
        config.task_kind = self.task_kind;
        config.force_full_rounds = config.force_full_rounds || self.force_full_rounds;
        config
    }
}

/// The per-run record emitted to `results.jsonl`. Fields are declared in
/// lexicographic order so serialized records are canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub broke_early: bool,
    pub final_answer: String,
    pub method: Method,
    pub per_iteration_answers: Vec<String>,
    pub rounds_used: u32,
    pub topic_id: String,
    pub total_completion_tokens: u64,
    pub winner: Option<PreferredSide>,
}

impl ResultRecord {
    pub fn from_run(result: &RunResult, broke_early: bool) -> Self {
        Self {
            broke_early,
            final_answer: result.final_answer.clone(),
            method: result.method,
            per_iteration_answers: result.per_iteration_answers.clone(),
            rounds_used: result.rounds_used,
            topic_id: result.topic_id.clone(),
            total_completion_tokens: result.total_completion_tokens,
            winner: result.winner,
        }
    }

    /// Rehydrates the in-memory run shape used by the metrics operations.
    pub fn to_run_result(&self) -> RunResult {
        RunResult {
            method: self.method,
            topic_id: self.topic_id.clone(),
            final_answer: self.final_answer.clone(),
            rounds_used: self.rounds_used,
            per_iteration_answers: self.per_iteration_answers.clone(),
            total_completion_tokens: self.total_completion_tokens,
            winner: self.winner,
            transcript_ref: String::new(),
            k_effective: None,
        }
    }
}

/// One progress-ledger line; `status` is `done` or `failed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub method: Method,
    pub status: String,
    pub timestamp: String,
    pub topic_id: String,
}

#[derive(Debug, Clone)]
pub struct FailureRecord {
    pub topic_id: String,
    pub method: Method,
    pub error: String,
}

/// What one `run_experiment` invocation did.
#[derive(Debug)]
pub struct BatchSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<FailureRecord>,
    pub output_dir: PathBuf,
    pub results_total: usize,
}

impl BatchSummary {
    pub fn fully_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Append-only JSONL writer, fsynced per record.
struct AppendLog {
    file: Mutex<File>,
    path: PathBuf,
}

impl AppendLog {
    fn open(path: &Path) -> Result<Self, HarnessError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            file: Mutex::new(file),
            path: path.to_path_buf(),
        })
    }

    fn append<T: Serialize>(&self, record: &T) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut file = self.file.lock().expect("log lock");
        file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        file.sync_data().map_err(io_err(&self.path))?;
        Ok(())
    }
}

/// Reads the completed results back; unparseable lines (torn writes from a
/// crash) are skipped.
pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut records = Vec::new();
    if !path.exists() {
        return Ok(records);
    }
    let file = File::open(path).map_err(io_err(path))?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(record) = serde_json::from_str::<ResultRecord>(&line) {
            records.push(record);
        }
    }
    Ok(records)
}

/// Builds backends for runs: http backends are cached per spec so their rate
/// limiter is shared across the whole batch, scripted and replay backends are
/// fresh per run so every run starts at the top of its script.
pub struct BackendRegistry {
    http_cache: Mutex<HashMap<String, Arc<dyn Backend>>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self {
            http_cache: Mutex::new(HashMap::new()),
        }
    }

    fn build(&self, spec: &BackendSpec, role: AgentRole) -> Result<Arc<dyn Backend>, BackendError> {
        match spec {
            BackendSpec::Http { .. } => {
                let key = canonical_json(&serde_json::to_value(spec).expect("spec serializes"));
                let mut cache = self.http_cache.lock().expect("cache lock");
                if let Some(backend) = cache.get(&key) {
                    return Ok(backend.clone());
                }
                let backend = build_backend(spec, role)?;
                cache.insert(key, backend.clone());
                Ok(backend)
            }
            _ => build_backend(spec, role),
        }
    }

    pub fn role_backends(&self, config: &DebateConfig) -> Result<RoleBackends, BackendError> {
        let mut debaters = Vec::new();
        for side in 1..=config.n_debaters {
            let role = AgentRole::debater(side);
            match config.backend_bindings.get(&role.binding_key()) {
                Some(spec) => debaters.push(self.build(spec, role)?),
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
            .map(|spec| self.build(spec, AgentRole::Judge))
            .transpose()?;
        Ok(RoleBackends::from_parts(debaters, judge))
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::new()
    }
}

pub fn transcript_rel_path(topic_id: &str, method: Method) -> String {
    format!("transcripts/{topic_id}.{method}.jsonl")
}

/// Runs every missing (topic, method) pair of the manifest, up to
/// `concurrency` in flight, persisting transcripts, results, a progress
/// ledger, and a metrics report. Individual run failures are recorded and do
/// not abort the batch.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<BatchSummary, HarnessError> {
    run_experiment_with_stop(manifest, &AtomicBool::new(false))
}

/// Like [`run_experiment`], checking `stop` between runs: once set, queued
/// pairs are left for a later resume while in-flight runs finish cleanly.
pub fn run_experiment_with_stop(
    manifest: &ExperimentManifest,
    stop: &AtomicBool,
) -> Result<BatchSummary, HarnessError> {
    manifest.validate()?;
    let topics = load_dataset(Path::new(&manifest.dataset_path), manifest.task_kind)?;
    let config = manifest.effective_config();
    let kit = match &manifest.template_dir {
        Some(dir) => PromptKit::with_overrides(Path::new(dir))?,
        None => PromptKit::default(),
    };

    let out_dir = PathBuf::from(&manifest.output_dir);
    std::fs::create_dir_all(out_dir.join("transcripts")).map_err(io_err(&out_dir))?;
    let results_path = out_dir.join("results.jsonl");
    let existing = load_results(&results_path)?;
    let done: HashSet<(String, Method)> = existing
        .iter()
        .map(|r| (r.topic_id.clone(), r.method))
        .collect();

    let mut queue = VecDeque::new();
    let mut skipped = 0usize;
    for topic in &topics {
        for method in &manifest.methods {
            if done.contains(&(topic.id.clone(), *method)) {
                skipped += 1;
            } else {
                queue.push_back((topic.clone(), *method));
            }
        }
    }

    let results_log = AppendLog::open(&results_path)?;
    let ledger_log = AppendLog::open(&out_dir.join("ledger.jsonl"))?;
    let registry = BackendRegistry::new();
    let queue = Mutex::new(queue);
    let failures = Mutex::new(Vec::<FailureRecord>::new());
    let executed = Mutex::new(0usize);
    let worker_error = Mutex::new(None::<HarnessError>);

    let workers = manifest.concurrency.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Some((topic, method)) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                match execute_pair(&topic, method, &config, manifest, &registry, &kit, &out_dir) {
                    Ok(record) => {
                        let persisted = results_log.append(&record).and_then(|_| {
                            ledger_log.append(&LedgerRecord {
                                method,
                                status: "done".to_string(),
                                timestamp: chrono::Utc::now().to_rfc3339(),
                                topic_id: topic.id.clone(),
                            })
                        });
                        match persisted {
                            Ok(()) => *executed.lock().expect("executed lock") += 1,
                            Err(e) => {
                                let mut slot = worker_error.lock().expect("error lock");
                                if slot.is_none() {
                                    *slot = Some(e);
                                }
                                break;
                            }
                        }
                    }
                    Err(e) => {
                        let _ = ledger_log.append(&LedgerRecord {
                            method,
                            status: "failed".to_string(),
                            timestamp: chrono::Utc::now().to_rfc3339(),
                            topic_id: topic.id.clone(),
                        });
                        failures.lock().expect("failures lock").push(FailureRecord {
                            topic_id: topic.id.clone(),
                            method,
                            error: e.to_string(),
                        });
                    }
                }
            });
        }
    });

    if let Some(e) = worker_error.into_inner().expect("error lock") {
        return Err(e);
    }

    let gold: BTreeMap<String, TopicRecord> = topics
        .iter()
        .map(|t| (t.id.clone(), t.clone()))
        .collect();
    let all_results = load_results(&results_path)?;
    write_report(&out_dir, &all_results, Some(&gold))?;

    Ok(BatchSummary {
        executed: executed.into_inner().expect("executed lock"),
        skipped,
        failures: failures.into_inner().expect("failures lock"),
        output_dir: out_dir,
        results_total: all_results.len(),
    })
}

fn execute_pair(
    topic: &TopicRecord,
    method: Method,
    config: &DebateConfig,
    manifest: &ExperimentManifest,
    registry: &BackendRegistry,
    kit: &PromptKit,
    out_dir: &Path,
) -> Result<ResultRecord, DebateError> {
    let backends = registry
        .role_backends(config)
        .map_err(|source| DebateError::Backend {
            role: "bindings".to_string(),
            iteration: 0,
            source,
        })?;
    match method {
        Method::Mad => {
            let outcome = run_debate_with(topic, config, &backends, kit)?;
            let rel = transcript_rel_path(&topic.id, method);
            outcome.transcript.save_jsonl(&out_dir.join(&rel))?;
            Ok(ResultRecord::from_run(&outcome.result, outcome.broke_early))
        }
        Method::Cot => {
            let result = run_cot_with(topic, config, &backends, kit)?;
            Ok(ResultRecord::from_run(&result, false))
        }
        Method::SelfReflect => {
            let result = run_self_reflection_with(topic, config, &backends, kit)?;
            Ok(ResultRecord::from_run(&result, false))
        }
        Method::SelfConsistency => {
            let result = run_self_consistency_with(
                topic,
                config,
                manifest.self_consistency_k,
                &backends,
                kit,
            )?;
            Ok(ResultRecord::from_run(&result, false))
        }
    }
}
