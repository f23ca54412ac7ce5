//! `mad`: batch front end for the debate engine.
//!
//! Exit codes: 0 on full success, 2 when some runs failed but the batch
//! completed, 1 on usage or configuration errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mad_core::harness::{
    ambiguity_counts, load_dataset, load_results, run_experiment_with_stop, write_report,
    BackendRegistry, ExperimentManifest,
};
use mad_core::orchestrator::extract_at_iteration;
use mad_core::prompts::PromptKit;
use mad_core::{BatchSummary, Method, TaskKind, TopicRecord, Transcript};

#[derive(Parser)]
#[command(name = "mad", version, about = "Multi-agent debate runner and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run multi-agent debates over a dataset.
    Debate(RunArgs),
    /// Run the self-reflection baseline.
    Reflect(RunArgs),
    /// Run the chain-of-thought baseline.
    Cot(RunArgs),
    /// Run the self-consistency baseline.
    Consistency(RunArgs),
    /// Recompute the metrics report from a run directory.
    Metrics(MetricsArgs),
    /// Re-render a stored transcript, optionally re-judging each iteration.
    Replay(ReplayArgs),
    /// Check a dataset file against its schema.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Qa,
    Mt,
}

impl From<TaskArg> for TaskKind {
    fn from(value: TaskArg) -> Self {
        match value {
            TaskArg::Qa => TaskKind::Qa,
            TaskArg::Mt => TaskKind::Translation,
        }
    }
}

fn parse_method(raw: &str) -> Result<Method, String> {
    raw.parse()
}

#[derive(Args)]
struct RunArgs {
    /// Experiment manifest (JSON); flags below override its fields.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Comma-separated method list overriding the subcommand's default.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    method: Option<Vec<Method>>,
    /// Tit-for-tat level (0..=3).
    #[arg(long)]
    level: Option<u8>,
    /// Number of debaters.
    #[arg(long)]
    debaters: Option<u32>,
    #[arg(long = "max-iters")]
    max_iters: Option<u32>,
    /// Self-consistency sample count.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Output directory for transcripts, results and the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit a single-line JSON summary on stdout.
    #[arg(long)]
    json: bool,
    /// Disable the adaptive break and always run to the iteration cap.
    #[arg(long = "force-full-rounds")]
    force_full_rounds: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory holding results.jsonl and transcripts/.
    #[arg(long)]
    runs: PathBuf,
    /// Dataset supplying gold answers for the accuracy figure.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Stored transcript (JSONL).
    #[arg(long)]
    transcript: PathBuf,
    /// Manifest providing the judge binding and dataset for re-judging.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Re-run the extractive judge after each complete iteration.
    #[arg(long = "re-judge")]
    re_judge: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    json: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Debate(args) => run_batch(args, Method::Mad),
        Command::Reflect(args) => run_batch(args, Method::SelfReflect),
        Command::Cot(args) => run_batch(args, Method::Cot),
        Command::Consistency(args) => run_batch(args, Method::SelfConsistency),
        Command::Metrics(args) => run_metrics(args),
        Command::Replay(args) => run_replay(args),
        Command::Validate(args) => run_validate(args),
    }
}

fn apply_overrides(manifest: &mut ExperimentManifest, args: &RunArgs, default_method: Method) {
    manifest.methods = args.method.clone().unwrap_or_else(|| vec![default_method]);
    if let Some(dataset) = &args.dataset {
        manifest.dataset_path = dataset.display().to_string();
    }
    if let Some(task) = args.task {
        manifest.task_kind = task.into();
    }
    if let Some(level) = args.level {
        manifest.debate.tit_for_tat_level = level;
    }
    if let Some(debaters) = args.debaters {
        manifest.debate.n_debaters = debaters;
    }
    if let Some(max_iters) = args.max_iters {
        manifest.debate.max_iterations = max_iters;
    }
    if let Some(k) = args.k {
        manifest.self_consistency_k = k;
    }
    if let Some(concurrency) = args.concurrency {
        manifest.concurrency = concurrency;
    }
    if let Some(out) = &args.out {
        manifest.output_dir = out.display().to_string();
    }
    if args.force_full_rounds {
        manifest.force_full_rounds = true;
    }
}

fn run_batch(args: RunArgs, default_method: Method) -> Result<i32> {
    let mut manifest = ExperimentManifest::from_path(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    apply_overrides(&mut manifest, &args, default_method);

    // Graceful drain: the first interrupt stops scheduling new runs and lets
    // in-flight ones finish; the persisted state stays consistent for resume.
    let stop = Arc::new(AtomicBool::new(false));
    let handler_stop = stop.clone();
    let _ = ctrlc::set_handler(move || {
        eprintln!("interrupt received; draining in-flight runs");
        handler_stop.store(true, Ordering::SeqCst);
    });

    let summary = run_experiment_with_stop(&manifest, &stop)?;
    print_summary(&summary, args.json);
    Ok(if summary.fully_succeeded() { 0 } else { 2 })
}

fn print_summary(summary: &BatchSummary, json: bool) {
    if json {
        let value = serde_json::json!({
            "executed": summary.executed,
            "skipped": summary.skipped,
            "failed": summary.failures.len(),
            "results_total": summary.results_total,
            "output_dir": summary.output_dir.display().to_string(),
        });
        println!("{value}");
        return;
    }
    println!(
        "executed {} run(s), skipped {} completed, {} failure(s); {} result(s) in {}",
        summary.executed,
        summary.skipped,
        summary.failures.len(),
        summary.results_total,
        summary.output_dir.display()
    );
    for failure in &summary.failures {
        println!(
            "  failed: {} / {} -> {}",
            failure.topic_id, failure.method, failure.error
        );
    }
}

fn load_gold(
    dataset: &Option<PathBuf>,
    task: Option<TaskArg>,
) -> Result<Option<BTreeMap<String, TopicRecord>>> {
    let Some(path) = dataset else { return Ok(None) };
    let task = task.ok_or_else(|| anyhow!("--dataset requires --task"))?;
    let records = load_dataset(path, task.into())?;
    Ok(Some(
        records.into_iter().map(|r| (r.id.clone(), r)).collect(),
    ))
}

fn run_metrics(args: MetricsArgs) -> Result<i32> {
    let results_path = args.runs.join("results.jsonl");
    if !results_path.exists() {
        bail!("no results.jsonl under {}", args.runs.display());
    }
    let results = load_results(&results_path)?;
    let gold = load_gold(&args.dataset, args.task)?;
    let report = write_report(&args.runs, &results, gold.as_ref())?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string(&report).context("serializing report")?
        );
    } else {
        println!(
            "report over {} run(s) written to {}",
            report.n_runs,
            args.runs.join("report.json").display()
        );
        println!(
            "  winners: aff {} / neg {} / tie {} / unknown {}",
            report.winner_counts.aff,
            report.winner_counts.neg,
            report.winner_counts.tie,
            report.winner_counts.unknown
        );
        if let Some(ratio) = report.cost_ratio {
            println!("  cost ratio (debate vs cot): {ratio:.3}");
        }
        if let Some(diversity) = report.diversity {
            println!("  diversity: {diversity:.2}");
        }
        if let Some(accuracy) = report.accuracy {
            println!("  accuracy: {accuracy:.4}");
        }
        if !report.disagreement_by_iteration.is_empty() {
            println!("  disagreement: {:?}", report.disagreement_by_iteration);
        }
    }
    Ok(0)
}

fn run_replay(args: ReplayArgs) -> Result<i32> {
    let transcript = Transcript::load_jsonl(&args.transcript)
        .with_context(|| format!("loading transcript {}", args.transcript.display()))?;

    if !args.json {
        println!(
            "debate {} on topic {} ({} utterances)",
            transcript.debate_id,
            transcript.topic_id,
            transcript.len()
        );
        for u in &transcript.utterances {
            println!("[{}] {}: {}", u.iteration, u.role.label(), u.text);
        }
    }
    for violation in transcript.validate() {
        eprintln!("ordering violation {violation}");
    }

    if !args.re_judge {
        if args.json {
            let value = serde_json::json!({
                "debate_id": transcript.debate_id,
                "topic_id": transcript.topic_id,
                "utterances": transcript.len(),
                "violations": transcript.validate().len(),
            });
            println!("{value}");
        }
        return Ok(0);
    }

    let manifest_path = args
        .manifest
        .as_ref()
        .ok_or_else(|| anyhow!("--re-judge requires --manifest for the judge binding"))?;
    let manifest = ExperimentManifest::from_path(manifest_path)?;
    let config = manifest.effective_config();
    let topic = find_topic(&manifest, &transcript.topic_id)?;
    let kit = match &manifest.template_dir {
        Some(dir) => PromptKit::with_overrides(Path::new(dir))?,
        None => PromptKit::default(),
    };
    let registry = BackendRegistry::new();
    let rounds = transcript.complete_iterations(config.n_debaters);
    for i in 1..=rounds {
        let backends = registry
            .role_backends(&config)
            .map_err(|e| anyhow!("building judge backend: {e}"))?;
        let judge = backends
            .judge()
            .map_err(|e| anyhow!("judge binding missing: {e}"))?;
        let decision = extract_at_iteration(&transcript, i, &config, &topic, judge, &kit)?;
        if args.json {
            let value = serde_json::json!({
                "iteration": i,
                "answer": decision.final_answer,
                "winner": decision.preferred_side,
                "parse_ok": decision.parse_ok,
            });
            println!("{value}");
        } else {
            println!(
                "extraction after iteration {i}: answer={:?} winner={:?}",
                decision.final_answer, decision.preferred_side
            );
        }
    }
    Ok(0)
}

fn find_topic(manifest: &ExperimentManifest, topic_id: &str) -> Result<TopicRecord> {
    let records = load_dataset(Path::new(&manifest.dataset_path), manifest.task_kind)?;
    records
        .into_iter()
        .find(|r| r.id == topic_id)
        .ok_or_else(|| anyhow!("topic '{topic_id}' not found in {}", manifest.dataset_path))
}

fn run_validate(args: ValidateArgs) -> Result<i32> {
    let task: TaskKind = args.task.into();
    let records = load_dataset(&args.dataset, task)?;
    if args.json {
        let mut value = serde_json::json!({
            "records": records.len(),
            "dataset": args.dataset.display().to_string(),
        });
        if task == TaskKind::Translation {
            value["ambiguity_counts"] = serde_json::to_value(ambiguity_counts(&records))?;
        }
        println!("{value}");
    } else {
        println!("{} records", records.len());
        if task == TaskKind::Translation {
            for (kind, count) in ambiguity_counts(&records) {
                println!("  {kind}: {count}");
            }
        }
    }
    Ok(0)
}
