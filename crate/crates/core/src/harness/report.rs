//! Aggregate report construction from persisted artifacts. Reports are
//! rebuilt from disk so a resumed batch and a fresh one produce identical
//! bytes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::metrics::{
    self, diversity, winner_counts_from_sides, MetricsReport, WinnerCounts,
};
use crate::transcript::Transcript;
use crate::types::{Method, TopicRecord};

use super::{transcript_rel_path, HarnessError, ResultRecord};

/// Builds the batch report from result records plus whatever transcripts are
/// on disk under `dir`. `gold` enables the accuracy figure.
pub fn build_report(
    dir: &Path,
    results: &[ResultRecord],
    gold: Option<&BTreeMap<String, TopicRecord>>,
) -> MetricsReport {
    let mut sorted: Vec<&ResultRecord> = results.iter().collect();
    sorted.sort_by(|a, b| (&a.topic_id, a.method).cmp(&(&b.topic_id, b.method)));

    // Disagreement over every run that carries at least two per-iteration
    // answers, truncated to the shortest such run.
    let eligible: Vec<_> = sorted
        .iter()
        .filter(|r| r.per_iteration_answers.len() >= 2)
        .map(|r| r.to_run_result())
        .collect();
    let disagreement_by_iteration = eligible
        .iter()
        .map(|r| r.per_iteration_answers.len())
        .min()
        .and_then(|rounds| metrics::disagreement_curve(&eligible, rounds).ok())
        .unwrap_or_default();

    // Diversity candidate pairs: for debates, the affirmative's and the
    // negative side's first responses; for self-reflection, the base and
    // final answers.
    let mut diversity_scores = Vec::new();
    for record in &sorted {
        match record.method {
            Method::Mad => {
                let path = dir.join(transcript_rel_path(&record.topic_id, record.method));
                if let Ok(transcript) = Transcript::load_jsonl(&path) {
                    if let Some((c1, c2)) = debate_candidates(&transcript) {
                        diversity_scores.push(diversity(&c1, &c2));
                    }
                }
            }
            Method::SelfReflect => {
                if let (Some(first), Some(last)) = (
                    record.per_iteration_answers.first(),
                    record.per_iteration_answers.last(),
                ) {
                    if record.per_iteration_answers.len() >= 2 {
                        diversity_scores.push(diversity(first, last));
                    }
                }
            }
            _ => {}
        }
    }
    let diversity_mean = if diversity_scores.is_empty() {
        None
    } else {
        Some(diversity_scores.iter().sum::<f64>() / diversity_scores.len() as f64)
    };

    let winner_counts: WinnerCounts = winner_counts_from_sides(
        sorted
            .iter()
            .filter(|r| r.method == Method::Mad)
            .map(|r| r.winner.unwrap_or_default()),
    );

    let mad_runs: Vec<_> = sorted
        .iter()
        .filter(|r| r.method == Method::Mad)
        .map(|r| r.to_run_result())
        .collect();
    let cot_runs: Vec<_> = sorted
        .iter()
        .filter(|r| r.method == Method::Cot)
        .map(|r| r.to_run_result())
        .collect();
    let cost_ratio = metrics::token_cost_ratio(&mad_runs, &cot_runs).ok();

    let accuracy = gold.and_then(|gold| {
        let runs: Vec<_> = sorted.iter().map(|r| r.to_run_result()).collect();
        metrics::qa_accuracy(&runs, gold).ok()
    });

    MetricsReport {
        n_runs: results.len(),
        disagreement_by_iteration,
        diversity: diversity_mean,
        winner_counts,
        cost_ratio,
        accuracy,
    }
}

/// First affirmative and first side-2 utterance texts of a debate.
fn debate_candidates(transcript: &Transcript) -> Option<(String, String)> {
    let first_for = |side: u32| {
        transcript
            .utterances
            .iter()
            .find(|u| u.role.side_index() == Some(side))
            .map(|u| u.text.clone())
    };
    Some((first_for(1)?, first_for(2)?))
}

/// Writes `report.json` and `disagreement.csv` into `dir` and returns the
/// report.
pub fn write_report(
    dir: &Path,
    results: &[ResultRecord],
    gold: Option<&BTreeMap<String, TopicRecord>>,
) -> Result<MetricsReport, HarnessError> {
    let report = build_report(dir, results, gold);
    let write = |name: &str, body: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write("report.json", report.to_json())?;
    write("disagreement.csv", report.disagreement_csv())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PreferredSide, TaskKind};

    fn record(topic: &str, method: Method, answers: &[&str], tokens: u64) -> ResultRecord {
        ResultRecord {
            broke_early: false,
            final_answer: answers.last().unwrap_or(&"").to_string(),
            method,
            per_iteration_answers: answers.iter().map(|s| s.to_string()).collect(),
            rounds_used: answers.len() as u32,
            topic_id: topic.to_string(),
            total_completion_tokens: tokens,
            winner: (method == Method::Mad).then_some(PreferredSide::Negative),
        }
    }

    #[test]
    fn report_aggregates_costs_winners_and_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![
            record("a", Method::Mad, &["4", "4"], 246),
            record("a", Method::Cot, &["4"], 100),
            record("b", Method::Mad, &["5", "4"], 246),
            record("b", Method::Cot, &["5"], 100),
        ];
        let mut gold = BTreeMap::new();
        for id in ["a", "b"] {
            let mut t = TopicRecord::new(id, TaskKind::Qa, "q");
            t.correct_answer = Some("4".to_string());
            gold.insert(id.to_string(), t);
        }
        let report = build_report(dir.path(), &results, Some(&gold));
        assert_eq!(report.n_runs, 4);
        assert_eq!(report.winner_counts.neg, 2);
        assert!((report.cost_ratio.unwrap() - 2.46).abs() < 1e-12);
        // 3 of 4 final answers match the gold "4".
        assert!((report.accuracy.unwrap() - 0.75).abs() < 1e-12);
        // Two mad runs with 2 answers each: disagreement at iteration 2 is 0.5.
        assert_eq!(report.disagreement_by_iteration, vec![0.5]);
    }

    #[test]
    fn report_is_deterministic_regardless_of_record_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut results = vec![
            record("a", Method::Mad, &["1", "2"], 50),
            record("b", Method::Mad, &["2", "2"], 70),
            record("a", Method::Cot, &["1"], 30),
        ];
        let forward = build_report(dir.path(), &results, None);
        results.reverse();
        let backward = build_report(dir.path(), &results, None);
        assert_eq!(forward.to_json(), backward.to_json());
    }

    #[test]
    fn reflect_diversity_uses_first_and_last_answers() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![record(
            "a",
            Method::SelfReflect,
            &["eat up an enemy division", "eat up an enemy division"],
            10,
        )];
        let report = build_report(dir.path(), &results, None);
        assert!(report.diversity.unwrap().abs() < 1e-9);
    }

    #[test]
    fn write_report_emits_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![record("a", Method::Mad, &["1", "2", "2"], 10)];
        write_report(dir.path(), &results, None).unwrap();
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(json.contains("\"n_runs\": 1"));
        let csv = std::fs::read_to_string(dir.path().join("disagreement.csv")).unwrap();
        assert_eq!(csv, "iteration,rate\n2,1\n3,0\n");
    }
}
