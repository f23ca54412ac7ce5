//! Quantitative analyses over run results and debate outcomes: disagreement
//! curves, Self-BLEU diversity, winner counts, token-cost ratios, and QA
//! accuracy.

mod bleu;

pub use bleu::{diversity, self_bleu, tokenize};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::normalize_answer;
use crate::orchestrator::DebateOutcome;
use crate::types::{PreferredSide, RunResult, TopicRecord};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run {run_index} has {have} per-iteration answers, need {need}")]
    LengthMismatch {
        run_index: usize,
        have: usize,
        need: usize,
    },
    #[error("no gold answer for topic '{0}'")]
    MissingGold(String),
    #[error("record '{0}' is missing the correct/incorrect references")]
    MissingReferences(String),
    #[error("baseline run set is empty or has zero completion tokens")]
    EmptyBaseline,
    #[error("run set is empty")]
    EmptyRuns,
}

/// Tally of final verdicts across a batch of debates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WinnerCounts {
    pub aff: u64,
    pub neg: u64,
    pub tie: u64,
    pub unknown: u64,
}

impl WinnerCounts {
    pub fn total(&self) -> u64 {
        self.aff + self.neg + self.tie + self.unknown
    }

    pub fn add(&mut self, side: PreferredSide) {
        match side {
            PreferredSide::Affirmative => self.aff += 1,
            PreferredSide::Negative => self.neg += 1,
            PreferredSide::Tie => self.tie += 1,
            PreferredSide::Unknown => self.unknown += 1,
        }
    }
}

/// Tally of which side the judge chose across outcomes.
pub fn winner_counts(outcomes: &[DebateOutcome]) -> WinnerCounts {
    winner_counts_from_sides(outcomes.iter().map(|o| o.final_decision.preferred_side))
}

pub fn winner_counts_from_sides(sides: impl IntoIterator<Item = PreferredSide>) -> WinnerCounts {
    let mut counts = WinnerCounts::default();
    for side in sides {
        counts.add(side);
    }
    counts
}

/// For each iteration i in [2, rounds], the fraction of runs whose normalized
/// answer changed between iterations i-1 and i. Output length is rounds - 1.
/// Uses each run's recorded per-iteration answers (the judge's per-round
/// answer for debates); see [`debater_stances`] for the debater-vs-debater
/// variant of the proxy.
pub fn disagreement_curve(runs: &[RunResult], rounds: usize) -> Result<Vec<f64>, MetricsError> {
    let sequences: Vec<Vec<String>> = runs
        .iter()
        .map(|r| r.per_iteration_answers.clone())
        .collect();
    disagreement_curve_from_sequences(&sequences, rounds)
}

/// The same adjacent-iteration disagreement rate over raw per-iteration
/// answer sequences; answers are normalized before comparison.
pub fn disagreement_curve_from_sequences(
    sequences: &[Vec<String>],
    rounds: usize,
) -> Result<Vec<f64>, MetricsError> {
    if sequences.is_empty() {
        return Err(MetricsError::EmptyRuns);
    }
    for (run_index, sequence) in sequences.iter().enumerate() {
        if sequence.len() < rounds {
            return Err(MetricsError::LengthMismatch {
                run_index,
                have: sequence.len(),
                need: rounds,
            });
        }
    }
    let normalized: Vec<Vec<String>> = sequences
        .iter()
        .map(|s| s[..rounds].iter().map(|a| normalize_answer(a)).collect())
        .collect();
    let mut curve = Vec::with_capacity(rounds.saturating_sub(1));
    for i in 1..rounds {
        let disagreements = normalized.iter().filter(|s| s[i] != s[i - 1]).count();
        curve.push(disagreements as f64 / normalized.len() as f64);
    }
    Ok(curve)
}

/// One debater side's per-iteration stance sequence, each entry the
/// normalized utterance text. Feeding side 2's sequence into
/// [`disagreement_curve_from_sequences`] gives the debater-based variant of
/// the disagreement proxy.
pub fn debater_stances(transcript: &crate::transcript::Transcript, side: u32) -> Vec<String> {
    transcript
        .utterances
        .iter()
        .filter(|u| u.role.side_index() == Some(side))
        .map(|u| normalize_answer(&u.text))
        .collect()
}

/// Sum of generated tokens of the method runs over the baseline runs.
pub fn token_cost_ratio(
    method_runs: &[RunResult],
    baseline_runs: &[RunResult],
) -> Result<f64, MetricsError> {
    if method_runs.is_empty() {
        return Err(MetricsError::EmptyRuns);
    }
    let baseline: u64 = baseline_runs.iter().map(|r| r.total_completion_tokens).sum();
    if baseline_runs.is_empty() || baseline == 0 {
        return Err(MetricsError::EmptyBaseline);
    }
    let method: u64 = method_runs.iter().map(|r| r.total_completion_tokens).sum();
    Ok(method as f64 / baseline as f64)
}

/// Fraction of results whose normalized final answer matches the normalized
/// gold answer. An empty result set is an error, not zero accuracy.
pub fn qa_accuracy(
    results: &[RunResult],
    gold: &BTreeMap<String, TopicRecord>,
) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyRuns);
    }
    let mut matches = 0usize;
    for result in results {
        let record = gold
            .get(&result.topic_id)
            .ok_or_else(|| MetricsError::MissingGold(result.topic_id.clone()))?;
        let gold_answer = record
            .correct_answer
            .as_ref()
            .ok_or_else(|| MetricsError::MissingGold(result.topic_id.clone()))?;
        if normalize_answer(&result.final_answer) == normalize_answer(gold_answer) {
            matches += 1;
        }
    }
    Ok(matches as f64 / results.len() as f64)
}

/// MT output classification relative to a record's reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtLabel {
    MatchesCorrect,
    MatchesIncorrect,
    Neither,
}

/// Classifies an output by which reference shares more of its distinguishing
/// tokens (tokens not common to both references) with the output. Ties or no
/// overlap give `Neither`.
pub fn classify_mt_output(output: &str, record: &TopicRecord) -> Result<MtLabel, MetricsError> {
    let (Some(correct), Some(incorrect)) = (&record.correct_answer, &record.incorrect_answer)
    else {
        return Err(MetricsError::MissingReferences(record.id.clone()));
    };
    let out: HashSet<String> = tokenize(output).into_iter().collect();
    let cor: HashSet<String> = tokenize(correct).into_iter().collect();
    let inc: HashSet<String> = tokenize(incorrect).into_iter().collect();
    let distinguishing_correct: HashSet<&String> = cor.difference(&inc).collect();
    let distinguishing_incorrect: HashSet<&String> = inc.difference(&cor).collect();
    let overlap_correct = distinguishing_correct.iter().filter(|t| out.contains(**t)).count();
    let overlap_incorrect = distinguishing_incorrect
        .iter()
        .filter(|t| out.contains(**t))
        .count();
    Ok(if overlap_correct > overlap_incorrect {
        MtLabel::MatchesCorrect
    } else if overlap_incorrect > overlap_correct {
        MtLabel::MatchesIncorrect
    } else {
        MtLabel::Neither
    })
}

/// The aggregate report written alongside a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_runs: usize,
    /// Rate of answer changes between adjacent iterations, starting at
    /// iteration 2; empty when no run carries at least two answers.
    pub disagreement_by_iteration: Vec<f64>,
    /// Mean diversity over the runs that expose a candidate pair.
    pub diversity: Option<f64>,
    pub winner_counts: WinnerCounts,
    /// Generated-token ratio of debate runs over chain-of-thought runs.
    pub cost_ratio: Option<f64>,
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// `iteration,rate` rows for Figure-style disagreement charts; iteration
    /// labels start at 2.
    pub fn disagreement_csv(&self) -> String {
        let mut out = String::from("iteration,rate\n");
        for (i, rate) in self.disagreement_by_iteration.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 2, rate));
        }
        out
    }
}
