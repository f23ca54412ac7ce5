//! Self-BLEU and the diversity score derived from it.
//!
//! BLEU here is brevity penalty times the geometric mean of modified n-gram
//! precisions for n = 1..4, on the 0..100 scale. A zero precision is
//! substituted with epsilon = 0.1 before the mean, and n-gram orders for
//! which the hypothesis has no n-grams at all are excluded from the mean.
//! Tokenization lowercases, splits on whitespace and punctuation boundaries,
//! and treats CJK codepoints as single-character tokens.

use std::collections::HashMap;

const MAX_ORDER: usize = 4;
const EPSILON: f64 = 0.1;

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{3040}'..='\u{30FF}'
    )
}

/// Lowercased tokens: alphanumeric runs, with CJK characters standing alone.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(|c| c.to_lowercase()) {
        if is_cjk(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else if c.is_alphanumeric() {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u32> {
    let mut counts: HashMap<&[String], u32> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Directional BLEU of `hypothesis` against `reference`, scaled to [0, 100].
fn bleu(hypothesis: &[String], reference: &[String]) -> f64 {
    if hypothesis.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0u32;
    for n in 1..=MAX_ORDER {
        if hypothesis.len() < n {
            break;
        }
        let total = (hypothesis.len() - n + 1) as f64;
        let ref_counts = ngram_counts(reference, n);
        let hyp_counts = ngram_counts(hypothesis, n);
        let clipped: u32 = hyp_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped == 0 {
            EPSILON
        } else {
            100.0 * f64::from(clipped) / total
        };
        log_sum += precision.ln();
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let geo_mean = (log_sum / f64::from(orders)).exp();
    let bp = if hypothesis.len() > reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / hypothesis.len() as f64).exp()
    };
    bp * geo_mean
}

/// Symmetric mean of the two directional BLEU scores, in [0, 100].
/// Identical token sequences (including two empty strings) score exactly 100.
pub fn self_bleu(c1: &str, c2: &str) -> f64 {
    let t1 = tokenize(c1);
    let t2 = tokenize(c2);
    if t1 == t2 {
        return 100.0;
    }
    (bleu(&t1, &t2) + bleu(&t2, &t1)) / 2.0
}

/// `100 - self_bleu`: 0 for identical candidates, near 100 for disjoint ones.
pub fn diversity(c1: &str, c2: &str) -> f64 {
    100.0 - self_bleu(c1, c2)
}
