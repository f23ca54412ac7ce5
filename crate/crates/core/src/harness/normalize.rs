//! Answer normalization: extracts the final answer span from free-form model
//! output and canonicalizes it for comparison.

use std::sync::OnceLock;

use regex::Regex;

fn answer_span_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:the\s+)?answer\s*(?:is|:)\s*").expect("static regex"))
}

fn numeric_core_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[^0-9+\-]*([+-]?\d+(?:\.\d+)?)(?:/(\d+(?:\.\d+)?))?").expect("static regex")
    })
}

/// Canonicalizes an answer string:
/// - takes the span after the last "answer is" / "answer:" marker, else the
///   whole text;
/// - if the span ends in a numeric token (fractions `a/b` and decimals both
///   count; surrounding punctuation and units are ignored), renders it as a
///   decimal with at most six significant digits;
/// - otherwise lowercases, strips punctuation, and collapses whitespace.
///
/// Total and idempotent. Two passes guarantee the fixpoint: a cleaned
/// non-numeric span can expose a numeric token that punctuation hid before.
pub fn normalize_answer(text: &str) -> String {
    normalize_once(&normalize_once(text))
}

fn normalize_once(text: &str) -> String {
    let span = match answer_span_re().find_iter(text).last() {
        Some(m) => &text[m.end()..],
        None => text,
    };
    let span = span.trim();

    // Scan tokens from the end for the last parseable numeric value.
    for token in span.split_whitespace().rev() {
        if !token.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        if let Some(value) = parse_numeric_token(token) {
            return render_numeric(value);
        }
    }

    let mut cleaned = String::with_capacity(span.len());
    let mut pending_space = false;
    for c in span.chars().flat_map(|c| c.to_lowercase()) {
        if c.is_alphanumeric() {
            if pending_space && !cleaned.is_empty() {
                cleaned.push(' ');
            }
            pending_space = false;
            cleaned.push(c);
        } else {
            pending_space = true;
        }
    }
    cleaned
}

fn parse_numeric_token(token: &str) -> Option<f64> {
    let captures = numeric_core_re().captures(token)?;
    let numerator: f64 = captures.get(1)?.as_str().parse().ok()?;
    let value = match captures.get(2) {
        Some(denominator) => {
            let d: f64 = denominator.as_str().parse().ok()?;
            // A zero denominator is junk; keep the leading number.
            if d == 0.0 {
                numerator
            } else {
                numerator / d
            }
        }
        None => numerator,
    };
    value.is_finite().then_some(value)
}

/// Renders with at most six significant digits, trimming trailing zeros via
/// the shortest-round-trip float display.
fn render_numeric(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = 5 - magnitude;
    let rounded = if decimals >= 0 {
        let factor = 10f64.powi(decimals.min(300));
        (value * factor).round() / factor
    } else {
        let factor = 10f64.powi((-decimals).min(300));
        (value / factor).round() * factor
    };
    if rounded.is_finite() {
        format!("{rounded}")
    } else {
        format!("{value}")
    }
}
