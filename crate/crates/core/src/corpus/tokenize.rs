//! Fallback tokenization: lower-case, split on whitespace, strip leading and
//! trailing punctuation, drop punctuation-only tokens. Character ranges given
//! as MWE spans are emitted as single units instead.

use crate::corpus::{Unit, UnitKind};
use crate::error::{Error, Result};

/// Strips leading/trailing non-alphanumeric characters. Internal punctuation
/// (apostrophes, hyphens) is preserved.
pub fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Splits `text` into units. `mwe_spans` are half-open character-offset
/// ranges; the characters inside each span become one unit. Text outside the
/// spans is whitespace-split with punctuation-only tokens dropped.
pub fn tokenize(text: &str, mwe_spans: &[(usize, usize)]) -> Result<Vec<Unit>> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans: Vec<(usize, usize)> = mwe_spans.to_vec();
    spans.sort_unstable();
    for span in &spans {
        if span.0 > span.1 || span.1 > chars.len() {
            return Err(Error::Span { start: span.0, end: span.1, reason: "out of bounds" });
        }
    }
    for pair in spans.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Span { start: pair[1].0, end: pair[1].1, reason: "overlaps a previous span" });
        }
    }

    let mut units = Vec::new();
    let mut cursor = 0;
    for &(start, end) in &spans {
        tokenize_segment(&chars, cursor, start, &mut units);
        if let Some(unit) = span_unit(&chars, start, end) {
            units.push(unit);
        }
        cursor = end;
    }
    tokenize_segment(&chars, cursor, chars.len(), &mut units);
    Ok(units)
}

/// `tokenize` with no MWE spans; cannot fail.
pub fn fallback_tokenize(text: &str) -> Vec<Unit> {
    tokenize(text, &[]).expect("empty span list is always valid")
}

fn tokenize_segment(chars: &[char], start: usize, end: usize, out: &mut Vec<Unit>) {
    let mut i = start;
    while i < end {
        while i < end && chars[i].is_whitespace() {
            i += 1;
        }
        let tok_start = i;
        while i < end && !chars[i].is_whitespace() {
            i += 1;
        }
        if tok_start == i {
            continue;
        }
        // Trim edge punctuation, tracking the kept character range.
        let mut s = tok_start;
        let mut e = i;
        while s < e && !chars[s].is_alphanumeric() {
            s += 1;
        }
        while e > s && !chars[e - 1].is_alphanumeric() {
            e -= 1;
        }
        if s < e {
            let surface: String = chars[s..e].iter().collect::<String>().to_lowercase();
            out.push(Unit { surface, kind: UnitKind::Token, source_span: (s, e) });
        }
    }
}

fn span_unit(chars: &[char], start: usize, end: usize) -> Option<Unit> {
    let raw: String = chars[start..end].iter().collect();
    let words: Vec<&str> = raw
        .split_whitespace()
        .map(strip_punct)
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return None;
    }
    let kind = if words.len() >= 2 { UnitKind::Mwe } else { UnitKind::Token };
    Some(Unit { surface: words.join(" ").to_lowercase(), kind, source_span: (start, end) })
}
