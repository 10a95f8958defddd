//! Character spans in a sentence and their WordPiece token indices.
//!
//! Offsets are counted in Unicode scalar values (`char`s), not bytes, so
//! they agree with offsets produced by Python tooling.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const UNKNOWN_TOKEN: &str = "[UNK]";
const CONTINUATION_PREFIX: &str = "##";
const ARTICLES: [&str; 3] = ["the ", "a ", "an "];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("candidate {0:?} not found in sentence")]
    CandidateNotFound(String),
    #[error("alignment failed: {0}")]
    Alignment(String),
    #[error("invalid span {start}..{end} for sentence of {len} chars")]
    BadSpan {
        start: usize,
        end: usize,
        len: usize,
    },
}

/// Half-open character range `start..end` of `sentence` and its text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
}

impl CharSpan {
    /// Cuts `start..end` (char offsets) out of `sentence`.
    pub fn new(sentence: &str, start: usize, end: usize) -> Result<Self, AlignError> {
        let len = sentence.chars().count();
        if start >= end || end > len {
            return Err(AlignError::BadSpan { start, end, len });
        }
        let surface = sentence.chars().skip(start).take(end - start).collect();
        Ok(CharSpan {
            start,
            end,
            surface,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Contiguous run of token indices covering a character span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanAlignment {
    pub char_span: CharSpan,
    pub token_indices: Vec<usize>,
}

impl AsRef<[usize]> for SpanAlignment {
    fn as_ref(&self) -> &[usize] {
        &self.token_indices
    }
}

/// Which occurrence of a repeated candidate string to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccurrencePolicy {
    First,
    Last,
    /// Closest occurrence ending at or before the pronoun; falls back to the
    /// first occurrence after it.
    #[default]
    NearestBeforePronoun,
}

/// Punctuation splits words the same way the WordPiece pre-tokenizer does.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || (!c.is_alphanumeric() && !c.is_whitespace() && !c.is_control() && !is_combining_mark(c))
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// All occurrences of `needle` in `hay`, case-insensitive, with each run of
/// whitespace in the needle matching any non-empty run of whitespace in the
/// haystack, and both ends on word boundaries.
fn find_occurrences(hay: &[char], needle: &str) -> Vec<(usize, usize)> {
    let words: Vec<Vec<char>> = needle
        .split_whitespace()
        .map(|w| w.chars().collect())
        .collect();
    if words.is_empty() {
        return Vec::new();
    }
    let boundary = |i: usize| -> bool {
        i == 0 || i >= hay.len() || !(is_word_char(hay[i - 1]) && is_word_char(hay[i]))
    };

    let mut found = Vec::new();
    for start in 0..hay.len() {
        if !boundary(start) {
            continue;
        }
        let mut pos = start;
        let mut ok = true;
        for (wi, word) in words.iter().enumerate() {
            if wi > 0 {
                let ws_start = pos;
                while pos < hay.len() && hay[pos].is_whitespace() {
                    pos += 1;
                }
                if pos == ws_start {
                    ok = false;
                    break;
                }
            }
            for &wc in word {
                if pos < hay.len() && chars_eq_ignore_case(hay[pos], wc) {
                    pos += 1;
                } else {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        if ok && boundary(pos) {
            found.push((start, pos));
        }
    }
    found
}

fn strip_article(text: &str) -> Option<&str> {
    let lower = text.to_lowercase();
    ARTICLES.iter().find_map(|a| {
        if lower.starts_with(a) && text.is_char_boundary(a.len()) {
            Some(text[a.len()..].trim_start())
        } else {
            None
        }
    })
}

fn head_word(text: &str) -> Option<&str> {
    let last = text.split_whitespace().last()?;
    let trimmed = last.trim_matches(is_punctuation);
    (!trimmed.is_empty()).then_some(trimmed)
}

/// Finds `candidate_text` in `sentence`.
///
/// Matching is case-insensitive, whitespace-normalised and anchored on word
/// boundaries; occurrences overlapping the pronoun are ignored. When the full
/// text is absent, a leading article is dropped, then only the final word is
/// tried.
pub fn locate_candidate(
    sentence: &str,
    candidate_text: &str,
    pronoun_span: &CharSpan,
    policy: OccurrencePolicy,
) -> Result<CharSpan, AlignError> {
    let hay: Vec<char> = sentence.chars().collect();
    let not_found = || AlignError::CandidateNotFound(candidate_text.to_string());
    if candidate_text.trim().is_empty() || hay.is_empty() {
        return Err(not_found());
    }

    let attempts = [
        Some(candidate_text),
        strip_article(candidate_text),
        head_word(candidate_text),
    ];
    for needle in attempts.into_iter().flatten() {
        let occurrences: Vec<(usize, usize)> = find_occurrences(&hay, needle)
            .into_iter()
            .filter(|&(s, e)| !(s < pronoun_span.end && pronoun_span.start < e))
            .collect();
        let pick = match policy {
            OccurrencePolicy::First => occurrences.first().copied(),
            OccurrencePolicy::Last => occurrences.last().copied(),
            OccurrencePolicy::NearestBeforePronoun => occurrences
                .iter()
                .filter(|&&(_, e)| e <= pronoun_span.start)
                .max_by_key(|&&(_, e)| e)
                .or_else(|| occurrences.iter().find(|&&(s, _)| s >= pronoun_span.end))
                .copied(),
        };
        if let Some((start, end)) = pick {
            return CharSpan::new(sentence, start, end);
        }
    }
    Err(not_found())
}

/// Special tokens other than `[UNK]` never cover sentence text.
pub fn is_boundary_token(token: &str) -> bool {
    let bracketed = token.len() > 2 && token.starts_with('[') && token.ends_with(']');
    (bracketed && token != UNKNOWN_TOKEN) || matches!(token, "<s>" | "</s>" | "<pad>")
}

fn fold_chars(c: char, casefold: bool, out: &mut Vec<char>) {
    if casefold {
        for lc in c.to_lowercase() {
            out.extend(lc.nfd().filter(|&d| !is_combining_mark(d)));
        }
    } else {
        out.push(c);
    }
}

/// Character range (`start..end`, char offsets) covered by each token.
///
/// Boundary tokens map to `None`. Every other token is matched greedily
/// left to right against the sentence with whitespace skipped between
/// tokens; `##` continuation prefixes are stripped and `[UNK]` consumes one
/// word (or one punctuation character). Text left over after the last token
/// is an error.
pub fn token_char_ranges(
    tokens: &[String],
    sentence: &str,
    casefold: bool,
) -> Result<Vec<Option<(usize, usize)>>, AlignError> {
    // normalised stream, each char tagged with its source offset
    let mut stream: Vec<(char, usize)> = Vec::new();
    let mut buf = Vec::new();
    for (i, c) in sentence.chars().enumerate() {
        buf.clear();
        fold_chars(c, casefold, &mut buf);
        stream.extend(buf.iter().map(|&d| (d, i)));
    }

    let skip_ws = |pos: &mut usize| {
        while *pos < stream.len() && stream[*pos].0.is_whitespace() {
            *pos += 1;
        }
    };

    let mut ranges = Vec::with_capacity(tokens.len());
    let mut pos = 0usize;
    let mut piece = Vec::new();
    for (ti, token) in tokens.iter().enumerate() {
        if is_boundary_token(token) {
            ranges.push(None);
            continue;
        }
        skip_ws(&mut pos);
        if pos >= stream.len() {
            return Err(AlignError::Alignment(format!(
                "token {ti} ({token:?}) has no remaining sentence text"
            )));
        }
        let start = pos;
        if token == UNKNOWN_TOKEN {
            if is_punctuation(stream[pos].0) {
                pos += 1;
            } else {
                while pos < stream.len()
                    && !stream[pos].0.is_whitespace()
                    && !is_punctuation(stream[pos].0)
                {
                    pos += 1;
                }
            }
        } else {
            let text = token.strip_prefix(CONTINUATION_PREFIX).unwrap_or(token);
            piece.clear();
            for c in text.chars() {
                fold_chars(c, casefold, &mut piece);
            }
            if piece.is_empty() {
                return Err(AlignError::Alignment(format!(
                    "token {ti} ({token:?}) is empty"
                )));
            }
            for &pc in &piece {
                if pos < stream.len() && stream[pos].0 == pc {
                    pos += 1;
                } else {
                    let found: String = stream[start..stream.len().min(start + piece.len())]
                        .iter()
                        .map(|&(c, _)| c)
                        .collect();
                    return Err(AlignError::Alignment(format!(
                        "token {ti} ({token:?}) does not match sentence text {found:?}"
                    )));
                }
            }
        }
        ranges.push(Some((stream[start].1, stream[pos - 1].1 + 1)));
    }
    skip_ws(&mut pos);
    if pos < stream.len() {
        let rest: String = stream[pos..].iter().map(|&(c, _)| c).collect();
        return Err(AlignError::Alignment(format!(
            "sentence text {rest:?} not covered by any token"
        )));
    }
    Ok(ranges)
}

/// Token run covering `span`, given precomputed [`token_char_ranges`].
pub fn align_with_ranges(
    ranges: &[Option<(usize, usize)>],
    span: &CharSpan,
) -> Result<SpanAlignment, AlignError> {
    let indices: Vec<usize> = ranges
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match r {
            Some((s, e)) if *s < span.end && span.start < *e => Some(i),
            _ => None,
        })
        .collect();
    let (first, last) = match (indices.first(), indices.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => {
            return Err(AlignError::Alignment(format!(
                "no token covers {:?} at {}..{}",
                span.surface, span.start, span.end
            )))
        }
    };
    if last - first + 1 != indices.len() {
        return Err(AlignError::Alignment(format!(
            "tokens covering {:?} are not contiguous",
            span.surface
        )));
    }

    let lead = span
        .surface
        .chars()
        .take_while(|c| c.is_whitespace())
        .count();
    let trail = span
        .surface
        .chars()
        .rev()
        .take_while(|c| c.is_whitespace())
        .count();
    let (s_first, _) = ranges[first].expect("selected tokens have ranges");
    let (_, e_last) = ranges[last].expect("selected tokens have ranges");
    if s_first > span.start + lead || e_last + trail < span.end {
        return Err(AlignError::Alignment(format!(
            "tokens {first}..={last} cover {s_first}..{e_last}, not all of {}..{}",
            span.start, span.end
        )));
    }
    Ok(SpanAlignment {
        char_span: span.clone(),
        token_indices: indices,
    })
}

/// Minimal contiguous token run whose characters cover `span`.
pub fn align_span(
    tokens: &[String],
    sentence: &str,
    span: &CharSpan,
    casefold: bool,
) -> Result<SpanAlignment, AlignError> {
    let ranges = token_char_ranges(tokens, sentence, casefold)?;
    align_with_ranges(&ranges, span)
}
