//! Benchmark instances: the Winograd XML collection layout and canonical JSONL.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::CharSpan;

pub const MIN_CANDIDATES: usize = 2;
pub const MAX_CANDIDATES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("schema {schema}: missing {field}")]
    MissingField { schema: usize, field: &'static str },
    #[error("schema {schema}: bad answer letter {letter:?}")]
    BadAnswerLetter { schema: usize, letter: String },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("instance {id}: pronoun {pronoun:?} not found at offset {start}")]
    SpanMismatch {
        id: String,
        pronoun: String,
        start: usize,
    },
    #[error("instance {id}: {reason}")]
    InvalidInstance { id: String, reason: String },
}

/// Benchmark an instance belongs to, derived from its id prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Wsc273,
    Pdp60,
    Custom,
}

impl Source {
    pub fn id_prefix(self) -> &'static str {
        match self {
            Source::Wsc273 => "wsc273",
            Source::Pdp60 => "pdp60",
            Source::Custom => "custom",
        }
    }

    pub fn from_id(id: &str) -> Source {
        match id.split_once('-').map(|(p, _)| p) {
            Some("wsc273") => Source::Wsc273,
            Some("pdp60") => Source::Pdp60,
            _ => Source::Custom,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::Wsc273 => "WSC273",
            Source::Pdp60 => "PDP60",
            Source::Custom => "CUSTOM",
        }
    }
}

/// One pronoun-resolution question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaInstance {
    pub id: String,
    pub sentence: String,
    pub pronoun: CharSpan,
    pub candidate_texts: Vec<String>,
    pub gold_index: Option<usize>,
}

impl SchemaInstance {
    /// Validated constructor.
    pub fn new(
        id: impl Into<String>,
        sentence: impl Into<String>,
        pronoun: &str,
        pronoun_start: usize,
        candidate_texts: Vec<String>,
        gold_index: Option<usize>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        let sentence = sentence.into();
        let end = pronoun_start + pronoun.chars().count();
        let mismatch = || DatasetError::SpanMismatch {
            id: id.clone(),
            pronoun: pronoun.to_string(),
            start: pronoun_start,
        };
        let span = CharSpan::new(&sentence, pronoun_start, end).map_err(|_| mismatch())?;
        if span.surface != pronoun {
            return Err(mismatch());
        }
        let instance = SchemaInstance {
            id,
            sentence,
            pronoun: span,
            candidate_texts,
            gold_index,
        };
        instance.check()?;
        Ok(instance)
    }

    pub fn source(&self) -> Source {
        Source::from_id(&self.id)
    }

    /// Checks the record invariants.
    pub fn check(&self) -> Result<(), DatasetError> {
        let invalid = |reason: String| DatasetError::InvalidInstance {
            id: self.id.clone(),
            reason,
        };
        let m = self.candidate_texts.len();
        if !(MIN_CANDIDATES..=MAX_CANDIDATES).contains(&m) {
            return Err(invalid(format!(
                "{m} candidates, expected {MIN_CANDIDATES}..={MAX_CANDIDATES}"
            )));
        }
        if let Some(g) = self.gold_index {
            if g >= m {
                return Err(invalid(format!(
                    "gold index {g} out of range for {m} candidates"
                )));
            }
        }
        if self.candidate_texts.iter().any(|c| c.trim().is_empty()) {
            return Err(invalid("empty candidate text".into()));
        }
        match CharSpan::new(&self.sentence, self.pronoun.start, self.pronoun.end) {
            Ok(span) if span == self.pronoun => Ok(()),
            _ => Err(DatasetError::SpanMismatch {
                id: self.id.clone(),
                pronoun: self.pronoun.surface.clone(),
                start: self.pronoun.start,
            }),
        }
    }
}

/// Collapses whitespace runs and drops spaces before `. , ! ? '`.
pub fn normalize_ws(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = String::with_capacity(collapsed.len());
    for c in collapsed.chars() {
        if is_tight_punct(c) && out.ends_with(' ') {
            out.pop();
        }
        out.push(c);
    }
    out
}

fn is_tight_punct(c: char) -> bool {
    matches!(c, '.' | ',' | '!' | '?' | '\'')
}

/// Joins the three pieces of a schema text; returns the sentence and the
/// pronoun's char offset.
fn assemble(txt1: &str, pron: &str, txt2: &str) -> (String, String, usize) {
    let head = normalize_ws(txt1);
    let pron = normalize_ws(pron);
    let tail = normalize_ws(txt2);
    let mut sentence = head;
    if !sentence.is_empty() {
        sentence.push(' ');
    }
    let start = sentence.chars().count();
    sentence.push_str(&pron);
    if !tail.is_empty() {
        if !tail.starts_with(is_tight_punct) {
            sentence.push(' ');
        }
        sentence.push_str(&tail);
    }
    (sentence, pron, start)
}

fn element_text(node: roxmltree::Node) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect()
}

fn child<'a, 'input>(
    node: roxmltree::Node<'a, 'input>,
    name: &str,
) -> Option<roxmltree::Node<'a, 'input>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn answer_index(schema: usize, raw: &str, m: usize) -> Result<usize, DatasetError> {
    let bad = || DatasetError::BadAnswerLetter {
        schema,
        letter: raw.to_string(),
    };
    let trimmed = raw
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation());
    let mut chars = trimmed.chars();
    let letter = match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => c.to_ascii_uppercase(),
        _ => return Err(bad()),
    };
    let index = (letter as u8 - b'A') as usize;
    if index >= m {
        return Err(bad());
    }
    Ok(index)
}

/// Parses a collection of `schema` elements (`text/{txt1,pron,txt2}`,
/// `answers/answer*`, `correctAnswer`). Any bad schema fails the whole parse.
pub fn parse_schema_xml(
    content: &[u8],
    source: Source,
) -> Result<Vec<SchemaInstance>, DatasetError> {
    let text = std::str::from_utf8(content)
        .map_err(|e| DatasetError::MalformedXml(format!("not UTF-8: {e}")))?;
    let options = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(text, options)
        .map_err(|e| DatasetError::MalformedXml(e.to_string()))?;

    let schemas: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("schema"))
        .collect();
    let width = schemas.len().to_string().len().max(3);

    let mut out = Vec::with_capacity(schemas.len());
    for (i, schema) in schemas.into_iter().enumerate() {
        let number = i + 1;
        let missing = |field| DatasetError::MissingField {
            schema: number,
            field,
        };
        let text = child(schema, "text").ok_or_else(|| missing("text"))?;
        let part = |name: &'static str| {
            child(text, name)
                .map(element_text)
                .ok_or_else(|| missing(name))
        };
        let (txt1, pron, txt2) = (part("txt1")?, part("pron")?, part("txt2")?);
        let (sentence, pron, start) = assemble(&txt1, &pron, &txt2);
        if pron.is_empty() {
            return Err(missing("pron"));
        }

        let answers = child(schema, "answers").ok_or_else(|| missing("answers"))?;
        let candidates: Vec<String> = answers
            .children()
            .filter(|c| c.has_tag_name("answer"))
            .map(|a| normalize_ws(&element_text(a)))
            .collect();
        if candidates.is_empty() {
            return Err(missing("answer"));
        }
        let correct = child(schema, "correctAnswer").ok_or_else(|| missing("correctAnswer"))?;
        let gold = answer_index(number, &element_text(correct), candidates.len())?;

        let id = format!("{}-{:0width$}", source.id_prefix(), number);
        out.push(SchemaInstance::new(
            id,
            sentence,
            &pron,
            start,
            candidates,
            Some(gold),
        )?);
    }
    Ok(out)
}

/// Winograd Schema Challenge collection.
pub fn parse_wsc_xml(content: &[u8]) -> Result<Vec<SchemaInstance>, DatasetError> {
    parse_schema_xml(content, Source::Wsc273)
}

/// Pronoun Disambiguation Problem collection (same layout, up to 5 answers).
pub fn parse_pdp_xml(content: &[u8]) -> Result<Vec<SchemaInstance>, DatasetError> {
    parse_schema_xml(content, Source::Pdp60)
}

/// Canonical JSONL record; field order is part of the format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRecord {
    id: String,
    sentence: String,
    pronoun: String,
    pronoun_start: usize,
    candidates: Vec<String>,
    gold: Option<usize>,
}

/// Parses canonical JSONL, one instance per non-blank line.
pub fn parse_jsonl(content: &[u8]) -> Result<Vec<SchemaInstance>, DatasetError> {
    let text = std::str::from_utf8(content).map_err(|e| DatasetError::MalformedJson {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedJson {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(SchemaInstance::new(
            rec.id,
            rec.sentence,
            &rec.pronoun,
            rec.pronoun_start,
            rec.candidates,
            rec.gold,
        )?);
    }
    Ok(out)
}

/// Emits canonical JSONL (LF-terminated lines, compact objects).
pub fn convert(instances: &[SchemaInstance]) -> Vec<u8> {
    let mut out = Vec::new();
    for inst in instances {
        let rec = JsonlRecord {
            id: inst.id.clone(),
            sentence: inst.sentence.clone(),
            pronoun: inst.pronoun.surface.clone(),
            pronoun_start: inst.pronoun.start,
            candidates: inst.candidate_texts.clone(),
            gold: inst.gold_index,
        };
        serde_json::to_writer(&mut out, &rec).expect("record serializes");
        out.push(b'\n');
    }
    out
}
