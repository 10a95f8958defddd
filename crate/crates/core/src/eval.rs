//! Dataset-level evaluation against a directory of attention dumps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{self, AlignError, OccurrencePolicy, SpanAlignment};
use crate::dataset::{SchemaInstance, Source};
use crate::dump::{self, AttentionDump, DumpError};
use crate::exec::Execution;
use crate::mas::{self, AggregationMode, MasError, MasResult, TiePolicy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dump root {} does not exist", .0.display())]
    DumpRootMissing(PathBuf),
}

/// Why an instance could not be scored. Failures count as incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    CandidateNotFound,
    AlignmentError,
    DegenerateAttention,
    DumpMissing,
    /// Dump directory exists but cannot be read.
    DumpInvalid,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::CandidateNotFound => "CandidateNotFound",
            FailureReason::AlignmentError => "AlignmentError",
            FailureReason::DegenerateAttention => "DegenerateAttention",
            FailureReason::DumpMissing => "DumpMissing",
            FailureReason::DumpInvalid => "DumpInvalid",
        }
    }
}

/// Failure plus a human-readable diagnostic.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {detail}", reason.as_str())]
pub struct ResolveError {
    pub reason: FailureReason,
    pub detail: String,
}

impl From<AlignError> for ResolveError {
    fn from(e: AlignError) -> Self {
        let reason = match e {
            AlignError::CandidateNotFound(_) => FailureReason::CandidateNotFound,
            _ => FailureReason::AlignmentError,
        };
        ResolveError {
            reason,
            detail: e.to_string(),
        }
    }
}

impl From<MasError> for ResolveError {
    fn from(e: MasError) -> Self {
        let reason = match e {
            MasError::DegenerateAttention => FailureReason::DegenerateAttention,
            _ => FailureReason::AlignmentError,
        };
        ResolveError {
            reason,
            detail: e.to_string(),
        }
    }
}

impl From<DumpError> for ResolveError {
    fn from(e: DumpError) -> Self {
        let reason = match e {
            DumpError::MissingFile(_) => FailureReason::DumpMissing,
            _ => FailureReason::DumpInvalid,
        };
        ResolveError {
            reason,
            detail: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalConfig {
    pub agg: AggregationMode,
    pub tie: TiePolicy,
    pub occurrence: OccurrencePolicy,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub scores: Vec<f64>,
    pub decision: Option<usize>,
    pub gold_index: Option<usize>,
    pub correct: Option<bool>,
    pub tie_flag: bool,
    pub failure: Option<FailureReason>,
    pub failure_detail: Option<String>,
}

/// Reported accuracy of a comparison system, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: Source,
    pub total: usize,
    pub scored: usize,
    pub correct_count: usize,
    /// `correct_count / total`; failures count as incorrect.
    pub accuracy: f64,
    pub tie_count: usize,
    pub records: Vec<InstanceRecord>,
    pub baselines: Vec<Baseline>,
}

const PDP60_BASELINES: &[(&str, f64)] = &[
    ("Patric Dhondt (WS Challenge 2016)", 45.0),
    ("Nicos Issak (WS Challenge 2016)", 48.3),
    ("Quan Liu (WS Challenge 2016 winner)", 58.3),
    ("USSM + Supervised Deepnet", 53.3),
    ("USSM + Supervised Deepnet + 3 Knowledge Bases", 66.7),
    ("Maximum attention score (published)", 68.3),
];

const WSC273_BASELINES: &[(&str, f64)] = &[
    ("Random guess", 50.0),
    ("USSM + KB", 52.0),
    ("USSM + Supervised DeepNet + KB", 52.8),
    ("Single LM", 54.5),
    ("Transformer", 54.1),
    ("Know. Hunter", 57.1),
    ("Maximum attention score (published)", 60.3),
    ("Single LM on customized CommonCrawl corpus (context)", 62.6),
];

/// Comparison rows for a benchmark, in their published order.
pub fn baselines(source: Source) -> Vec<Baseline> {
    let rows: &[(&str, f64)] = match source {
        Source::Wsc273 => WSC273_BASELINES,
        Source::Pdp60 => PDP60_BASELINES,
        Source::Custom => &[],
    };
    rows.iter()
        .map(|&(name, percent)| Baseline {
            name: name.to_string(),
            percent,
        })
        .collect()
}

/// Locates and aligns the pronoun and candidates of `instance` in `dump`.
pub fn align_instance(
    instance: &SchemaInstance,
    dump: &AttentionDump,
    occurrence: OccurrencePolicy,
) -> Result<(SpanAlignment, Vec<SpanAlignment>), ResolveError> {
    let ranges = align::token_char_ranges(&dump.tokens, &instance.sentence, dump.lowercased)?;
    let pronoun = align::align_with_ranges(&ranges, &instance.pronoun)?;
    let mut candidates = Vec::with_capacity(instance.candidate_texts.len());
    for text in &instance.candidate_texts {
        let span =
            align::locate_candidate(&instance.sentence, text, &instance.pronoun, occurrence)?;
        candidates.push(align::align_with_ranges(&ranges, &span)?);
    }

    let spans = std::iter::once(&pronoun).chain(&candidates);
    let mut seen = vec![false; dump.num_tokens()];
    for span in spans {
        for &i in &span.token_indices {
            if std::mem::replace(&mut seen[i], true) {
                return Err(ResolveError {
                    reason: FailureReason::AlignmentError,
                    detail: format!("token {i} ({:?}) is claimed by two spans", dump.tokens[i]),
                });
            }
        }
    }
    Ok((pronoun, candidates))
}

/// Scores one instance against an already loaded dump.
pub fn resolve_instance(
    instance: &SchemaInstance,
    dump: &AttentionDump,
    agg: AggregationMode,
    tie: TiePolicy,
    occurrence: OccurrencePolicy,
) -> Result<MasResult, ResolveError> {
    let (pronoun, candidates) = align_instance(instance, dump, occurrence)?;
    Ok(mas::score_instance(
        dump,
        &pronoun,
        &candidates,
        agg,
        tie,
        &instance.id,
    )?)
}

/// Reads `dump_root/<id>` and scores the instance, capturing any failure.
pub fn evaluate_instance(
    instance: &SchemaInstance,
    dump_root: &Path,
    config: &EvalConfig,
) -> InstanceRecord {
    let dir = dump_root.join(&instance.id);
    let outcome = if dir.is_dir() {
        dump::read_dump(&dir)
            .map_err(ResolveError::from)
            .and_then(|d| resolve_instance(instance, &d, config.agg, config.tie, config.occurrence))
    } else {
        Err(ResolveError {
            reason: FailureReason::DumpMissing,
            detail: format!("no dump directory {}", dir.display()),
        })
    };

    match outcome {
        Ok(result) => InstanceRecord {
            instance_id: instance.id.clone(),
            correct: instance.gold_index.map(|g| g == result.decision),
            decision: Some(result.decision),
            gold_index: instance.gold_index,
            tie_flag: result.tie_flag,
            scores: result.scores,
            failure: None,
            failure_detail: None,
        },
        Err(e) => InstanceRecord {
            instance_id: instance.id.clone(),
            scores: Vec::new(),
            decision: None,
            gold_index: instance.gold_index,
            correct: None,
            tie_flag: false,
            failure: Some(e.reason),
            failure_detail: Some(e.detail),
        },
    }
}

/// Aggregates records into a report. Records are sorted by instance id.
pub fn summarize(dataset: Source, mut records: Vec<InstanceRecord>) -> EvalReport {
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let total = records.len();
    let scored = records.iter().filter(|r| r.failure.is_none()).count();
    let correct_count = records.iter().filter(|r| r.correct == Some(true)).count();
    let tie_count = records.iter().filter(|r| r.tie_flag).count();
    let accuracy = if total == 0 {
        0.0
    } else {
        correct_count as f64 / total as f64
    };
    EvalReport {
        dataset,
        total,
        scored,
        correct_count,
        accuracy,
        tie_count,
        records,
        baselines: baselines(dataset),
    }
}

/// Dataset tag shared by every instance, or `Custom` for mixed lists.
pub fn dataset_source(instances: &[SchemaInstance]) -> Source {
    let mut sources = instances.iter().map(SchemaInstance::source);
    match sources.next() {
        Some(first) if sources.all(|s| s == first) => first,
        _ => Source::Custom,
    }
}

/// Scores every instance; per-instance failures are recorded, not raised.
pub fn evaluate(
    instances: &[SchemaInstance],
    dump_root: impl AsRef<Path>,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let root = dump_root.as_ref();
    if !root.is_dir() {
        return Err(EvalError::DumpRootMissing(root.to_path_buf()));
    }
    let records = config
        .execution
        .map(instances, |inst| evaluate_instance(inst, root, config));
    Ok(summarize(dataset_source(instances), records))
}
