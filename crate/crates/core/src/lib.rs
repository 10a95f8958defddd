//! Maximum attention score (MAS) coreference scoring.
//!
//! Given the full post-softmax attention tensor of a transformer for one
//! sentence, the crate resolves a pronoun to one of several candidate
//! antecedents. For every `(layer, head)` slot the pronoun's attention to
//! each candidate is read off, only the candidate that receives the maximum
//! attention keeps its value (argmax masking), and the masked sums are
//! normalised into a score per candidate.
//!
//! The pipeline is split into small stages that can be used on their own:
//!
//! - [`dump`]: the `masdump/1` on-disk attention format, validation and a
//!   seeded synthetic generator.
//! - [`align`]: locating candidate strings in a sentence and mapping
//!   character spans onto WordPiece token indices.
//! - [`mas`]: slicing, mask construction and scoring.
//! - [`dataset`]: Winograd-style XML collections and the canonical JSONL
//!   instance format.
//! - [`eval`], [`report`], [`heatmap`]: batch evaluation, accuracy reports
//!   and SVG heatmaps.
//!
//! Batch paths run on rayon when the `parallel` feature is enabled (the
//! default) and fall back to plain iteration otherwise.

pub mod align;
pub mod dataset;
pub mod dump;
pub mod eval;
pub mod exec;
pub mod heatmap;
pub mod mas;
pub mod report;

pub use align::{
    align_span, locate_candidate, AlignError, CharSpan, OccurrencePolicy, SpanAlignment,
};
pub use dataset::{
    convert, parse_jsonl, parse_pdp_xml, parse_wsc_xml, DatasetError, SchemaInstance, Source,
};
pub use dump::{
    read_dump, synth_dump, validate, write_dump, AttentionDump, DumpError, ValidationReport,
};
pub use eval::{
    evaluate, resolve_instance, EvalConfig, EvalError, EvalReport, FailureReason, InstanceRecord,
};
pub use exec::Execution;
pub use heatmap::render_heatmap;
pub use mas::{
    compute_masks, mas_scores, score_instance, slice_attention, AggregationMode,
    CandidateAttentionMatrix, MasError, MasResult, MaskMatrix, TiePolicy,
};
pub use report::{parse_report_json, render_report, ReportFormat};
