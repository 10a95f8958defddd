//! Attention slicing, argmax masks and maximum attention scores.
//!
//! For one instance the pronoun's attention is reduced to one `L × H` matrix
//! per candidate (rows are layers, columns heads). At each cell only the
//! candidate holding the maximum keeps its value; the score of a candidate
//! is its masked sum divided by the masked sums of all candidates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dump::AttentionDump;

/// Two top scores closer than this are reported as a tie.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasError {
    #[error("token index {index} out of range for {tokens} tokens")]
    SpanOutOfRange { index: usize, tokens: usize },
    #[error("token index {index} is shared by two spans")]
    OverlappingSpans { index: usize },
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("empty token span")]
    EmptySpan,
    #[error("matrix dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("masked attention sums to zero for every candidate")]
    DegenerateAttention,
}

/// How attention over a multi-token candidate collapses to one value per cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Sum,
    Max,
    Mean,
}

/// Mask assignment when several candidates share the maximum of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Tied cells award no mask bit.
    #[default]
    NoneWins,
    AllWin,
    LowestIndexWins,
}

/// Attention from the reference span to one candidate, `layers × heads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAttentionMatrix {
    pub candidate_index: usize,
    pub layers: usize,
    pub heads: usize,
    /// Row-major, `values[layer * heads + head]`.
    pub values: Vec<f64>,
}

impl CandidateAttentionMatrix {
    /// Builds a matrix from nested rows (one row per layer).
    pub fn from_rows(candidate_index: usize, rows: &[Vec<f64>]) -> Result<Self, MasError> {
        let layers = rows.len();
        let heads = rows.first().map_or(0, Vec::len);
        if layers == 0 || heads == 0 || rows.iter().any(|r| r.len() != heads) {
            return Err(MasError::DimensionMismatch(
                "rows must be non-empty and equally long".into(),
            ));
        }
        Ok(CandidateAttentionMatrix {
            candidate_index,
            layers,
            heads,
            values: rows.concat(),
        })
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.values[layer * self.heads + head]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Binary argmax mask for one candidate, same layout as its matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMatrix {
    pub candidate_index: usize,
    pub layers: usize,
    pub heads: usize,
    /// Entries are 0 or 1.
    pub bits: Vec<u8>,
}

impl MaskMatrix {
    #[inline]
    pub fn get(&self, layer: usize, head: usize) -> bool {
        self.bits[layer * self.heads + head] == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// Scored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasResult {
    pub instance_id: String,
    pub candidate_matrices: Vec<CandidateAttentionMatrix>,
    pub masks: Vec<MaskMatrix>,
    pub scores: Vec<f64>,
    pub decision: usize,
    pub tie_flag: bool,
    pub hadamard_sums: Vec<f64>,
    /// Token indices of the reference span; empty when scored from bare matrices.
    #[serde(default)]
    pub reference_tokens: Vec<usize>,
    /// Token indices per candidate; empty when scored from bare matrices.
    #[serde(default)]
    pub candidate_tokens: Vec<Vec<usize>>,
}

fn check_spans<S: AsRef<[usize]>>(
    tokens: usize,
    reference: &[usize],
    candidates: &[S],
) -> Result<(), MasError> {
    if candidates.len() < 2 {
        return Err(MasError::TooFewCandidates(candidates.len()));
    }
    let mut owner = vec![false; tokens];
    for span in std::iter::once(reference).chain(candidates.iter().map(AsRef::as_ref)) {
        if span.is_empty() {
            return Err(MasError::EmptySpan);
        }
        for &index in span {
            if index >= tokens {
                return Err(MasError::SpanOutOfRange { index, tokens });
            }
            if std::mem::replace(&mut owner[index], true) {
                return Err(MasError::OverlappingSpans { index });
            }
        }
    }
    Ok(())
}

/// Reduces the dump to one `L × H` matrix per candidate.
///
/// The reference span's query rows are averaged elementwise, then the
/// averaged row is aggregated over each candidate's key indices.
pub fn slice_attention<R, S>(
    dump: &AttentionDump,
    reference: &R,
    candidates: &[S],
    agg: AggregationMode,
) -> Result<Vec<CandidateAttentionMatrix>, MasError>
where
    R: AsRef<[usize]> + ?Sized,
    S: AsRef<[usize]>,
{
    let reference = reference.as_ref();
    let t = dump.num_tokens();
    check_spans(t, reference, candidates)?;
    if dump.attention.len() != dump.tensor_len() {
        return Err(MasError::DimensionMismatch(format!(
            "tensor has {} values, expected {}",
            dump.attention.len(),
            dump.tensor_len()
        )));
    }

    let (layers, heads) = (dump.num_layers, dump.num_heads);
    let mut out: Vec<CandidateAttentionMatrix> = (0..candidates.len())
        .map(|c| CandidateAttentionMatrix {
            candidate_index: c,
            layers,
            heads,
            values: vec![0.0; layers * heads],
        })
        .collect();

    let inv_ref = 1.0 / reference.len() as f64;
    let mut averaged = vec![0.0f64; t];
    for layer in 0..layers {
        for head in 0..heads {
            averaged.iter_mut().for_each(|v| *v = 0.0);
            for &q in reference {
                for (acc, &v) in averaged.iter_mut().zip(dump.row(layer, head, q)) {
                    *acc += v as f64;
                }
            }
            averaged.iter_mut().for_each(|v| *v *= inv_ref);

            let cell = layer * heads + head;
            for (matrix, span) in out.iter_mut().zip(candidates) {
                let keys = span.as_ref();
                let picked = keys.iter().map(|&k| averaged[k]);
                matrix.values[cell] = match agg {
                    AggregationMode::Sum => picked.sum(),
                    AggregationMode::Max => picked.fold(f64::NEG_INFINITY, f64::max),
                    AggregationMode::Mean => picked.sum::<f64>() / keys.len() as f64,
                };
            }
        }
    }
    Ok(out)
}

fn check_dims(matrices: &[CandidateAttentionMatrix]) -> Result<(usize, usize), MasError> {
    if matrices.len() < 2 {
        return Err(MasError::TooFewCandidates(matrices.len()));
    }
    let (layers, heads) = (matrices[0].layers, matrices[0].heads);
    for m in matrices {
        if m.layers != layers || m.heads != heads || m.values.len() != layers * heads {
            return Err(MasError::DimensionMismatch(format!(
                "candidate {} is {}x{}, expected {layers}x{heads}",
                m.candidate_index, m.layers, m.heads
            )));
        }
    }
    Ok((layers, heads))
}

/// Argmax masks: at each cell the candidate with the maximal value gets 1.
pub fn compute_masks(
    matrices: &[CandidateAttentionMatrix],
    tie: TiePolicy,
) -> Result<Vec<MaskMatrix>, MasError> {
    let (layers, heads) = check_dims(matrices)?;
    let mut masks: Vec<MaskMatrix> = matrices
        .iter()
        .map(|m| MaskMatrix {
            candidate_index: m.candidate_index,
            layers,
            heads,
            bits: vec![0; layers * heads],
        })
        .collect();

    for cell in 0..layers * heads {
        let best = matrices
            .iter()
            .map(|m| m.values[cell])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut holders = matrices
            .iter()
            .enumerate()
            .filter(|(_, m)| m.values[cell] == best)
            .map(|(i, _)| i);
        let first = match holders.next() {
            Some(i) => i,
            None => continue,
        };
        let rest: Vec<usize> = holders.collect();
        if rest.is_empty() {
            masks[first].bits[cell] = 1;
            continue;
        }
        match tie {
            TiePolicy::NoneWins => {}
            TiePolicy::AllWin => {
                for i in std::iter::once(first).chain(rest) {
                    masks[i].bits[cell] = 1;
                }
            }
            TiePolicy::LowestIndexWins => {
                let lowest = std::iter::once(first)
                    .chain(rest)
                    .min_by_key(|&i| matrices[i].candidate_index)
                    .unwrap_or(first);
                masks[lowest].bits[cell] = 1;
            }
        }
    }
    Ok(masks)
}

/// Masked sums and their normalised ratios.
pub fn mas_scores(
    matrices: &[CandidateAttentionMatrix],
    masks: &[MaskMatrix],
    instance_id: &str,
) -> Result<MasResult, MasError> {
    let (layers, heads) = check_dims(matrices)?;
    if masks.len() != matrices.len() {
        return Err(MasError::DimensionMismatch(format!(
            "{} masks for {} matrices",
            masks.len(),
            matrices.len()
        )));
    }
    for (m, mask) in matrices.iter().zip(masks) {
        if mask.candidate_index != m.candidate_index
            || mask.layers != layers
            || mask.heads != heads
            || mask.bits.len() != layers * heads
        {
            return Err(MasError::DimensionMismatch(format!(
                "mask for candidate {} does not match its matrix",
                mask.candidate_index
            )));
        }
    }

    let hadamard_sums: Vec<f64> = matrices
        .iter()
        .zip(masks)
        .map(|(m, mask)| {
            m.values
                .iter()
                .zip(&mask.bits)
                .map(|(&v, &b)| v * b as f64)
                .sum()
        })
        .collect();
    let total: f64 = hadamard_sums.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(MasError::DegenerateAttention);
    }
    let scores: Vec<f64> = hadamard_sums.iter().map(|s| s / total).collect();

    let mut decision = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[decision] {
            decision = i;
        }
    }
    let tie_flag = scores
        .iter()
        .enumerate()
        .any(|(i, &s)| i != decision && (scores[decision] - s).abs() <= SCORE_TIE_EPSILON);

    Ok(MasResult {
        instance_id: instance_id.to_string(),
        candidate_matrices: matrices.to_vec(),
        masks: masks.to_vec(),
        scores,
        decision,
        tie_flag,
        hadamard_sums,
        reference_tokens: Vec::new(),
        candidate_tokens: Vec::new(),
    })
}

/// Slices, masks and scores one instance.
pub fn score_instance<R, S>(
    dump: &AttentionDump,
    reference: &R,
    candidates: &[S],
    agg: AggregationMode,
    tie: TiePolicy,
    instance_id: &str,
) -> Result<MasResult, MasError>
where
    R: AsRef<[usize]> + ?Sized,
    S: AsRef<[usize]>,
{
    let matrices = slice_attention(dump, reference, candidates, agg)?;
    let masks = compute_masks(&matrices, tie)?;
    let mut result = mas_scores(&matrices, &masks, instance_id)?;
    result.reference_tokens = reference.as_ref().to_vec();
    result.candidate_tokens = candidates.iter().map(|c| c.as_ref().to_vec()).collect();
    Ok(result)
}
