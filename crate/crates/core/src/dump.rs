//! The `masdump/1` attention interchange format.
//!
//! A dump is a directory holding two files:
//!
//! - `manifest.json`: format version, example id, model name, lowercasing
//!   flag, layer/head counts and the token list (boundary tokens included).
//! - `attention.f32`: the raw tensor, little-endian `f32`, indexed
//!   `[layer][head][query][key]` in row-major order.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "masdump/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_FILE: &str = "attention.f32";

/// Maximum deviation of a post-softmax row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("tensor size mismatch: manifest declares {expected} bytes, file has {actual}")]
    ManifestMismatch { expected: u64, actual: u64 },
    #[error("unsupported format version {0:?} (expected \"{FORMAT_VERSION}\")")]
    BadVersion(String),
    #[error("malformed manifest {}: {source}", path.display())]
    BadManifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("tensor has {actual} values, dimensions require {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid shape: {0}")]
    BadShape(String),
    #[error("token index {index} out of range for {tokens} tokens")]
    BadIndex { index: usize, tokens: usize },
    #[error("boost must lie in [0, 1), got {0}")]
    BadBoost(f64),
    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Full attention tensor of one tokenized sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub example_id: String,
    pub tokens: Vec<String>,
    pub num_layers: usize,
    pub num_heads: usize,
    pub lowercased: bool,
    pub model_name: String,
    /// `[layer][head][query][key]`, row-major.
    pub attention: Vec<f32>,
}

impl AttentionDump {
    /// Builds a dump, checking that the tensor length matches `L·H·T·T`.
    pub fn new(
        example_id: impl Into<String>,
        tokens: Vec<String>,
        num_layers: usize,
        num_heads: usize,
        lowercased: bool,
        model_name: impl Into<String>,
        attention: Vec<f32>,
    ) -> Result<Self, DumpError> {
        let dump = AttentionDump {
            example_id: example_id.into(),
            tokens,
            num_layers,
            num_heads,
            lowercased,
            model_name: model_name.into(),
            attention,
        };
        let expected = dump.tensor_len();
        if dump.attention.len() != expected {
            return Err(DumpError::DimensionMismatch {
                expected,
                actual: dump.attention.len(),
            });
        }
        Ok(dump)
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Number of `f32` values the dimensions call for.
    pub fn tensor_len(&self) -> usize {
        let t = self.num_tokens();
        self.num_layers * self.num_heads * t * t
    }

    /// Flat index of `(layer, head, query, key)`; the byte offset is four times this.
    #[inline]
    pub fn offset(&self, layer: usize, head: usize, query: usize, key: usize) -> usize {
        let t = self.num_tokens();
        ((layer * self.num_heads + head) * t + query) * t + key
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f32 {
        self.attention[self.offset(layer, head, query, key)]
    }

    /// Attention distribution of `query` over all keys.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let start = self.offset(layer, head, query, 0);
        &self.attention[start..start + self.num_tokens()]
    }

    fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION.to_string(),
            example_id: self.example_id.clone(),
            model_name: self.model_name.clone(),
            lowercased: self.lowercased,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            tokens: self.tokens.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: String,
    example_id: String,
    model_name: String,
    lowercased: bool,
    num_layers: usize,
    num_heads: usize,
    tokens: Vec<String>,
}

/// Reads a dump directory. Values are not range-checked; see [`validate`].
pub fn read_dump(dir: impl AsRef<Path>) -> Result<AttentionDump, DumpError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let tensor_path = dir.join(TENSOR_FILE);
    for p in [&manifest_path, &tensor_path] {
        if !p.is_file() {
            return Err(DumpError::MissingFile(p.clone()));
        }
    }

    let raw = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|source| DumpError::BadManifest {
            path: manifest_path.clone(),
            source,
        })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DumpError::BadVersion(manifest.format_version));
    }

    let t = manifest.tokens.len() as u64;
    let expected = manifest.num_layers as u64 * manifest.num_heads as u64 * t * t * 4;
    let actual = fs::metadata(&tensor_path)
        .map_err(io_err(&tensor_path))?
        .len();
    if actual != expected {
        return Err(DumpError::ManifestMismatch { expected, actual });
    }

    let bytes = fs::read(&tensor_path).map_err(io_err(&tensor_path))?;
    if bytes.len() as u64 != expected {
        return Err(DumpError::ManifestMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let attention = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    AttentionDump::new(
        manifest.example_id,
        manifest.tokens,
        manifest.num_layers,
        manifest.num_heads,
        manifest.lowercased,
        manifest.model_name,
        attention,
    )
}

/// Writes `dump` into `dir`, replacing any previous dump there.
///
/// Both files are staged in a sibling directory which is then renamed into
/// place, so readers never observe a manifest paired with a foreign tensor.
pub fn write_dump(dump: &AttentionDump, dir: impl AsRef<Path>) -> Result<(), DumpError> {
    let dir = dir.as_ref();
    let expected = dump.tensor_len();
    if dump.attention.len() != expected {
        return Err(DumpError::DimensionMismatch {
            expected,
            actual: dump.attention.len(),
        });
    }

    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let name = dir
        .file_name()
        .ok_or_else(|| DumpError::BadShape(format!("not a directory path: {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let pid = std::process::id();
    let staging = parent.join(format!(".{name}.tmp-{pid}"));
    let retired = parent.join(format!(".{name}.old-{pid}"));

    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir(&staging).map_err(io_err(&staging))?;

    let mut manifest = serde_json::to_vec_pretty(&dump.manifest()).expect("manifest serializes");
    manifest.push(b'\n');
    let manifest_path = staging.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;

    let mut bytes = Vec::with_capacity(dump.attention.len() * 4);
    for v in &dump.attention {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let tensor_path = staging.join(TENSOR_FILE);
    fs::write(&tensor_path, bytes).map_err(io_err(&tensor_path))?;

    if dir.exists() {
        if retired.exists() {
            fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
        }
        fs::rename(dir, &retired).map_err(io_err(dir))?;
        fs::rename(&staging, dir).map_err(io_err(dir))?;
        fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
    } else {
        fs::rename(&staging, dir).map_err(io_err(dir))?;
    }
    Ok(())
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Shape {
        detail: String,
    },
    TensorLength {
        expected: usize,
        actual: usize,
    },
    RowSum {
        layer: usize,
        head: usize,
        query: usize,
        sum: f64,
    },
    Negative {
        layer: usize,
        head: usize,
        query: usize,
        key: usize,
        value: f32,
    },
    NonFinite {
        layer: usize,
        head: usize,
        query: usize,
        key: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks shape and the post-softmax premise: non-negative rows summing to 1.
pub fn validate(dump: &AttentionDump) -> ValidationReport {
    let mut findings = Vec::new();
    let t = dump.num_tokens();
    if dump.num_layers < 1 || dump.num_heads < 1 {
        findings.push(Finding::Shape {
            detail: format!(
                "need at least one layer and head, got L={} H={}",
                dump.num_layers, dump.num_heads
            ),
        });
    }
    if t < 3 {
        findings.push(Finding::Shape {
            detail: format!("need at least 3 tokens including boundaries, got {t}"),
        });
    }
    if dump.attention.len() != dump.tensor_len() {
        findings.push(Finding::TensorLength {
            expected: dump.tensor_len(),
            actual: dump.attention.len(),
        });
        return ValidationReport { findings };
    }

    for layer in 0..dump.num_layers {
        for head in 0..dump.num_heads {
            for query in 0..t {
                let row = dump.row(layer, head, query);
                let mut sum = 0.0f64;
                for (key, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        findings.push(Finding::NonFinite {
                            layer,
                            head,
                            query,
                            key,
                        });
                    } else if v < 0.0 {
                        findings.push(Finding::Negative {
                            layer,
                            head,
                            query,
                            key,
                            value: v,
                        });
                    }
                    sum += v as f64;
                }
                if sum.is_nan() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    findings.push(Finding::RowSum {
                        layer,
                        head,
                        query,
                        sum,
                    });
                }
            }
        }
    }
    ValidationReport { findings }
}

/// Seeded synthetic dump with a planted winner.
///
/// Every row is a normalised draw of positive values. The reference token's
/// row in every `(layer, head)` is then mixed as
/// `(1 - boost) * row + boost * one_hot(winner_index)`. For `boost > 0.5`
/// the winner receives more attention than all other keys combined.
pub fn synth_dump(
    tokens: &[String],
    num_layers: usize,
    num_heads: usize,
    reference_index: usize,
    winner_index: usize,
    boost: f64,
    seed: u64,
) -> Result<AttentionDump, DumpError> {
    let t = tokens.len();
    if t < 3 || num_layers < 1 || num_heads < 1 {
        return Err(DumpError::BadShape(format!(
            "L={num_layers} H={num_heads} T={t}; need L,H >= 1 and T >= 3"
        )));
    }
    for index in [reference_index, winner_index] {
        if index >= t {
            return Err(DumpError::BadIndex { index, tokens: t });
        }
    }
    if !(0.0..1.0).contains(&boost) {
        return Err(DumpError::BadBoost(boost));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attention = Vec::with_capacity(num_layers * num_heads * t * t);
    let mut row = vec![0.0f64; t];
    for _layer in 0..num_layers {
        for _head in 0..num_heads {
            for query in 0..t {
                for v in row.iter_mut() {
                    // (0, 1]
                    *v = 1.0 - rng.gen::<f64>();
                }
                let total: f64 = row.iter().sum();
                for v in row.iter_mut() {
                    *v /= total;
                }
                if query == reference_index {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v *= 1.0 - boost;
                        if k == winner_index {
                            *v += boost;
                        }
                    }
                }
                attention.extend(row.iter().map(|&v| v as f32));
            }
        }
    }

    AttentionDump::new(
        format!("synth-{seed}"),
        tokens.to_vec(),
        num_layers,
        num_heads,
        true,
        "synthetic",
        attention,
    )
}
