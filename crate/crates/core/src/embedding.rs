//! Embedding dumps and their in-memory representation.
//!
//! EMB1 layout, all integers little-endian:
//!
//! | field          | encoding                              |
//! |----------------|---------------------------------------|
//! | magic          | `SEPB` (4 bytes)                      |
//! | version        | u32 = 1                               |
//! | rows (N)       | u64                                   |
//! | dim (D)        | u64                                   |
//! | backbone name  | u32 byte length + UTF-8               |
//! | ids            | N x (u32 byte length + UTF-8)         |
//! | payload        | N*D f32, row-major                    |
//! | crc            | u32, CRC-32 (IEEE) of the payload     |

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::{Label, Split, SplitManifest};

pub const EMB1_MAGIC: [u8; 4] = *b"SEPB";
pub const EMB1_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"SEPB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {section} needs {expected} bytes, {available} available")]
    Truncated {
        section: &'static str,
        expected: u64,
        available: u64,
    },
    #[error("{0} unexpected trailing bytes after the checksum")]
    TrailingBytes(u64),
    #[error("payload checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("{field} is not valid UTF-8")]
    InvalidUtf8 { field: String },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding set must have at least one row and one dimension (got {rows}x{dim})")]
    Empty { rows: usize, dim: usize },
    #[error("payload holds {values} values, expected {rows}x{dim}")]
    ShapeMismatch { rows: usize, dim: usize, values: usize },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("{labels} labels supplied for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("id {0:?} is not in the manifest")]
    UnknownId(String),
    #[error("leakage guard: id {id:?} belongs to split {actual}, not the requested split {requested}")]
    SplitLeakage {
        id: String,
        requested: Split,
        actual: Split,
    },
}

/// An N x D matrix of f32 embeddings, one row per dataset item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    backbone_name: String,
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    labels: Option<Vec<Label>>,
    split: Option<Split>,
}

impl EmbeddingSet {
    /// Builds an unlabeled set, validating shape, finiteness and id uniqueness.
    pub fn new(
        backbone_name: impl Into<String>,
        ids: Vec<String>,
        data: Vec<f32>,
        dim: usize,
    ) -> Result<Self, EmbeddingError> {
        let rows = ids.len();
        if rows == 0 || dim == 0 {
            return Err(EmbeddingError::Empty { rows, dim });
        }
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(EmbeddingError::ShapeMismatch {
                rows,
                dim,
                values: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            backbone_name: backbone_name.into(),
            ids,
            data,
            dim,
            labels: None,
            split: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self, EmbeddingError> {
        if labels.len() != self.rows() {
            return Err(EmbeddingError::LabelCount {
                labels: labels.len(),
                rows: self.rows(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn backbone_name(&self) -> &str {
        &self.backbone_name
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Row-major N x D values.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    /// Split the labels were joined from, if any.
    pub fn split(&self) -> Option<Split> {
        self.split
    }

    /// CRC-32 of the little-endian payload, as stored in EMB1 files.
    pub fn payload_crc32(&self) -> u32 {
        let mut hasher = crc32fast::Hasher::new();
        for v in &self.data {
            hasher.update(&v.to_le_bytes());
        }
        hasher.finalize()
    }

    /// Returns a copy with every row scaled to unit L2 norm. All-zero rows are kept as is.
    pub fn l2_normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        out
    }

    /// Copy holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            backbone_name: self.backbone_name.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            data,
            dim: self.dim,
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
            split: self.split,
        }
    }
}

/// Serializes a set into canonical EMB1 bytes.
pub fn encode_embeddings(set: &EmbeddingSet) -> Vec<u8> {
    let header_len = 4 + 4 + 8 + 8 + 4 + set.backbone_name.len();
    let ids_len: usize = set.ids.iter().map(|id| 4 + id.len()).sum();
    let mut out = Vec::with_capacity(header_len + ids_len + set.data.len() * 4 + 4);
    out.extend_from_slice(&EMB1_MAGIC);
    out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim as u64).to_le_bytes());
    put_str(&mut out, &set.backbone_name);
    for id in &set.ids {
        put_str(&mut out, id);
    }
    let payload_start = out.len();
    for v in &set.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses and validates EMB1 bytes. The result is unlabeled.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet, EmbeddingError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != EMB1_MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let version = cur.u32("version")?;
    if version != EMB1_VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let rows = cur.u64("row count")?;
    let dim = cur.u64("dimension")?;
    if rows == 0 || dim == 0 {
        return Err(EmbeddingError::Empty {
            rows: rows as usize,
            dim: dim as usize,
        });
    }
    let backbone_name = cur.string("backbone name")?;
    let mut ids = Vec::new();
    for i in 0..rows {
        // Each id needs at least its length prefix; bail before allocating for absurd N.
        if cur.remaining() < 4 {
            return Err(EmbeddingError::Truncated {
                section: "item ids",
                expected: (rows - i) * 4,
                available: cur.remaining(),
            });
        }
        ids.push(cur.string(&format!("item id {i}"))?);
    }
    let payload_bytes = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or(EmbeddingError::Truncated {
            section: "payload",
            expected: u64::MAX,
            available: cur.remaining(),
        })?;
    if cur.remaining() < payload_bytes + 4 {
        return Err(EmbeddingError::Truncated {
            section: "payload",
            expected: payload_bytes + 4,
            available: cur.remaining(),
        });
    }
    if cur.remaining() > payload_bytes + 4 {
        return Err(EmbeddingError::TrailingBytes(cur.remaining() - payload_bytes - 4));
    }
    let payload = cur.take(payload_bytes, "payload")?;
    let stored = cur.u32("checksum")?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(EmbeddingError::ChecksumMismatch { stored, computed });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    EmbeddingSet::new(backbone_name, ids, data, dim as usize)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, EmbeddingError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embeddings(&bytes)
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    std::fs::write(path, encode_embeddings(set)).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Attaches manifest labels to `set`, row by row.
///
/// Every id must belong to `split`; an id from another split is a leakage error.
pub fn join_labels(
    set: &EmbeddingSet,
    manifest: &SplitManifest,
    split: Split,
) -> Result<EmbeddingSet, EmbeddingError> {
    let mut labels = Vec::with_capacity(set.rows());
    for id in &set.ids {
        let record = manifest
            .get(id)
            .ok_or_else(|| EmbeddingError::UnknownId(id.clone()))?;
        if record.split != split {
            return Err(EmbeddingError::SplitLeakage {
                id: id.clone(),
                requested: split,
                actual: record.split,
            });
        }
        labels.push(record.label);
    }
    let mut out = set.clone().with_labels(labels)?;
    out.split = Some(split);
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> u64 {
        (self.bytes.len() - self.pos) as u64
    }

    fn take(&mut self, n: u64, section: &'static str) -> Result<&'a [u8], EmbeddingError> {
        if n > self.remaining() {
            return Err(EmbeddingError::Truncated {
                section,
                expected: n,
                available: self.remaining(),
            });
        }
        let start = self.pos;
        self.pos += n as usize;
        Ok(&self.bytes[start..self.pos])
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, section: &'static str) -> Result<u64, EmbeddingError> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, field: &str) -> Result<String, EmbeddingError> {
        let len = self.u32("string length")?;
        let raw = self.take(u64::from(len), "string")?;
        String::from_utf8(raw.to_vec()).map_err(|_| EmbeddingError::InvalidUtf8 {
            field: field.to_string(),
        })
    }
}
