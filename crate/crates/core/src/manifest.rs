//! Dataset split manifests.
//!
//! A manifest lists every item of the benchmark dataset with its binary label,
//! the generation method (or source corpus) it came from, and the split it
//! belongs to. Splits are mutually exclusive: an item id may appear in exactly
//! one of A (separability measurement), B (probe training), C (seen test) or
//! D (unseen test).
//!
//! File format (UTF-8, line oriented):
//!
//! ```text
//! sepbench-manifest v1
//! id<TAB>label<TAB>method_tag<TAB>split
//! ...
//! #counts A 0 44037
//! #counts A 1 55963
//! ```
//!
//! The optional trailing `#counts split label n` block declares the expected
//! per-split, per-label tallies; when present they must match exactly.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_HEADER: &str = "sepbench-manifest v1";

/// Relative class imbalance above which a split is reported as imbalanced.
pub const IMBALANCE_WARNING_RATIO: f64 = 0.10;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown split id {0:?} (expected one of A, B, C, D)")]
    UnknownSplit(String),
    #[error("invalid label {0:?} (expected 0 or 1)")]
    InvalidLabel(String),
    #[error("integrity error: id {id:?} appears in split {first} and again in split {second}")]
    DuplicateId { id: String, first: Split, second: Split },
    #[error(
        "integrity error: split {split} label {label} declares {declared} items but {actual} are listed"
    )]
    CountMismatch {
        split: Split,
        label: Label,
        declared: usize,
        actual: usize,
    },
    #[error("split {0} is empty")]
    EmptySplit(Split),
}

/// One of the four mutually exclusive dataset subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    A,
    B,
    C,
    D,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::A, Split::B, Split::C, Split::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::A => "A",
            Split::B => "B",
            Split::C => "C",
            Split::D => "D",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Split::A),
            "B" => Ok(Split::B),
            "C" => Ok(Split::C),
            "D" => Ok(Split::D),
            other => Err(ManifestError::UnknownSplit(other.to_string())),
        }
    }
}

/// Binary class label. Fake is the positive class throughout the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = ManifestError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(ManifestError::InvalidLabel(other.to_string())),
        }
    }
}

impl FromStr for Label {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" => Ok(Label::Real),
            "1" => Ok(Label::Fake),
            other => Err(ManifestError::InvalidLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub label: Label,
    pub method_tag: String,
    pub split: Split,
}

/// Per-split, per-label item counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitTallies([[usize; 2]; 4]);

impl SplitTallies {
    pub fn get(&self, split: Split, label: Label) -> usize {
        self.0[split.index()][label.as_u8() as usize]
    }

    pub fn split_total(&self, split: Split) -> usize {
        self.0[split.index()].iter().sum()
    }

    fn add(&mut self, split: Split, label: Label, n: usize) {
        self.0[split.index()][label.as_u8() as usize] += n;
    }

    fn set(&mut self, split: Split, label: Label, n: usize) {
        self.0[split.index()][label.as_u8() as usize] = n;
    }
}

/// A validated, immutable set of dataset items partitioned into splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    items: Vec<ItemRecord>,
    counts: SplitTallies,
    declared_counts: Option<SplitTallies>,
    index: HashMap<String, usize>,
}

impl SplitManifest {
    /// Validates `items` (and optional declared tallies) into a manifest.
    ///
    /// Fails on the first id (in item order) seen twice, or on the first
    /// tally (in split, label order) that disagrees with the declaration.
    pub fn new(
        items: Vec<ItemRecord>,
        declared_counts: Option<SplitTallies>,
    ) -> Result<Self, ManifestError> {
        let mut index: HashMap<String, usize> = HashMap::with_capacity(items.len());
        let mut counts = SplitTallies::default();
        for (i, item) in items.iter().enumerate() {
            if let Some(&first) = index.get(&item.id) {
                return Err(ManifestError::DuplicateId {
                    id: item.id.clone(),
                    first: items[first].split,
                    second: item.split,
                });
            }
            index.insert(item.id.clone(), i);
            counts.add(item.split, item.label, 1);
        }
        if let Some(declared) = &declared_counts {
            for split in Split::ALL {
                for label in [Label::Real, Label::Fake] {
                    let (want, got) = (declared.get(split, label), counts.get(split, label));
                    if want != got {
                        return Err(ManifestError::CountMismatch {
                            split,
                            label,
                            declared: want,
                            actual: got,
                        });
                    }
                }
            }
        }
        Ok(Self {
            items,
            counts,
            declared_counts,
            index,
        })
    }

    /// Parses and validates manifest text.
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        match lines.next() {
            Some((_, header)) if header == MANIFEST_HEADER => {}
            Some((line, other)) => {
                return Err(ManifestError::Parse {
                    line,
                    message: format!("expected header {MANIFEST_HEADER:?}, found {other:?}"),
                })
            }
            None => {
                return Err(ManifestError::Parse {
                    line: 1,
                    message: "empty manifest".into(),
                })
            }
        }

        let mut items = Vec::new();
        let mut declared: Option<SplitTallies> = None;
        // (split, label) pairs already declared, to catch repeated #counts lines
        let mut seen_declared = [[false; 2]; 4];
        for (line, raw) in lines {
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix("#counts") {
                let (split, label, n) = parse_counts_line(rest).map_err(|message| {
                    ManifestError::Parse { line, message }
                })?;
                let slot = &mut seen_declared[split.index()][label.as_u8() as usize];
                if *slot {
                    return Err(ManifestError::Parse {
                        line,
                        message: format!("tally for split {split} label {label} declared twice"),
                    });
                }
                *slot = true;
                declared.get_or_insert_with(SplitTallies::default).set(split, label, n);
                continue;
            }
            if declared.is_some() {
                return Err(ManifestError::Parse {
                    line,
                    message: "item record after the #counts block".into(),
                });
            }
            items.push(parse_record(raw).map_err(|message| ManifestError::Parse { line, message })?);
        }
        Self::new(items, declared)
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn counts(&self) -> &SplitTallies {
        &self.counts
    }

    pub fn declared_counts(&self) -> Option<&SplitTallies> {
        self.declared_counts.as_ref()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ItemRecord> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    /// Records of `split` in manifest order; empty if the split is unused.
    pub fn split_view(&self, split: Split) -> Vec<&ItemRecord> {
        self.items.iter().filter(|r| r.split == split).collect()
    }

    /// Like [`split_view`](Self::split_view) but rejects an empty split.
    pub fn require_split(&self, split: Split) -> Result<Vec<&ItemRecord>, ManifestError> {
        let view = self.split_view(split);
        if view.is_empty() {
            return Err(ManifestError::EmptySplit(split));
        }
        Ok(view)
    }

    /// Human-readable warnings for splits whose |real - fake| / total exceeds 10%.
    pub fn imbalance_warnings(&self) -> Vec<String> {
        Split::ALL
            .iter()
            .filter_map(|&split| {
                let real = self.counts.get(split, Label::Real);
                let fake = self.counts.get(split, Label::Fake);
                let total = real + fake;
                if total == 0 {
                    return None;
                }
                let ratio = real.abs_diff(fake) as f64 / total as f64;
                (ratio > IMBALANCE_WARNING_RATIO).then(|| {
                    format!(
                        "split {split} is imbalanced: {real} real vs {fake} fake ({:.1}% difference)",
                        ratio * 100.0
                    )
                })
            })
            .collect()
    }

    /// Canonical text form; `parse(render())` reproduces the manifest.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(32 * (self.items.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for item in &self.items {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                item.id, item.label, item.method_tag, item.split
            ));
        }
        if let Some(declared) = &self.declared_counts {
            for split in Split::ALL {
                for label in [Label::Real, Label::Fake] {
                    out.push_str(&format!(
                        "#counts {split} {label} {}\n",
                        declared.get(split, label)
                    ));
                }
            }
        }
        out
    }
}

/// Reads and validates a manifest file, logging class-imbalance warnings.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SplitManifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = SplitManifest::parse(&text)?;
    for warning in manifest.imbalance_warnings() {
        log::warn!("{}: {warning}", path.display());
    }
    Ok(manifest)
}

pub fn split_view(manifest: &SplitManifest, split: Split) -> Vec<&ItemRecord> {
    manifest.split_view(split)
}

fn parse_record(raw: &str) -> Result<ItemRecord, String> {
    let fields: Vec<&str> = raw.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let id = fields[0];
    if id.is_empty() {
        return Err("empty item id".into());
    }
    let label = fields[1].parse::<Label>().map_err(|e| e.to_string())?;
    let split = fields[3].parse::<Split>().map_err(|e| e.to_string())?;
    Ok(ItemRecord {
        id: id.to_string(),
        label,
        method_tag: fields[2].to_string(),
        split,
    })
}

fn parse_counts_line(rest: &str) -> Result<(Split, Label, usize), String> {
    let fields: Vec<&str> = rest.split_whitespace().collect();
    if fields.len() != 3 {
        return Err("expected `#counts <split> <label> <n>`".into());
    }
    let split = fields[0].parse::<Split>().map_err(|e| e.to_string())?;
    let label = fields[1].parse::<Label>().map_err(|e| e.to_string())?;
    let n = fields[2]
        .parse::<usize>()
        .map_err(|e| format!("invalid count {:?}: {e}", fields[2]))?;
    Ok((split, label, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_items() -> String {
        format!("{MANIFEST_HEADER}\na\t0\tvidtimit\tA\nb\t1\tstylegan2\tA\nc\t0\tff-real\tB\n")
    }

    #[test]
    fn minimal_manifest_counts() {
        let m = SplitManifest::parse(&three_items()).unwrap();
        assert_eq!(m.counts().split_total(Split::A), 2);
        assert_eq!(m.counts().split_total(Split::B), 1);
        assert_eq!(m.counts().get(Split::A, Label::Fake), 1);
        assert_eq!(m.declared_counts(), None);
    }

    #[test]
    fn split_views() {
        let m = SplitManifest::parse(&three_items()).unwrap();
        let a: Vec<&str> = m.split_view(Split::A).iter().map(|r| r.id.as_str()).collect();
        assert_eq!(a, ["a", "b"]);
        assert!(m.split_view(Split::D).is_empty());
        assert!(matches!(
            m.require_split(Split::D),
            Err(ManifestError::EmptySplit(Split::D))
        ));
    }

    #[test]
    fn unknown_split_id() {
        assert!(matches!(
            "E".parse::<Split>(),
            Err(ManifestError::UnknownSplit(s)) if s == "E"
        ));
    }

    #[test]
    fn cross_split_duplicate_is_rejected() {
        let text = format!("{MANIFEST_HEADER}\nx\t0\tm\tA\ny\t1\tm\tB\nx\t0\tm\tC\n");
        let err = SplitManifest::parse(&text).unwrap_err();
        assert!(err.to_string().contains("\"x\""), "{err}");
        assert!(matches!(
            err,
            ManifestError::DuplicateId { first: Split::A, second: Split::C, .. }
        ));
    }

    #[test]
    fn declared_counts_must_match() {
        let mut text = format!("{MANIFEST_HEADER}\n");
        for i in 0..10 {
            text.push_str(&format!("item{i}\t{}\tm\tA\n", i % 2));
        }
        text.push_str("#counts A 0 44037\n#counts A 1 55963\n");
        let err = SplitManifest::parse(&text).unwrap_err();
        assert!(matches!(
            err,
            ManifestError::CountMismatch { split: Split::A, label: Label::Real, declared: 44037, actual: 5 }
        ));
    }

    #[test]
    fn declared_counts_accepted_when_exact() {
        let text = three_items() + "#counts A 0 1\n#counts A 1 1\n#counts B 0 1\n";
        let m = SplitManifest::parse(&text).unwrap();
        assert_eq!(m.declared_counts().unwrap().get(Split::A, Label::Fake), 1);
        // undeclared tallies count as zero
        let text = three_items() + "#counts A 0 1\n#counts A 1 1\n";
        assert!(matches!(
            SplitManifest::parse(&text),
            Err(ManifestError::CountMismatch { split: Split::B, .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        let cases = [
            "not-a-manifest\n".to_string(),
            String::new(),
            format!("{MANIFEST_HEADER}\na\t2\tm\tA\n"),
            format!("{MANIFEST_HEADER}\na\t0\tm\tE\n"),
            format!("{MANIFEST_HEADER}\na\t0\tm\n"),
            format!("{MANIFEST_HEADER}\n\t0\tm\tA\n"),
            format!("{MANIFEST_HEADER}\n#counts A 0 1\na\t0\tm\tA\n"),
            format!("{MANIFEST_HEADER}\na\t0\tm\tA\n#counts A 0\n"),
            format!("{MANIFEST_HEADER}\na\t0\tm\tA\n#counts A 0 1\n#counts A 0 1\n"),
        ];
        for text in &cases {
            assert!(
                matches!(SplitManifest::parse(text), Err(ManifestError::Parse { .. })),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn imbalance_warning_threshold() {
        // 13,200 vs 13,000 is 0.76% apart: no warning
        let mut items = Vec::new();
        for i in 0..132 {
            items.push(ItemRecord { id: format!("r{i}"), label: Label::Real, method_tag: "m".into(), split: Split::B });
        }
        for i in 0..130 {
            items.push(ItemRecord { id: format!("f{i}"), label: Label::Fake, method_tag: "m".into(), split: Split::B });
        }
        for i in 0..4 {
            items.push(ItemRecord { id: format!("c{i}"), label: Label::Fake, method_tag: "m".into(), split: Split::C });
        }
        items.push(ItemRecord { id: "c-real".into(), label: Label::Real, method_tag: "m".into(), split: Split::C });
        let m = SplitManifest::new(items, None).unwrap();
        let warnings = m.imbalance_warnings();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].starts_with("split C"));
    }

    #[test]
    fn render_round_trip() {
        let text = three_items() + "#counts A 0 1\n#counts A 1 1\n#counts B 0 1\n";
        let m = SplitManifest::parse(&text).unwrap();
        assert_eq!(SplitManifest::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn crlf_line_endings() {
        let text = three_items().replace('\n', "\r\n");
        let m = SplitManifest::parse(&text).unwrap();
        assert_eq!(m.get("c").unwrap().split, Split::B);
    }
}
