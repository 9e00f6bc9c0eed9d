//! Dataset manifests and the stratified 80/10/10 split.
//!
//! A manifest is line-delimited `path<TAB>label`. Labels are integers in
//! `[0, N]` where the highest label `N` is the catch-all "unknown" class.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest line {0}: expected `path<TAB>label`")]
    BadLine(usize),
    #[error("manifest line {line}: bad label {text:?}")]
    BadLabel { line: usize, text: String },
    #[error("manifest is empty")]
    Empty,
    #[error("class {label} has only {count} examples; at least 10 are needed to split 80/10/10")]
    ClassTooSmall { label: usize, count: usize },
    #[error("audio file not found: {0}")]
    MissingAudio(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: PathBuf,
    pub label: usize,
}

/// An ordered list of `(audio path, label)` records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
}

/// The three stratified partitions, in manifest order within each class.
#[derive(Debug, Clone)]
pub struct SplitManifests {
    pub train: DatasetManifest,
    pub validation: DatasetManifest,
    pub test: DatasetManifest,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self, ManifestError> {
        if records.is_empty() {
            return Err(ManifestError::Empty);
        }
        Ok(DatasetManifest { records })
    }

    /// Parses manifest text. Does not touch the filesystem.
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (path, label) = line.split_once('\t').ok_or(ManifestError::BadLine(i + 1))?;
            let label: usize = label.trim().parse().map_err(|_| ManifestError::BadLabel {
                line: i + 1,
                text: label.to_string(),
            })?;
            records.push(ManifestRecord {
                path: PathBuf::from(path),
                label,
            });
        }
        Self::new(records)
    }

    /// Reads a manifest file, resolving relative audio paths against the
    /// manifest's directory and verifying that every path exists.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for rec in &mut manifest.records {
            if rec.path.is_relative() {
                rec.path = base.join(&rec.path);
            }
            if !rec.path.exists() {
                return Err(ManifestError::MissingAudio(rec.path.clone()));
            }
        }
        Ok(manifest)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            writeln!(out, "{}\t{}", rec.path.display(), rec.label).unwrap();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of classes including the unknown class (`max label + 1`).
    pub fn n_classes(&self) -> usize {
        self.records.iter().map(|r| r.label).max().map_or(0, |m| m + 1)
    }

    /// Per class, in manifest order: the first 80% of examples go to train,
    /// the next 10% to validation, and the remainder to test
    /// (`floor(0.8 n) / floor(0.1 n) / rest`). The result is an exact
    /// partition of the input.
    pub fn split(&self) -> Result<SplitManifests, ManifestError> {
        let mut by_class: BTreeMap<usize, Vec<&ManifestRecord>> = BTreeMap::new();
        for rec in &self.records {
            by_class.entry(rec.label).or_default().push(rec);
        }
        let mut train = Vec::new();
        let mut validation = Vec::new();
        let mut test = Vec::new();
        for (&label, recs) in &by_class {
            let n = recs.len();
            if n < 10 {
                return Err(ManifestError::ClassTooSmall { label, count: n });
            }
            let n_train = n * 8 / 10;
            let n_val = n / 10;
            train.extend(recs[..n_train].iter().map(|&r| r.clone()));
            validation.extend(recs[n_train..n_train + n_val].iter().map(|&r| r.clone()));
            test.extend(recs[n_train + n_val..].iter().map(|&r| r.clone()));
        }
        Ok(SplitManifests {
            train: DatasetManifest { records: train },
            validation: DatasetManifest { records: validation },
            test: DatasetManifest { records: test },
        })
    }
}
