//! MMLU-format loading and item serialization.
//!
//! An MMLU directory holds one headerless comma-separated file per subject
//! with six columns: question, four options, answer letter. The subject is
//! the file stem with any `_test`, `_dev` or `_val` suffix removed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use once_cell::sync::Lazy;
use serde::Deserialize;
use thiserror::Error;

use crate::model::{McqItem, ValidationError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Row { file: String, line: u64, reason: String },
    #[error("{file}:{line}: {source}")]
    Invalid {
        file: String,
        line: u64,
        source: ValidationError,
    },
    #[error("no .csv files in {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SubjectInfo {
    pub subject: String,
    pub subcategory: String,
    pub category: String,
}

static SUBJECTS: Lazy<BTreeMap<String, SubjectInfo>> = Lazy::new(|| {
    let mut reader = csv::Reader::from_reader(include_str!("../../data/mmlu_subjects.csv").as_bytes());
    reader
        .deserialize::<SubjectInfo>()
        .map(|row| {
            let row = row.expect("bundled subject table is well formed");
            (row.subject.clone(), row)
        })
        .collect()
});

/// The bundled subject to subcategory and category table.
pub fn subject_table() -> &'static BTreeMap<String, SubjectInfo> {
    &SUBJECTS
}

/// Subcategory of a subject; unknown subjects map to `"uncategorized"`.
pub fn subcategory_of(subject: &str) -> &str {
    SUBJECTS
        .get(subject)
        .map(|s| s.subcategory.as_str())
        .unwrap_or("uncategorized")
}

pub fn subject_from_stem(stem: &str) -> &str {
    ["_test", "_dev", "_val"]
        .iter()
        .find_map(|suffix| stem.strip_suffix(suffix))
        .unwrap_or(stem)
}

/// Rows skipped when loading leniently.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let io = |source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(LoadError::Empty(dir.to_path_buf()));
    }
    Ok(files)
}

/// Loads one subject file. Item ids are `subject/row` with the 1-based row
/// number zero-padded to five digits.
pub fn load_mmlu_file(path: &Path, skip_invalid: bool) -> Result<(Vec<McqItem>, Vec<SkippedRow>), LoadError> {
    let file = path.display().to_string();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let subject = subject_from_stem(stem).to_string();
    let subcategory = subcategory_of(&subject).to_string();
    if !SUBJECTS.contains_key(&subject) {
        log::warn!("{file}: subject {subject} not in the bundled table");
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| LoadError::Row {
            file: file.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = row.map_err(|e| LoadError::Row {
            file: file.clone(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(row_no as u64 + 1, |p| p.line());
        let row_error = |reason: String| LoadError::Row {
            file: file.clone(),
            line,
            reason,
        };
        if row.len() != 6 {
            return Err(row_error(format!("expected 6 columns, found {}", row.len())));
        }
        let answer = row[5].trim();
        let gold = match answer {
            "A" => 0,
            "B" => 1,
            "C" => 2,
            "D" => 3,
            other => return Err(row_error(format!("unknown answer letter {other:?}"))),
        };
        let options: Vec<&str> = (1..5).map(|i| &row[i]).collect();
        let id = format!("{subject}/{:05}", row_no + 1);
        match McqItem::new(Some(id), &row[0], &options, gold, &subject, &subcategory) {
            Ok(item) => items.push(item),
            Err(source) if skip_invalid => {
                log::warn!("{file}:{line}: skipped: {source}");
                skipped.push(SkippedRow {
                    file: file.clone(),
                    line,
                    reason: source.to_string(),
                });
            }
            Err(source) => {
                return Err(LoadError::Invalid {
                    file: file.clone(),
                    line,
                    source,
                })
            }
        }
    }
    Ok((items, skipped))
}

/// Loads every `*.csv` in `dir`, files in name order.
pub fn load_mmlu(dir: &Path) -> Result<Vec<McqItem>, LoadError> {
    Ok(load_mmlu_with(dir, false)?.0)
}

/// Like [`load_mmlu`], optionally skipping rows that fail item validation
/// (duplicate or empty options) instead of failing.
pub fn load_mmlu_with(dir: &Path, skip_invalid: bool) -> Result<(Vec<McqItem>, Vec<SkippedRow>), LoadError> {
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    for path in csv_files(dir)? {
        let (i, s) = load_mmlu_file(&path, skip_invalid)?;
        items.extend(i);
        skipped.extend(s);
    }
    Ok((items, skipped))
}

/// One JSON item per line; items are validated on load.
pub fn load_items_jsonl(path: &Path) -> Result<Vec<McqItem>, LoadError> {
    let file = path.display().to_string();
    let f = fs::File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: McqItem = serde_json::from_str(&line).map_err(|e| LoadError::Row {
            file: file.clone(),
            line: line_no,
            reason: e.to_string(),
        })?;
        items.push(item.validate().map_err(|source| LoadError::Invalid {
            file: file.clone(),
            line: line_no,
            source,
        })?);
    }
    Ok(items)
}

pub fn write_items_jsonl(path: &Path, items: &[McqItem]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Loads a dataset by format name: `mmlu` (directory) or `jsonl` (file).
pub fn load_dataset(path: &Path, format: &str, skip_invalid: bool) -> Result<Vec<McqItem>, LoadError> {
    match format {
        "jsonl" => load_items_jsonl(path),
        _ => Ok(load_mmlu_with(path, skip_invalid)?.0),
    }
}
