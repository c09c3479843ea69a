//! Labeled text corpus: ingestion, class balancing and stratified splits.
//!
//! Two input formats are accepted, selected by file extension:
//!
//! * CSV (`.csv`): header row, RFC-4180 quoting, configurable text/label/id
//!   columns. The label may instead be fixed for the whole file, which is how
//!   per-class dumps (one file per bias type) are ingested.
//! * JSON-lines (`.jsonl`, `.ndjson`): one object per line with keys
//!   `"id"`, `"text"`, `"label"` (key names follow the same column config).
//!
//! Rows whose text is empty (or whitespace only) are skipped and tallied.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: unknown label `{label}`")]
    UnknownLabel { path: PathBuf, line: u64, label: String },
    #[error("{path}: unsupported corpus format (expected .csv, .jsonl or .ndjson)")]
    UnsupportedFormat { path: PathBuf },
    #[error("empty corpus")]
    Empty,
    #[error("document with empty id")]
    EmptyId,
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("per_class must be positive")]
    ZeroPerClass,
    #[error("class {class} has {available} documents, fewer than the {requested} requested")]
    ClassTooSmall {
        class: BiasClass,
        available: usize,
        requested: usize,
    },
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("class {class} has {size} documents; cannot place at least one on each side of a {fraction} split")]
    StratumTooSmall {
        class: BiasClass,
        size: usize,
        fraction: f64,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// One of the four bias categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasClass {
    Religion,
    Race,
    Gender,
    Orientation,
}

impl BiasClass {
    /// All classes in canonical ("class") order.
    pub const ALL: [BiasClass; 4] = [
        BiasClass::Religion,
        BiasClass::Race,
        BiasClass::Gender,
        BiasClass::Orientation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BiasClass::Religion => "religion",
            BiasClass::Race => "race",
            BiasClass::Gender => "gender",
            BiasClass::Orientation => "orientation",
        }
    }
}

impl fmt::Display for BiasClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for BiasClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        BiasClass::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: BiasClass,
}

/// Ordered collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    provenance: String,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(CorpusError::EmptyId);
            }
            if doc.text.is_empty() {
                return Err(CorpusError::EmptyText(doc.id.clone()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self {
            documents,
            provenance: provenance.into(),
        })
    }

    /// Concatenate corpora in order; ids must stay unique.
    pub fn concat(parts: Vec<Corpus>) -> Result<Self> {
        let provenance = parts
            .iter()
            .map(|c| c.provenance.as_str())
            .collect::<Vec<_>>()
            .join("; ");
        let documents = parts.into_iter().flat_map(|c| c.documents).collect();
        Corpus::new(documents, provenance)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    pub fn labels(&self) -> Vec<BiasClass> {
        self.documents.iter().map(|d| d.label).collect()
    }

    /// Document counts indexed by [`BiasClass::index`].
    pub fn class_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for doc in &self.documents {
            counts[doc.label.index()] += 1;
        }
        counts
    }

    /// Write the canonical JSON-lines form (`id`, `text`, `label` per line).
    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_jsonl_to(&mut out)?;
        out.flush()
    }

    pub fn write_jsonl_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for doc in &self.documents {
            serde_json::to_writer(&mut *out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Where a row's label comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Read from the named column (or JSON key).
    Column(String),
    /// Every row of the file has this label.
    Fixed(BiasClass),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub text: String,
    pub label: LabelSource,
    /// Id column; when absent ids are generated as `<file stem>:<row>`.
    pub id: Option<String>,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        Self {
            text: "text".into(),
            label: LabelSource::Column("label".into()),
            id: Some("id".into()),
        }
    }
}

/// A loaded corpus plus the number of rows skipped for empty text.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub skipped_empty: usize,
}

pub fn load_corpus(path: &Path, columns: &ColumnConfig) -> Result<LoadedCorpus> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (documents, skipped_empty) = match ext.as_deref() {
        Some("csv") => read_csv(path, columns)?,
        Some("jsonl") | Some("ndjson") => read_jsonl(path, columns)?,
        _ => {
            return Err(CorpusError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    if documents.is_empty() {
        return Err(CorpusError::Empty);
    }
    let corpus = Corpus::new(documents, path.display().to_string())?;
    Ok(LoadedCorpus {
        corpus,
        skipped_empty,
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "doc".into())
}

fn parse_label(path: &Path, line: u64, raw: &str) -> Result<BiasClass> {
    raw.parse().map_err(|_| CorpusError::UnknownLabel {
        path: path.to_path_buf(),
        line,
        label: raw.to_string(),
    })
}

fn read_csv(path: &Path, columns: &ColumnConfig) -> Result<(Vec<Document>, usize)> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        CorpusError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        }
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let text_col = column(&columns.text)?;
    let label_col = match &columns.label {
        LabelSource::Column(name) => Some(column(name)?),
        LabelSource::Fixed(_) => None,
    };
    let id_col = columns.id.as_deref().map(column).transpose()?;
    let stem = file_stem(path);

    let mut documents = Vec::new();
    let mut skipped = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(row as u64 + 2);
        let text = record.get(text_col).unwrap_or("");
        if text.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let label = match (&columns.label, label_col) {
            (LabelSource::Fixed(class), _) => *class,
            (_, Some(col)) => parse_label(path, line, record.get(col).unwrap_or(""))?,
            (LabelSource::Column(_), None) => unreachable!("label column resolved above"),
        };
        let id = match id_col {
            Some(col) => record.get(col).unwrap_or("").to_string(),
            None => format!("{stem}:{}", row + 1),
        };
        documents.push(Document {
            id,
            text: text.to_string(),
            label,
        });
    }
    Ok((documents, skipped))
}

fn read_jsonl(path: &Path, columns: &ColumnConfig) -> Result<(Vec<Document>, usize)> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = file_stem(path);
    let mut documents = Vec::new();
    let mut skipped = 0;
    let mut row = 0usize;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let parse_err = |message: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("expected a JSON object".into()))?;
        let field = |key: &str| -> Result<&str> {
            match obj.get(key) {
                Some(serde_json::Value::String(s)) => Ok(s.as_str()),
                Some(_) => Err(parse_err(format!("`{key}` must be a string"))),
                None => Err(CorpusError::MissingColumn {
                    path: path.to_path_buf(),
                    column: key.to_string(),
                }),
            }
        };
        let text = field(&columns.text)?;
        if text.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let label = match &columns.label {
            LabelSource::Fixed(class) => *class,
            LabelSource::Column(key) => parse_label(path, lineno, field(key)?)?,
        };
        let id = match columns.id.as_deref() {
            Some(key) => field(key)?.to_string(),
            None => format!("{stem}:{row}"),
        };
        documents.push(Document {
            id,
            text: text.to_string(),
            label,
        });
    }
    Ok((documents, skipped))
}

/// Reduce every present class to exactly `per_class` documents.
///
/// Sampling is uniform without replacement, driven by a per-class stream
/// derived from `seed`. Classes already at `per_class` pass through untouched,
/// and the output keeps the input's document order.
pub fn balance_subsample(corpus: &Corpus, per_class: usize, seed: u64) -> Result<Corpus> {
    if per_class == 0 {
        return Err(CorpusError::ZeroPerClass);
    }
    let counts = corpus.class_counts();
    for class in BiasClass::ALL {
        let available = counts[class.index()];
        if available > 0 && available < per_class {
            return Err(CorpusError::ClassTooSmall {
                class,
                available,
                requested: per_class,
            });
        }
    }

    let mut keep = vec![false; corpus.len()];
    for class in BiasClass::ALL {
        let members: Vec<usize> = corpus
            .documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() == per_class {
            members.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        let mut rng = seed::rng(seed::derive(seed, "balance", class.index() as u64));
        for pick in rand::seq::index::sample(&mut rng, members.len(), per_class) {
            keep[members[pick]] = true;
        }
    }

    let documents = corpus
        .documents
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(d, _)| d.clone())
        .collect();
    Corpus::new(
        documents,
        format!(
            "{} | balanced to {per_class} per class (seed {seed})",
            corpus.provenance
        ),
    )
}

/// Train/test partition of a corpus, ids listed in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl SplitIndices {
    /// Short hex digest identifying the exact membership of both sides.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, ids) in [("train", &self.train), ("test", &self.test)] {
            hasher.update(tag.as_bytes());
            for id in ids.iter() {
                hasher.update([0u8]);
                hasher.update(id.as_bytes());
            }
            hasher.update([0xffu8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Corpus row positions of the train and test ids.
    pub fn rows(&self, corpus: &Corpus) -> (Vec<usize>, Vec<usize>) {
        let lookup: HashMap<&str, usize> =
            corpus.ids().enumerate().map(|(i, id)| (id, i)).collect();
        let map = |ids: &[String]| ids.iter().map(|id| lookup[id.as_str()]).collect();
        (map(&self.train), map(&self.test))
    }
}

/// Per-class train counts for a stratified split.
///
/// Each class gets `floor(fraction * n)`; the shortfall against
/// `round(fraction * total)` is handed out one document at a time in class
/// order, never emptying a class's test side.
pub fn stratum_train_counts(class_sizes: &[usize; 4], train_fraction: f64) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for (c, &n) in class_sizes.iter().enumerate() {
        counts[c] = (train_fraction * n as f64).floor() as usize;
    }
    let total: usize = class_sizes.iter().sum();
    let target = (train_fraction * total as f64).round() as usize;
    let mut extra = target.saturating_sub(counts.iter().sum());
    for (c, &n) in class_sizes.iter().enumerate() {
        if extra == 0 {
            break;
        }
        if n > 0 && counts[c] + 1 < n {
            counts[c] += 1;
            extra -= 1;
        }
    }
    counts
}

pub fn stratified_split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::BadFraction(train_fraction));
    }
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let sizes = corpus.class_counts();
    let train_counts = stratum_train_counts(&sizes, train_fraction);
    for class in BiasClass::ALL {
        let (n, t) = (sizes[class.index()], train_counts[class.index()]);
        if n > 0 && (t == 0 || t >= n) {
            return Err(CorpusError::StratumTooSmall {
                class,
                size: n,
                fraction: train_fraction,
            });
        }
    }

    let mut in_train = vec![false; corpus.len()];
    for class in BiasClass::ALL {
        let mut members: Vec<usize> = corpus
            .documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = seed::rng(seed::derive(seed, "split", class.index() as u64));
        members.shuffle(&mut rng);
        for &i in &members[..train_counts[class.index()]] {
            in_train[i] = true;
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (doc, &t) in corpus.documents.iter().zip(&in_train) {
        if t {
            train.push(doc.id.clone());
        } else {
            test.push(doc.id.clone());
        }
    }
    Ok(SplitIndices {
        train,
        test,
        seed,
        train_fraction,
    })
}
