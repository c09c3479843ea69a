//! The `bias-bench-emb/1` embedding file format and the Euclidean metric.
//!
//! A file is JSON-lines: a header object
//! `{"format":"bias-bench-emb/1","model":..,"dim":..,"count":..}` followed by
//! `count` records `{"doc_id":..,"label":..,"vector":[..]}`. Vectors are held
//! as `f64`; the canonical writer rounds every component to 9 significant
//! digits, which is enough to carry `f32` values exactly and makes a
//! read/write cycle byte-stable.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BiasClass, Corpus};

pub const FORMAT_TAG: &str = "bias-bench-emb/1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing header line")]
    MissingHeader,
    #[error("empty embedding set")]
    Empty,
    #[error("header declares {declared} records but file has {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("record `{doc_id}` has dimension {found}, expected {expected}")]
    Dimension {
        doc_id: String,
        expected: usize,
        found: usize,
    },
    #[error("record `{doc_id}` has a non-finite component")]
    NonFinite { doc_id: String },
    #[error("duplicate doc_id `{0}`")]
    DuplicateId(String),
    #[error("corpus id `{0}` is missing from the embedding set")]
    MissingId(String),
    #[error("label mismatch for `{doc_id}`: embedding says {embedding}, corpus says {corpus}")]
    LabelMismatch {
        doc_id: String,
        embedding: BiasClass,
        corpus: BiasClass,
    },
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub doc_id: String,
    pub label: BiasClass,
    pub vector: Vec<f64>,
}

/// Vectors from one embedding model, one record per document.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    model_name: String,
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    model: String,
    dim: usize,
    count: usize,
}

impl EmbeddingSet {
    /// Build a set, checking dimension, finiteness and id uniqueness.
    pub fn new(
        model_name: impl Into<String>,
        dim: usize,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            check_record(r, dim)?;
            if !seen.insert(r.doc_id.as_str()) {
                return Err(EmbeddingError::DuplicateId(r.doc_id.clone()));
            }
        }
        Ok(Self {
            model_name: model_name.into(),
            dim,
            records,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<BiasClass> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Row-major `len × dim` copy of the vectors.
    pub fn matrix(&self) -> ndarray::Array2<f64> {
        let flat: Vec<f64> = self
            .records
            .iter()
            .flat_map(|r| r.vector.iter().copied())
            .collect();
        ndarray::Array2::from_shape_vec((self.len(), self.dim), flat)
            .expect("records share the set dimension")
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let header = Header {
            format: FORMAT_TAG.into(),
            model: self.model_name.clone(),
            dim: self.dim,
            count: self.records.len(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            line.push_str("{\"doc_id\":");
            line.push_str(&serde_json::to_string(&r.doc_id)?);
            line.push_str(",\"label\":\"");
            line.push_str(r.label.as_str());
            line.push_str("\",\"vector\":[");
            for (i, v) in r.vector.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&canonical_float(*v));
            }
            line.push_str("]}\n");
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn check_record(r: &EmbeddingRecord, dim: usize) -> Result<()> {
    if r.vector.len() != dim {
        return Err(EmbeddingError::Dimension {
            doc_id: r.doc_id.clone(),
            expected: dim,
            found: r.vector.len(),
        });
    }
    if r.vector.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite {
            doc_id: r.doc_id.clone(),
        });
    }
    Ok(())
}

/// Format `v` rounded to 9 significant digits, shortest representation.
pub fn canonical_float(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    let mag = rounded.abs();
    if (1e-4..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_embeddings_from(BufReader::new(file)).map_err(|e| match e {
        EmbeddingError::Io { source, .. } => EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_embeddings_from<R: BufRead>(reader: R) -> Result<EmbeddingSet> {
    let mut lines = reader.lines().enumerate();
    let io_err = |source| EmbeddingError::Io {
        path: PathBuf::new(),
        source,
    };
    let header_line = match lines.next() {
        Some((_, line)) => line.map_err(io_err)?,
        None => return Err(EmbeddingError::MissingHeader),
    };
    let header: Header = serde_json::from_str(&header_line).map_err(|_| EmbeddingError::MissingHeader)?;
    if header.format != FORMAT_TAG {
        return Err(EmbeddingError::Line {
            line: 1,
            message: format!("unsupported format `{}`", header.format),
        });
    }
    if header.dim == 0 {
        return Err(EmbeddingError::Line {
            line: 1,
            message: "dim must be positive".into(),
        });
    }

    let mut records = Vec::with_capacity(header.count);
    let mut seen = HashSet::with_capacity(header.count);
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(io_err)?;
        let at = |message: String| EmbeddingError::Line {
            line: lineno,
            message,
        };
        if line.is_empty() {
            return Err(at("blank line".into()));
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if let Err(e) = check_record(&record, header.dim) {
            return Err(at(e.to_string()));
        }
        if !seen.insert(record.doc_id.clone()) {
            return Err(at(EmbeddingError::DuplicateId(record.doc_id).to_string()));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if records.len() != header.count {
        return Err(EmbeddingError::CountMismatch {
            declared: header.count,
            found: records.len(),
        });
    }
    Ok(EmbeddingSet {
        model_name: header.model,
        dim: header.dim,
        records,
    })
}

/// Restrict and reorder `set` to the corpus's document order.
pub fn align(set: &EmbeddingSet, corpus: &Corpus) -> Result<EmbeddingSet> {
    let by_id: HashMap<&str, &EmbeddingRecord> = set
        .records
        .iter()
        .map(|r| (r.doc_id.as_str(), r))
        .collect();
    let mut records = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let rec = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| EmbeddingError::MissingId(doc.id.clone()))?;
        if rec.label != doc.label {
            return Err(EmbeddingError::LabelMismatch {
                doc_id: doc.id.clone(),
                embedding: rec.label,
                corpus: doc.label,
            });
        }
        records.push((*rec).clone());
    }
    EmbeddingSet::new(set.model_name.clone(), set.dim, records)
}

/// Euclidean distance between equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    Ok(squared_euclidean(a, b).sqrt())
}

/// Squared distance without the length check; callers guarantee equal lengths.
#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn rec(id: &str, label: BiasClass, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            doc_id: id.into(),
            label,
            vector: v,
        }
    }

    fn small_set() -> EmbeddingSet {
        EmbeddingSet::new(
            "toy",
            3,
            vec![
                rec("a", BiasClass::Race, vec![0.1, -2.5, 3.0]),
                rec("b", BiasClass::Gender, vec![1e-7, 123456.789, -0.333333333333]),
                rec("c", BiasClass::Religion, vec![0.0, 1.0, f32::MAX as f64]),
            ],
        )
        .unwrap()
    }

    fn corpus_of(ids: &[(&str, BiasClass)]) -> Corpus {
        Corpus::new(
            ids.iter()
                .map(|(id, label)| Document {
                    id: id.to_string(),
                    text: "t".into(),
                    label: *label,
                })
                .collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let v = [1.5, -2.0, 7.25];
        assert_eq!(euclidean(&v, &v).unwrap(), 0.0);
        assert!(matches!(
            euclidean(&[1.0], &[1.0, 2.0]),
            Err(EmbeddingError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn write_then_read_is_byte_stable() {
        let set = small_set();
        let mut first = Vec::new();
        set.write_to(&mut first).unwrap();
        let back = read_embeddings_from(&first[..]).unwrap();
        let mut second = Vec::new();
        back.write_to(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(back.len(), 3);
        assert_eq!(back.model_name(), "toy");
    }

    #[test]
    fn canonical_float_carries_f32_exactly() {
        for v in [0.1f32, -3.4028235e38, 1.17549435e-38, 0.333_333_34, 7.0, -1e-5] {
            let s = canonical_float(v as f64);
            assert_eq!(s.parse::<f32>().unwrap(), v, "{s}");
        }
        assert_eq!(canonical_float(0.0), "0");
        assert_eq!(canonical_float(-0.0), "0");
        assert_eq!(canonical_float(0.5), "0.5");
        assert_eq!(canonical_float(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn dimension_error_names_line() {
        let body = concat!(
            "{\"format\":\"bias-bench-emb/1\",\"model\":\"m\",\"dim\":3,\"count\":3}\n",
            "{\"doc_id\":\"a\",\"label\":\"race\",\"vector\":[1,2,3]}\n",
            "{\"doc_id\":\"b\",\"label\":\"race\",\"vector\":[1,2,3]}\n",
            "{\"doc_id\":\"c\",\"label\":\"race\",\"vector\":[1,2]}\n",
        );
        match read_embeddings_from(body.as_bytes()) {
            Err(EmbeddingError::Line { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("dimension 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            read_embeddings_from("".as_bytes()),
            Err(EmbeddingError::MissingHeader)
        ));
        assert!(matches!(
            read_embeddings_from("{\"doc_id\":\"a\"}\n".as_bytes()),
            Err(EmbeddingError::MissingHeader)
        ));
        let empty = "{\"format\":\"bias-bench-emb/1\",\"model\":\"m\",\"dim\":3,\"count\":0}\n";
        let err = read_embeddings_from(empty.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty embedding set");

        let dup = concat!(
            "{\"format\":\"bias-bench-emb/1\",\"model\":\"m\",\"dim\":1,\"count\":2}\n",
            "{\"doc_id\":\"a\",\"label\":\"race\",\"vector\":[1]}\n",
            "{\"doc_id\":\"a\",\"label\":\"race\",\"vector\":[2]}\n",
        );
        assert!(matches!(
            read_embeddings_from(dup.as_bytes()),
            Err(EmbeddingError::Line { line: 3, .. })
        ));

        let short = concat!(
            "{\"format\":\"bias-bench-emb/1\",\"model\":\"m\",\"dim\":1,\"count\":2}\n",
            "{\"doc_id\":\"a\",\"label\":\"race\",\"vector\":[1]}\n",
        );
        assert!(matches!(
            read_embeddings_from(short.as_bytes()),
            Err(EmbeddingError::CountMismatch { declared: 2, found: 1 })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let nan = concat!(
            "{\"format\":\"bias-bench-emb/1\",\"model\":\"m\",\"dim\":2,\"count\":1}\n",
            "{\"doc_id\":\"a\",\"label\":\"race\",\"vector\":[1,NaN]}\n",
        );
        assert!(matches!(
            read_embeddings_from(nan.as_bytes()),
            Err(EmbeddingError::Line { line: 2, .. })
        ));
        let inf = EmbeddingSet::new(
            "m",
            1,
            vec![rec("a", BiasClass::Race, vec![f64::INFINITY])],
        );
        assert!(matches!(inf, Err(EmbeddingError::NonFinite { .. })));
    }

    #[test]
    fn align_filters_and_reorders() {
        let set = small_set();
        let corpus = corpus_of(&[("c", BiasClass::Religion), ("a", BiasClass::Race)]);
        let aligned = align(&set, &corpus).unwrap();
        let ids: Vec<_> = aligned.records().iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
    }

    #[test]
    fn align_errors() {
        let set = small_set();
        let missing = corpus_of(&[("a", BiasClass::Race), ("zz", BiasClass::Race)]);
        match align(&set, &missing) {
            Err(EmbeddingError::MissingId(id)) => assert_eq!(id, "zz"),
            other => panic!("unexpected {other:?}"),
        }
        let wrong = corpus_of(&[("a", BiasClass::Gender)]);
        assert!(matches!(
            align(&set, &wrong),
            Err(EmbeddingError::LabelMismatch { .. })
        ));
    }
}
