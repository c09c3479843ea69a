//! Brute-force k-nearest-neighbor classification with majority voting.
//!
//! Neighbors are ordered by Euclidean distance, ties going to the lower
//! training row. The predicted label is the most frequent one among the k
//! nearest; when several labels share the top count, the one held by the
//! nearest of the tied neighbors wins.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::BiasClass;
use crate::embedding_store::euclidean;

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} exceeds the {m} training points")]
    KTooLarge { k: usize, m: usize },
    #[error("{points} training rows but {labels} labels")]
    Misaligned { points: usize, labels: usize },
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("query has dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{predicted} predictions vs {truth} true labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("accuracy of an empty prediction list")]
    EmptyInput,
}

pub type Result<T, E = KnnError> = std::result::Result<T, E>;

/// A neighbor of a query: distance and training row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub row: usize,
}

fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.row.cmp(&b.row))
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    points: Array2<f64>,
    labels: Vec<BiasClass>,
}

impl KnnModel {
    pub fn fit(train: ArrayView2<f64>, labels: &[BiasClass], k: usize) -> Result<Self> {
        let m = train.nrows();
        if m == 0 {
            return Err(KnnError::EmptyTrainingSet);
        }
        if labels.len() != m {
            return Err(KnnError::Misaligned {
                points: m,
                labels: labels.len(),
            });
        }
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > m {
            return Err(KnnError::KTooLarge { k, m });
        }
        if train.iter().any(|v| !v.is_finite()) {
            return Err(KnnError::NonFinite);
        }
        Ok(Self {
            k,
            points: train.as_standard_layout().into_owned(),
            labels: labels.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn labels(&self) -> &[BiasClass] {
        &self.labels
    }

    /// The `count` nearest training rows, sorted nearest first.
    pub fn neighbors(&self, query: &[f64], count: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim() {
            return Err(KnnError::Dimension {
                expected: self.dim(),
                found: query.len(),
            });
        }
        let count = count.min(self.len());
        let mut all: Vec<Neighbor> = self
            .points
            .rows()
            .into_iter()
            .enumerate()
            .map(|(row, p)| Neighbor {
                distance: euclidean(query, p.as_slice().expect("standard layout"))
                    .expect("dimension checked"),
                row,
            })
            .collect();
        if count == 0 {
            return Ok(Vec::new());
        }
        if count < all.len() {
            all.select_nth_unstable_by(count - 1, neighbor_order);
            all.truncate(count);
        }
        all.sort_unstable_by(neighbor_order);
        Ok(all)
    }

    /// Majority label among `neighbors` (sorted nearest first).
    pub fn vote(&self, neighbors: &[Neighbor]) -> Option<BiasClass> {
        majority_vote(neighbors.iter().map(|n| self.labels[n.row]))
    }

    pub fn predict(&self, query: &[f64]) -> Result<BiasClass> {
        let neighbors = self.neighbors(query, self.k)?;
        Ok(self.vote(&neighbors).expect("k >= 1 neighbors"))
    }

    pub fn predict_batch(&self, queries: ArrayView2<f64>) -> Result<Vec<BiasClass>> {
        if queries.nrows() > 0 && queries.ncols() != self.dim() {
            return Err(KnnError::Dimension {
                expected: self.dim(),
                found: queries.ncols(),
            });
        }
        let queries = queries.as_standard_layout();
        queries
            .rows()
            .into_iter()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|q| self.predict(q.as_slice().expect("standard layout")))
            .collect()
    }
}

/// Modal label of a nearest-first label sequence; ties go to the label that
/// appears first.
pub fn majority_vote<I: IntoIterator<Item = BiasClass>>(nearest_first: I) -> Option<BiasClass> {
    let labels: Vec<BiasClass> = nearest_first.into_iter().collect();
    let mut counts = [0usize; 4];
    for l in &labels {
        counts[l.index()] += 1;
    }
    let top = *counts.iter().max()?;
    labels.into_iter().find(|l| counts[l.index()] == top)
}

pub fn accuracy(predicted: &[BiasClass], truth: &[BiasClass]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(KnnError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(KnnError::EmptyInput);
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}
