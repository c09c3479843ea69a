//! Bias-type classification benchmark over pre-computed sentence embeddings.
//!
//! The pipeline runs in the order sample → embed (external) → project → evaluate:
//!
//! * [`corpus`] loads labeled texts, balances classes and produces stratified splits.
//! * [`embedding_store`] reads and writes the `bias-bench-emb/1` embedding format.
//! * [`tsne`] is an exact-gradient t-SNE used for the 2-D scatter plots.
//! * [`knn`] is the brute-force k-nearest-neighbor classifier.
//! * [`stats`] provides Welch's t-test and Bonferroni correction.
//! * [`eval`] runs the repeated-split experiment grid and builds the comparison report.
//! * [`plot`] renders deterministic SVG scatter plots.
//! * [`cli`] wires the stages into the `bias-bench` command.

pub mod cli;
pub mod corpus;
pub mod embedding_store;
pub mod eval;
pub mod knn;
pub mod plot;
pub mod seed;
pub mod stats;
pub mod tsne;

pub use corpus::{BiasClass, Corpus, Document, SplitIndices};
pub use embedding_store::{EmbeddingRecord, EmbeddingSet};
pub use knn::KnnModel;
pub use tsne::{Projection2D, TsneConfig};
