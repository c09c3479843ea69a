//! Repeated-split KNN experiment grid, summary table and significance tests.
//!
//! Every run draws one stratified split from a seed derived from
//! `(master_seed, run_index)` and evaluates every embedding and every k on
//! that same split, so comparisons between cells are paired by run.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use indexmap::IndexMap;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{stratified_split, Corpus, CorpusError};
use crate::embedding_store::{align, read_embeddings, EmbeddingError, EmbeddingSet};
use crate::knn::{accuracy, KnnError, KnnModel};
use crate::seed;
use crate::stats::{bonferroni, welch_t_test, StatsError, TestResult};

/// Significance level for directional claims (after correction).
pub const ALPHA: f64 = 0.01;
/// Below this many runs per cell the report carries a power warning.
pub const MIN_POWERED_RUNS: usize = 30;

pub const FULL_BERT: &str = "full_bert";
pub const MINI_BERT: &str = "mini_bert";
pub const FULL_ROBERTA: &str = "full_roberta";
pub const RAW_ROBERTA: &str = "raw_roberta";

const BERT_MODELS: [&str; 2] = [FULL_BERT, MINI_BERT];
const ROBERTA_MODELS: [&str; 2] = [FULL_ROBERTA, RAW_ROBERTA];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding `{model}`: {source}")]
    Embedding {
        model: String,
        #[source]
        source: EmbeddingError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("k = {k} exceeds the {train} training documents of run {run}")]
    KTooLarge { k: usize, train: usize, run: usize },
    #[error("cell ({model}, k={k}) has {runs} runs; comparisons need at least 2")]
    InsufficientRuns { model: String, k: usize, runs: usize },
    #[error("results file: {0}")]
    Results(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Model name → embedding file, in report order.
    pub embedding_paths: IndexMap<String, PathBuf>,
    pub k_values: Vec<usize>,
    pub runs: usize,
    pub train_fraction: f64,
    pub master_seed: u64,
    pub per_class: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            embedding_paths: IndexMap::new(),
            k_values: vec![3, 10, 25],
            runs: 50,
            train_fraction: 0.7,
            master_seed: 0,
            per_class: 504,
        }
    }
}

/// Accuracy of one (model, k, run) cell evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_name: String,
    pub k: usize,
    pub run_index: usize,
    pub accuracy: f64,
    /// Digest of the split this evaluation used; empty when read back from CSV.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub split_digest: String,
}

/// Seed and split digest of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSplit {
    pub run_index: usize,
    pub seed: u64,
    pub digest: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<RunResult>,
    pub splits: Vec<RunSplit>,
}

/// Load, align and evaluate every configured embedding.
pub fn run_experiment(config: &ExperimentConfig, corpus: &Corpus) -> Result<ExperimentOutput> {
    let mut sets = Vec::with_capacity(config.embedding_paths.len());
    for (model, path) in &config.embedding_paths {
        let wrap = |source| EvalError::Embedding {
            model: model.clone(),
            source,
        };
        let raw = read_embeddings(path).map_err(wrap)?;
        let aligned = align(&raw, corpus).map_err(wrap)?;
        sets.push((model.clone(), aligned));
    }
    run_grid(
        &sets,
        corpus,
        &config.k_values,
        config.runs,
        config.train_fraction,
        config.master_seed,
    )
}

/// Evaluate pre-aligned embedding sets on `runs` shared splits.
///
/// Each set must list the corpus documents in corpus order. The result list
/// is ordered by (model, k, run index) with models and k in the given order.
pub fn run_grid(
    sets: &[(String, EmbeddingSet)],
    corpus: &Corpus,
    k_values: &[usize],
    runs: usize,
    train_fraction: f64,
    master_seed: u64,
) -> Result<ExperimentOutput> {
    if sets.is_empty() {
        return Err(EvalError::Config("no embeddings configured".into()));
    }
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(EvalError::Config("k values must be non-empty and positive".into()));
    }
    if runs == 0 {
        return Err(EvalError::Config("runs must be positive".into()));
    }
    for (i, (name, _)) in sets.iter().enumerate() {
        if sets[..i].iter().any(|(other, _)| other == name) {
            return Err(EvalError::Config(format!("model `{name}` configured twice")));
        }
    }
    for (name, set) in sets {
        let in_order = set.len() == corpus.len()
            && set.records().iter().zip(corpus.ids()).all(|(r, id)| r.doc_id == id);
        if !in_order {
            return Err(EvalError::Config(format!(
                "embedding `{name}` is not aligned to the corpus"
            )));
        }
    }
    let k_max = *k_values.iter().max().expect("non-empty");
    let truth = corpus.labels();
    let matrices: Vec<Array2<f64>> = sets.iter().map(|(_, s)| s.matrix()).collect();

    let per_run: Vec<Result<(RunSplit, Vec<RunResult>)>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let run_seed = seed::run_seed(master_seed, run as u64);
            let split = stratified_split(corpus, train_fraction, run_seed)?;
            let digest = split.digest();
            let (train_rows, test_rows) = split.rows(corpus);
            if k_max > train_rows.len() {
                return Err(EvalError::KTooLarge {
                    k: k_max,
                    train: train_rows.len(),
                    run,
                });
            }
            let train_labels: Vec<_> = train_rows.iter().map(|&i| truth[i]).collect();
            let test_truth: Vec<_> = test_rows.iter().map(|&i| truth[i]).collect();

            let mut results = Vec::with_capacity(sets.len() * k_values.len());
            for ((name, _), matrix) in sets.iter().zip(&matrices) {
                let train = matrix.select(ndarray::Axis(0), &train_rows);
                let model = KnnModel::fit(train.view(), &train_labels, k_max)?;
                // one neighbor search per query; each k votes on a prefix
                let mut predictions = vec![Vec::with_capacity(test_rows.len()); k_values.len()];
                for &row in &test_rows {
                    let query = matrix.row(row);
                    let neighbors =
                        model.neighbors(query.as_slice().expect("standard layout"), k_max)?;
                    for (slot, &k) in predictions.iter_mut().zip(k_values) {
                        slot.push(model.vote(&neighbors[..k]).expect("k >= 1"));
                    }
                }
                for (preds, &k) in predictions.iter().zip(k_values) {
                    results.push(RunResult {
                        model_name: name.clone(),
                        k,
                        run_index: run,
                        accuracy: accuracy(preds, &test_truth)?,
                        split_digest: digest.clone(),
                    });
                }
            }
            let info = RunSplit {
                run_index: run,
                seed: run_seed,
                digest,
                train: train_rows.len(),
                test: test_rows.len(),
            };
            Ok((info, results))
        })
        .collect();

    let mut splits = Vec::with_capacity(runs);
    let mut results = Vec::with_capacity(runs * sets.len() * k_values.len());
    for item in per_run {
        let (info, rs) = item?;
        splits.push(info);
        results.extend(rs);
    }
    let model_pos: HashMap<&str, usize> = sets
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();
    let k_pos: HashMap<usize, usize> = k_values.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    results.sort_by_key(|r| (model_pos[r.model_name.as_str()], k_pos[&r.k], r.run_index));
    Ok(ExperimentOutput { results, splits })
}

/// Per-cell summary over runs. `low`/`high` are the observed extremes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub sd: f64,
    /// Normal-approximation 95% interval for the mean.
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub runs: usize,
}

impl SummaryCell {
    pub fn from_sample(values: &[f64]) -> Self {
        let n = values.len();
        let low = values.iter().copied().fold(f64::INFINITY, f64::min);
        let high = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // rounding can push the mean of a constant sample past its extremes
        let mean = (values.iter().sum::<f64>() / n as f64).clamp(low, high);
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / (n as f64).sqrt();
        Self {
            mean,
            low,
            high,
            sd,
            ci95_low: mean - half,
            ci95_high: mean + half,
            runs: n,
        }
    }

    /// `0.99 (0.98,1.00)`.
    pub fn render(&self) -> String {
        format!("{:.2} ({:.2},{:.2})", self.mean, self.low, self.high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub model: String,
    pub k: usize,
    #[serde(flatten)]
    pub summary: SummaryCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryGrid {
    pub models: Vec<String>,
    pub k_values: Vec<usize>,
    pub cells: Vec<GridCell>,
}

impl SummaryGrid {
    pub fn get(&self, model: &str, k: usize) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.k == k)
            .map(|c| &c.summary)
    }
}

/// Accuracy samples per (model, k), in first-appearance order, each sorted by run.
fn cell_samples(results: &[RunResult]) -> (Vec<String>, Vec<usize>, IndexMap<(String, usize), Vec<f64>>) {
    let mut models: Vec<String> = Vec::new();
    let mut k_values: Vec<usize> = Vec::new();
    let mut grouped: IndexMap<(String, usize), Vec<(usize, f64)>> = IndexMap::new();
    for r in results {
        if !models.contains(&r.model_name) {
            models.push(r.model_name.clone());
        }
        if !k_values.contains(&r.k) {
            k_values.push(r.k);
        }
        grouped
            .entry((r.model_name.clone(), r.k))
            .or_default()
            .push((r.run_index, r.accuracy));
    }
    let samples = grouped
        .into_iter()
        .map(|(key, mut v)| {
            v.sort_by_key(|(run, _)| *run);
            (key, v.into_iter().map(|(_, a)| a).collect())
        })
        .collect();
    (models, k_values, samples)
}

pub fn summarize(results: &[RunResult]) -> SummaryGrid {
    let (models, k_values, samples) = cell_samples(results);
    let mut cells = Vec::new();
    for model in &models {
        for &k in &k_values {
            if let Some(values) = samples.get(&(model.clone(), k)) {
                cells.push(GridCell {
                    model: model.clone(),
                    k,
                    summary: SummaryCell::from_sample(values),
                });
            }
        }
    }
    SummaryGrid {
        models,
        k_values,
        cells,
    }
}

/// One member of the test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    /// `"k=3: full_bert vs mini_bert"` or `"k=3 vs k=25 (pooled)"`.
    pub name: String,
    pub a: String,
    pub b: String,
    /// Set for a within-k model comparison; `None` for pooled k comparisons.
    pub k: Option<usize>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `None` when both samples are constant and t is undefined.
    pub t_stat: Option<f64>,
    pub df: Option<f64>,
    pub p_value: f64,
    pub p_adjusted: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    NotEvaluated,
}

/// "`better` outperforms `worse`" checked against one family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub better: String,
    pub worse: String,
    pub k: Option<usize>,
    pub mean_better: f64,
    pub mean_worse: f64,
    pub p_adjusted: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub id: String,
    pub description: String,
    pub status: ClaimStatus,
    pub checks: Vec<DirectionalCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub grid: SummaryGrid,
    pub tests: Vec<PairTest>,
    pub family_size: usize,
    pub alpha: f64,
    pub claims: Vec<ClaimCheck>,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn claim(&self, id: &str) -> Option<&ClaimCheck> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn test(&self, a: &str, b: &str, k: Option<usize>) -> Option<&PairTest> {
        self.tests
            .iter()
            .find(|t| t.k == k && ((t.a == a && t.b == b) || (t.a == b && t.b == a)))
    }
}

/// Welch test that tolerates two constant samples.
fn family_test(a: &[f64], b: &[f64]) -> Result<(Option<TestResult>, f64, Option<String>)> {
    match welch_t_test(a, b) {
        Ok(r) => Ok((Some(r), r.p_two_sided, None)),
        Err(StatsError::ZeroVariance) => {
            let (ma, mb) = (a[0], b[0]);
            if ma == mb {
                Ok((None, 1.0, Some("both samples constant and equal".into())))
            } else {
                Ok((None, 0.0, Some("both samples constant with different values".into())))
            }
        }
        Err(e) => Err(e.into()),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Run the declared test family and evaluate the directional claims.
///
/// The family is every model pair within each k plus every pair of k values
/// with accuracies pooled across models; all p-values are Bonferroni-adjusted
/// by the family size.
pub fn compare(results: &[RunResult]) -> Result<ComparisonReport> {
    let grid = summarize(results);
    let (models, k_values, samples) = cell_samples(results);
    if models.len() < 2 && k_values.len() < 2 {
        return Err(EvalError::Config(
            "comparisons need at least two models or two k values".into(),
        ));
    }
    let mut min_runs = usize::MAX;
    for ((model, k), values) in &samples {
        if values.len() < 2 {
            return Err(EvalError::InsufficientRuns {
                model: model.clone(),
                k: *k,
                runs: values.len(),
            });
        }
        min_runs = min_runs.min(values.len());
    }

    let mut raw: Vec<(String, String, String, Option<usize>, Vec<f64>, Vec<f64>)> = Vec::new();
    for &k in &k_values {
        for i in 0..models.len() {
            for j in (i + 1)..models.len() {
                let (Some(a), Some(b)) = (
                    samples.get(&(models[i].clone(), k)),
                    samples.get(&(models[j].clone(), k)),
                ) else {
                    continue;
                };
                raw.push((
                    format!("k={k}: {} vs {}", models[i], models[j]),
                    models[i].clone(),
                    models[j].clone(),
                    Some(k),
                    a.clone(),
                    b.clone(),
                ));
            }
        }
    }
    let pooled = |k: usize| -> Vec<f64> {
        models
            .iter()
            .filter_map(|m| samples.get(&(m.clone(), k)))
            .flatten()
            .copied()
            .collect()
    };
    for i in 0..k_values.len() {
        for j in (i + 1)..k_values.len() {
            let (ka, kb) = (k_values[i], k_values[j]);
            raw.push((
                format!("k={ka} vs k={kb} (pooled)"),
                format!("k={ka}"),
                format!("k={kb}"),
                None,
                pooled(ka),
                pooled(kb),
            ));
        }
    }

    let family_size = raw.len();
    let mut outcomes = Vec::with_capacity(raw.len());
    for (.., a, b) in &raw {
        outcomes.push(family_test(a, b)?);
    }
    let p_values: Vec<f64> = outcomes.iter().map(|(_, p, _)| *p).collect();
    let adjusted = bonferroni(&p_values, Some(family_size))?;
    let tests: Vec<PairTest> = raw
        .into_iter()
        .zip(outcomes)
        .zip(adjusted)
        .map(|(((name, a, b, k, sa, sb), (res, p, note)), p_adjusted)| PairTest {
            name,
            a,
            b,
            k,
            mean_a: mean(&sa),
            mean_b: mean(&sb),
            t_stat: res.map(|r| r.t_stat),
            df: res.map(|r| r.df),
            p_value: p,
            p_adjusted,
            note,
        })
        .collect();

    let mut report = ComparisonReport {
        grid,
        tests,
        family_size,
        alpha: ALPHA,
        claims: Vec::new(),
        warnings: Vec::new(),
    };
    if min_runs < MIN_POWERED_RUNS {
        report.warnings.push(format!(
            "below-power run count: {min_runs} runs per cell (at least {MIN_POWERED_RUNS} recommended)"
        ));
    }
    report.claims = evaluate_claims(&report, &models, &k_values);
    Ok(report)
}

/// Directional check of `better` over `worse` using the family test.
pub fn directional(report: &ComparisonReport, better: &str, worse: &str, k: Option<usize>) -> Option<DirectionalCheck> {
    let test = report.test(better, worse, k)?;
    let (mean_better, mean_worse) = if test.a == better {
        (test.mean_a, test.mean_b)
    } else {
        (test.mean_b, test.mean_a)
    };
    Some(DirectionalCheck {
        better: better.to_string(),
        worse: worse.to_string(),
        k,
        mean_better,
        mean_worse,
        p_adjusted: test.p_adjusted,
        pass: mean_better > mean_worse && test.p_adjusted < report.alpha,
    })
}

fn claim_from(id: &str, description: &str, checks: Vec<Option<DirectionalCheck>>) -> ClaimCheck {
    let checks: Vec<DirectionalCheck> = checks.into_iter().flatten().collect();
    let status = if checks.is_empty() {
        ClaimStatus::NotEvaluated
    } else if checks.iter().all(|c| c.pass) {
        ClaimStatus::Pass
    } else {
        ClaimStatus::Fail
    };
    ClaimCheck {
        id: id.into(),
        description: description.into(),
        status,
        checks,
    }
}

fn evaluate_claims(report: &ComparisonReport, models: &[String], k_values: &[usize]) -> Vec<ClaimCheck> {
    let has = |m: &str| models.iter().any(|x| x == m);
    let mut claims = Vec::new();

    let mut sorted_k = k_values.to_vec();
    sorted_k.sort_unstable();
    let mut k_checks = Vec::new();
    if let Some((&largest, smaller)) = sorted_k.split_last() {
        for &k in smaller {
            k_checks.push(directional(report, &format!("k={k}"), &format!("k={largest}"), None));
        }
    }
    claims.push(claim_from(
        "smaller_k_beats_largest_k",
        "each smaller k outperforms the largest k (accuracies pooled across embeddings)",
        k_checks,
    ));

    let pairs = |better: &[&str], worse: &[&str]| -> Vec<Option<DirectionalCheck>> {
        let mut out = Vec::new();
        for &k in k_values {
            for b in better.iter().filter(|m| has(m)) {
                for w in worse.iter().filter(|m| has(m)) {
                    out.push(directional(report, b, w, Some(k)));
                }
            }
        }
        out
    };
    claims.push(claim_from(
        "bert_beats_roberta",
        "both BERT embeddings outperform both RoBERTa embeddings at every k",
        pairs(&BERT_MODELS, &ROBERTA_MODELS),
    ));
    claims.push(claim_from(
        "bert_beats_raw_roberta",
        "both BERT embeddings outperform raw RoBERTa at every k",
        pairs(&BERT_MODELS, &[RAW_ROBERTA]),
    ));

    let mut best_checks = Vec::new();
    if has(MINI_BERT) && k_values.contains(&3) {
        for other in models.iter().filter(|m| m.as_str() != MINI_BERT) {
            best_checks.push(directional(report, MINI_BERT, other, Some(3)));
        }
    }
    claims.push(claim_from(
        "mini_bert_best_at_k3",
        "mini BERT outperforms every other embedding at k=3",
        best_checks,
    ));
    claims
}

/// Display name used in the text table.
pub fn display_name(model: &str) -> &str {
    match model {
        FULL_BERT => "Full BERT",
        MINI_BERT => "Mini BERT",
        FULL_ROBERTA => "Full RoBERTa",
        RAW_ROBERTA => "Raw RoBERTa",
        other => other,
    }
}

/// Human-readable grid in the `mean (low,high)` layout, followed by the tests.
pub fn render_table(report: &ComparisonReport) -> String {
    let grid = &report.grid;
    let header: Vec<String> = std::iter::once("Embedding".to_string())
        .chain(grid.k_values.iter().map(|k| format!("K={k}")))
        .collect();
    let mut rows = vec![header];
    for model in &grid.models {
        let mut row = vec![display_name(model).to_string()];
        for &k in &grid.k_values {
            row.push(grid.get(model, k).map(|c| c.render()).unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::from("Embedding Results (mean accuracy; parentheses: min,max over runs)\n");
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-|-"));
            out.push('\n');
        }
    }
    out.push_str(&format!(
        "\nWelch t-tests, Bonferroni family size m = {}, alpha = {}\n",
        report.family_size, report.alpha
    ));
    for t in &report.tests {
        let t_stat = t.t_stat.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        out.push_str(&format!(
            "  {}: t = {}, p = {:.3e}, adjusted p = {:.3e}\n",
            t.name, t_stat, t.p_value, t.p_adjusted
        ));
    }
    out.push_str("\nClaims\n");
    for c in &report.claims {
        let status = match c.status {
            ClaimStatus::Pass => "PASS",
            ClaimStatus::Fail => "FAIL",
            ClaimStatus::NotEvaluated => "not evaluated",
        };
        out.push_str(&format!("  [{status}] {}: {}\n", c.id, c.description));
    }
    for w in &report.warnings {
        out.push_str(&format!("\nwarning: {w}\n"));
    }
    out
}

/// `model,k,run,accuracy` CSV.
pub fn write_results_csv<W: Write>(results: &[RunResult], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["model", "k", "run", "accuracy"])?;
    for r in results {
        writer.write_record([
            r.model_name.clone(),
            r.k.to_string(),
            r.run_index.to_string(),
            r.accuracy.to_string(),
        ])?;
    }
    writer.flush()
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<RunResult>> {
    #[derive(Deserialize)]
    struct Row {
        model: String,
        k: usize,
        run: usize,
        accuracy: f64,
    }
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| EvalError::Results(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(EvalError::Results(format!(
                "accuracy {} outside [0, 1]",
                row.accuracy
            )));
        }
        out.push(RunResult {
            model_name: row.model,
            k: row.k,
            run_index: row.run,
            accuracy: row.accuracy,
            split_digest: String::new(),
        });
    }
    if out.is_empty() {
        return Err(EvalError::Results("no result rows".into()));
    }
    Ok(out)
}

/// Machine-readable report written next to the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub prng: String,
    pub design: String,
    pub master_seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub runs: usize,
    pub splits: Vec<RunSplit>,
    pub comparison: ComparisonReport,
}

impl EvalReport {
    pub fn new(
        comparison: ComparisonReport,
        master_seed: Option<u64>,
        train_fraction: Option<f64>,
        splits: Vec<RunSplit>,
    ) -> Self {
        let runs = comparison
            .grid
            .cells
            .iter()
            .map(|c| c.summary.runs)
            .max()
            .unwrap_or(0);
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            prng: seed::PRNG_ID.to_string(),
            design: "paired: every embedding and k share the stratified split of each run; \
                     cells report mean with observed (min,max) and a normal-approximation 95% CI"
                .to_string(),
            master_seed,
            train_fraction,
            runs,
            splits,
            comparison,
        }
    }
}
