//! Exact t-SNE.
//!
//! Input affinities come from a per-point Gaussian whose bandwidth is found by
//! binary search so the conditional distribution hits the requested
//! perplexity; they are symmetrized into a joint distribution `P`. Output
//! affinities `Q` use the Student-t (one degree of freedom) kernel. The
//! embedding is found by momentum gradient descent on `KL(P || Q)`, with `P`
//! exaggerated during the first iterations. The momentum velocity is reset
//! when exaggeration ends.
//!
//! Everything is O(N²) and computed exactly. Row-wise work is spread over the
//! rayon pool, but each row is reduced in a fixed order and row results are
//! combined sequentially, so results do not depend on the number of workers.

use std::io::{self, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::BiasClass;
use crate::embedding_store::{squared_euclidean, EmbeddingSet};
use crate::seed;

/// Lower bound applied to off-diagonal affinities.
pub const AFFINITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TsneError {
    #[error("invalid t-SNE configuration: {0}")]
    Config(String),
    #[error("t-SNE needs at least {min} points, got {n}")]
    TooFewPoints { n: usize, min: usize },
    #[error("all distances are zero (duplicate points)")]
    DegenerateRow,
    #[error("point {index} coincides with every other point")]
    DuplicatePoint { index: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("non-finite value during optimization at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T, E = TsneError> = std::result::Result<T, E>;

/// Optimizer settings. The defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub out_dim: usize,
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// First iteration that uses `momentum_final`.
    pub momentum_switch_iter: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    pub seed: u64,
    /// Allowed deviation of the row entropy from log2(perplexity), in bits.
    pub perplexity_tol: f64,
    pub perplexity_max_steps: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            out_dim: 2,
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            init_scale: 1e-4,
            seed: 0,
            perplexity_tol: 1e-5,
            perplexity_max_steps: 50,
        }
    }
}

impl TsneConfig {
    /// Check the configuration against an `n`-point input.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(TsneError::Config(msg));
        if self.out_dim == 0 {
            return bad("out_dim must be positive".into());
        }
        if !(self.perplexity.is_finite() && self.perplexity > 1.0) {
            return bad(format!("perplexity {} must exceed 1", self.perplexity));
        }
        if n >= 1 && self.perplexity >= (n - 1) as f64 {
            return bad(format!(
                "perplexity {} must be below N-1 = {} for {n} points",
                self.perplexity,
                n.saturating_sub(1)
            ));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.early_exaggeration.is_finite() && self.early_exaggeration >= 1.0) {
            return bad("early_exaggeration must be at least 1".into());
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad("init_scale must be positive".into());
        }
        if !(self.perplexity_tol.is_finite() && self.perplexity_tol > 0.0) {
            return bad("perplexity_tol must be positive".into());
        }
        if self.perplexity_max_steps == 0 {
            return bad("perplexity_max_steps must be positive".into());
        }
        Ok(())
    }
}

/// Result of the bandwidth search for one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow {
    pub probabilities: Vec<f64>,
    pub sigma: f64,
    /// Base-2 entropy of `probabilities`.
    pub entropy_bits: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Gaussian conditional distribution over neighbors at the target perplexity.
///
/// `sq_dists` holds the squared distances from one point to all others.
/// The search runs on the precision `beta = 1 / (2 sigma^2)`: doubling until
/// the entropy drops below target, then bisecting. It stops once the entropy
/// is within `tol` bits of `log2(perplexity)` or after `max_steps`
/// evaluations, returning the best bandwidth seen.
pub fn conditional_affinities(
    sq_dists: &[f64],
    perplexity: f64,
    tol: f64,
    max_steps: usize,
) -> Result<ConditionalRow> {
    if sq_dists.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(TsneError::NonFiniteInput);
    }
    if !(perplexity.is_finite() && perplexity > 0.0) {
        return Err(TsneError::Config(format!("perplexity {perplexity} must be positive")));
    }
    let d_min = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = sq_dists.iter().copied().fold(0.0, f64::max);
    if sq_dists.is_empty() || d_max <= 0.0 {
        return Err(TsneError::DegenerateRow);
    }
    // Shifting by the minimum leaves the normalized distribution unchanged
    // and keeps the largest weight at exp(0) = 1.
    let shifted: Vec<f64> = sq_dists.iter().map(|d| d - d_min).collect();
    let mean_shifted = shifted.iter().sum::<f64>() / shifted.len() as f64;
    let target = perplexity.log2();

    let entropy_at = |beta: f64| -> f64 {
        let mut z = 0.0;
        let mut weighted = 0.0;
        for &d in &shifted {
            let w = (-beta * d).exp();
            z += w;
            weighted += w * d;
        }
        (z.ln() + beta * weighted / z) / std::f64::consts::LN_2
    };

    let mut beta = 1.0 / mean_shifted.max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut best = (f64::INFINITY, beta);
    let mut steps = 0;
    let mut converged = false;
    while steps < max_steps {
        steps += 1;
        let diff = entropy_at(beta) - target;
        if diff.abs() < best.0 {
            best = (diff.abs(), beta);
        }
        if diff.abs() <= tol {
            converged = true;
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (lo + hi) };
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
    }

    let beta = best.1;
    let mut probabilities: Vec<f64> = shifted.iter().map(|d| (-beta * d).exp()).collect();
    let z: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= z);
    let entropy_bits = -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>();
    Ok(ConditionalRow {
        probabilities,
        sigma: (0.5 / beta).sqrt(),
        entropy_bits,
        steps,
        converged,
    })
}

/// Symmetric input affinities and search diagnostics.
#[derive(Debug, Clone)]
pub struct JointAffinities {
    /// Floored joint distribution; diagonal is zero.
    pub p: Array2<f64>,
    /// Sum of `p` before flooring.
    pub unfloored_sum: f64,
    pub sigmas: Vec<f64>,
    pub entropies_bits: Vec<f64>,
    /// Points whose bandwidth search used every allowed step without converging.
    pub max_steps_hit: Vec<usize>,
}

/// Pairwise squared Euclidean distances, rows computed in parallel.
pub fn squared_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let x = x.as_standard_layout();
    let n = x.nrows();
    let d = x.ncols();
    let data = x.as_slice().expect("standard layout");
    let mut out = Array2::<f64>::zeros((n, n));
    out.as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = &data[i * d..(i + 1) * d];
            for (j, slot) in row.iter_mut().enumerate() {
                if j != i {
                    *slot = squared_euclidean(xi, &data[j * d..(j + 1) * d]);
                }
            }
        });
    out
}

pub fn joint_affinities(x: ArrayView2<f64>, config: &TsneConfig) -> Result<JointAffinities> {
    let n = x.nrows();
    if n < 3 {
        return Err(TsneError::TooFewPoints { n, min: 3 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TsneError::NonFiniteInput);
    }
    config.validate(n)?;
    let dists = squared_distances(x);

    let rows: Vec<Result<ConditionalRow>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = dists.row(i);
            let others: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .collect();
            conditional_affinities(
                &others,
                config.perplexity,
                config.perplexity_tol,
                config.perplexity_max_steps,
            )
            .map_err(|e| match e {
                TsneError::DegenerateRow => TsneError::DuplicatePoint { index: i },
                other => other,
            })
        })
        .collect();

    let mut conditional = Array2::<f64>::zeros((n, n));
    let mut sigmas = Vec::with_capacity(n);
    let mut entropies_bits = Vec::with_capacity(n);
    let mut max_steps_hit = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        let mut probs = row.probabilities.iter();
        for j in 0..n {
            if j != i {
                conditional[[i, j]] = *probs.next().expect("N-1 probabilities");
            }
        }
        if !row.converged && row.steps >= config.perplexity_max_steps {
            max_steps_hit.push(i);
        }
        sigmas.push(row.sigma);
        entropies_bits.push(row.entropy_bits);
    }

    let mut p = symmetrize(&conditional);
    let unfloored_sum = ordered_sum(&p);
    floor_off_diagonal(&mut p);
    Ok(JointAffinities {
        p,
        unfloored_sum,
        sigmas,
        entropies_bits,
        max_steps_hit,
    })
}

/// `(p_{j|i} + p_{i|j}) / 2N`, exactly symmetric with a zero diagonal.
pub fn symmetrize(conditional: &Array2<f64>) -> Array2<f64> {
    let n = conditional.nrows();
    let denom = 2.0 * n as f64;
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (conditional[[i, j]] + conditional[[j, i]]) / denom;
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    p
}

fn floor_off_diagonal(m: &mut Array2<f64>) {
    for ((i, j), v) in m.indexed_iter_mut() {
        if i != j && *v < AFFINITY_FLOOR {
            *v = AFFINITY_FLOOR;
        }
    }
}

/// Row sums in parallel, combined in row order.
fn ordered_sum(m: &Array2<f64>) -> f64 {
    let row_sums: Vec<f64> = m
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| row.iter().sum::<f64>())
        .collect();
    row_sums.iter().sum()
}

/// Output affinities for an embedding.
#[derive(Debug, Clone)]
pub struct LowDimAffinities {
    /// Normalized and floored; diagonal zero.
    pub q: Array2<f64>,
    /// Student-t weights `1 / (1 + |y_i - y_j|^2)`; diagonal zero.
    pub w: Array2<f64>,
    /// Sum of all weights (the normalizer of `q` before flooring).
    pub w_sum: f64,
}

pub fn low_dim_affinities(y: &Array2<f64>) -> Result<LowDimAffinities> {
    let n = y.nrows();
    if n < 3 {
        return Err(TsneError::TooFewPoints { n, min: 3 });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TsneError::NonFiniteInput);
    }
    let mut q = Array2::zeros((n, n));
    let mut w = Array2::zeros((n, n));
    let w_sum = low_dim_affinities_into(y, &mut w, &mut q);
    Ok(LowDimAffinities { q, w, w_sum })
}

/// Fill preallocated `w` and `q` for `y`; returns the weight sum.
fn low_dim_affinities_into(y: &Array2<f64>, w: &mut Array2<f64>, q: &mut Array2<f64>) -> f64 {
    let y = y.as_standard_layout();
    let n = y.nrows();
    let dim = y.ncols();
    let ys = y.as_slice().expect("standard layout");
    let row_sums: Vec<f64> = w
        .as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let yi = &ys[i * dim..(i + 1) * dim];
            let mut sum = 0.0;
            for (j, slot) in row.iter_mut().enumerate() {
                if j == i {
                    *slot = 0.0;
                    continue;
                }
                let v = 1.0 / (1.0 + squared_euclidean(yi, &ys[j * dim..(j + 1) * dim]));
                *slot = v;
                sum += v;
            }
            sum
        })
        .collect();
    let total: f64 = row_sums.iter().sum();
    let ws = w.as_slice().expect("contiguous");
    q.as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if j == i {
                    0.0
                } else {
                    (ws[i * n + j] / total).max(AFFINITY_FLOOR)
                };
            }
        });
    total
}

/// `sum_{i != j} p_ij ln(p_ij / q_ij)`, clamped at zero.
pub fn kl_divergence(p: &Array2<f64>, q: &Array2<f64>) -> Result<f64> {
    if p.dim() != q.dim() || p.nrows() != p.ncols() {
        return Err(TsneError::Shape(format!(
            "P is {:?}, Q is {:?}",
            p.dim(),
            q.dim()
        )));
    }
    let row_sums: Vec<f64> = p
        .axis_iter(Axis(0))
        .into_par_iter()
        .zip(q.axis_iter(Axis(0)).into_par_iter())
        .enumerate()
        .map(|(i, (prow, qrow))| {
            let mut s = 0.0;
            for (j, (&pv, &qv)) in prow.iter().zip(qrow.iter()).enumerate() {
                if j != i && pv > 0.0 {
                    s += pv * (pv / qv).ln();
                }
            }
            s
        })
        .collect();
    Ok(row_sums.iter().sum::<f64>().max(0.0))
}

/// Gradient of `KL(P || Q)` with respect to the embedding:
/// row i is `4 * sum_j (p_ij - q_ij) * w_ij * (y_i - y_j)`.
pub fn tsne_gradient(
    p: &Array2<f64>,
    q: &Array2<f64>,
    w: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<Array2<f64>> {
    let n = y.nrows();
    for (name, m) in [("P", p), ("Q", q), ("W", w)] {
        if m.dim() != (n, n) {
            return Err(TsneError::Shape(format!(
                "{name} is {:?}, expected ({n}, {n})",
                m.dim()
            )));
        }
    }
    let mut grad = Array2::zeros(y.raw_dim());
    gradient_into(p, 1.0, q, w, y, &mut grad);
    Ok(grad)
}

fn gradient_into(
    p: &Array2<f64>,
    exaggeration: f64,
    q: &Array2<f64>,
    w: &Array2<f64>,
    y: &Array2<f64>,
    grad: &mut Array2<f64>,
) {
    let y = y.as_standard_layout();
    let n = y.nrows();
    let dim = y.ncols();
    let ys = y.as_slice().expect("standard layout");
    let (ps, qs, ws) = (
        p.as_slice().expect("contiguous"),
        q.as_slice().expect("contiguous"),
        w.as_slice().expect("contiguous"),
    );
    grad.as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, g)| {
            g.iter_mut().for_each(|v| *v = 0.0);
            let yi = &ys[i * dim..(i + 1) * dim];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let k = i * n + j;
                let coeff = (exaggeration * ps[k] - qs[k]) * ws[k];
                let yj = &ys[j * dim..(j + 1) * dim];
                for c in 0..dim {
                    g[c] += coeff * (yi[c] - yj[c]);
                }
            }
            g.iter_mut().for_each(|v| *v *= 4.0);
        });
}

/// A low-dimensional embedding with optimization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// `N × out_dim`, rows aligned with the input order.
    pub coords: Array2<f64>,
    /// Un-exaggerated KL divergence at every iteration.
    pub kl_trace: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Points whose perplexity search exhausted its step budget.
    pub search_max_steps_hit: Vec<usize>,
}

impl Projection2D {
    /// `doc_id,label,x,y` CSV; requires a 2-D projection.
    pub fn write_csv<W: Write>(&self, out: &mut W, ids: &[&str], labels: &[BiasClass]) -> io::Result<()> {
        if self.coords.ncols() != 2 || ids.len() != self.coords.nrows() || labels.len() != ids.len() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "projection CSV needs 2-D coordinates aligned with ids and labels",
            ));
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["doc_id", "label", "x", "y"])?;
        for ((id, label), row) in ids.iter().zip(labels).zip(self.coords.rows()) {
            writer.write_record([
                id.to_string(),
                label.to_string(),
                row[0].to_string(),
                row[1].to_string(),
            ])?;
        }
        writer.flush()
    }

    /// `iter,kl` CSV.
    pub fn write_kl_trace<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "iter,kl")?;
        for (i, kl) in self.kl_trace.iter().enumerate() {
            writeln!(out, "{i},{kl}")?;
        }
        Ok(())
    }
}

pub fn run_tsne(set: &EmbeddingSet, config: &TsneConfig) -> Result<Projection2D> {
    tsne_matrix(set.matrix().view(), config)
}

/// t-SNE on the rows of `x`.
pub fn tsne_matrix(x: ArrayView2<f64>, config: &TsneConfig) -> Result<Projection2D> {
    let n = x.nrows();
    if n < 3 {
        return Err(TsneError::TooFewPoints { n, min: 3 });
    }
    config.validate(n)?;
    let affinities = joint_affinities(x, config)?;
    let p = &affinities.p;

    let mut rng = seed::rng(config.seed);
    let normal = Normal::new(0.0, config.init_scale)
        .map_err(|e| TsneError::Config(e.to_string()))?;
    let mut y = Array2::from_shape_simple_fn((n, config.out_dim), || normal.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, config.out_dim));
    let mut grad = Array2::<f64>::zeros((n, config.out_dim));
    let mut w = Array2::<f64>::zeros((n, n));
    let mut q = Array2::<f64>::zeros((n, n));
    let mut kl_trace = Vec::with_capacity(config.n_iter);

    for iteration in 0..config.n_iter {
        let exaggeration = if iteration < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iteration < config.momentum_switch_iter {
            config.momentum_initial
        } else {
            config.momentum_final
        };

        if iteration == config.exaggeration_iters && iteration > 0 {
            // drop velocity built up under the exaggerated objective
            update.fill(0.0);
        }
        low_dim_affinities_into(&y, &mut w, &mut q);
        let kl = kl_divergence(p, &q)?;
        if !kl.is_finite() {
            return Err(TsneError::NonFinite { iteration });
        }
        kl_trace.push(kl);

        gradient_into(p, exaggeration, &q, &w, &y, &mut grad);
        update.zip_mut_with(&grad, |u, &g| *u = momentum * *u - config.learning_rate * g);
        y += &update;

        let mean = y.mean_axis(Axis(0)).expect("n > 0");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TsneError::NonFinite { iteration });
        }
    }

    Ok(Projection2D {
        coords: y,
        kl_trace,
        sigmas: affinities.sigmas,
        search_max_steps_hit: affinities.max_steps_hit,
    })
}

/// Fraction of points whose nearest other point (Euclidean, ties to the lower
/// index) carries the same label.
pub fn nearest_neighbor_purity<L: PartialEq + Sync>(coords: ArrayView2<f64>, labels: &[L]) -> f64 {
    let n = coords.nrows();
    assert_eq!(n, labels.len(), "coords and labels must align");
    if n < 2 {
        return 1.0;
    }
    let coords = coords.as_standard_layout();
    let d = coords.ncols();
    let data = coords.as_slice().expect("standard layout");
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &data[i * d..(i + 1) * d];
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dist = squared_euclidean(xi, &data[j * d..(j + 1) * d]);
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            usize::from(labels[best.1] == labels[i])
        })
        .sum();
    hits as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn equal_distances_give_uniform_row() {
        for perp in [1.1, 1.5, 2.0] {
            let row = conditional_affinities(&[4.0, 4.0], perp, 1e-5, 50).unwrap();
            assert_eq!(row.probabilities, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn all_zero_row_is_degenerate() {
        assert_eq!(
            conditional_affinities(&[0.0, 0.0, 0.0], 2.0, 1e-5, 50),
            Err(TsneError::DegenerateRow)
        );
    }

    #[test]
    fn duplicate_point_reported_with_index() {
        let x = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let cfg = TsneConfig {
            perplexity: 1.5,
            ..Default::default()
        };
        assert_eq!(
            joint_affinities(x.view(), &cfg).unwrap_err(),
            TsneError::DuplicatePoint { index: 0 }
        );
    }

    #[test]
    fn perplexity_must_be_below_n_minus_one() {
        let cfg = TsneConfig {
            perplexity: 50.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(20), Err(TsneError::Config(_))));
        let x = Array2::from_shape_fn((20, 3), |(i, j)| (i * 3 + j) as f64);
        assert!(matches!(
            joint_affinities(x.view(), &cfg),
            Err(TsneError::Config(_))
        ));
        assert!(TsneConfig::default().validate(32).is_ok());
        assert!(TsneConfig::default().validate(31).is_err());
    }

    #[test]
    fn equilateral_triangle() {
        // Q is uniform; P cannot be, since a uniform row has perplexity n - 1
        let h = 3f64.sqrt() / 2.0;
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        let cfg = TsneConfig {
            perplexity: 1.5,
            ..Default::default()
        };
        let joint = joint_affinities(x.view(), &cfg).unwrap();
        let low = low_dim_affinities(&x).unwrap();
        assert_abs_diff_eq!(joint.p.sum(), 1.0, epsilon = 1e-12);
        for i in 0..3 {
            assert_eq!(joint.p[[i, i]], 0.0);
            for j in 0..3 {
                assert_abs_diff_eq!(joint.p[[i, j]], joint.p[[j, i]], epsilon = 1e-15);
                let expected = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert_abs_diff_eq!(low.q[[i, j]], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn coincident_pair_has_unit_weight() {
        let y = array![[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]];
        let low = low_dim_affinities(&y).unwrap();
        assert_eq!(low.w[[0, 1]], 1.0);
        assert_eq!(low.w[[0, 2]], 1.0 / 26.0);
        assert_eq!(low.w[[0, 0]], 0.0);
    }

    #[test]
    fn kl_identities() {
        let y = array![[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0], [1.5, -1.0]];
        let low = low_dim_affinities(&y).unwrap();
        assert_eq!(kl_divergence(&low.q, &low.q).unwrap(), 0.0);
        let n = 4;
        let uniform = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j { 0.0 } else { 1.0 / (n * (n - 1)) as f64 }
        });
        assert_eq!(kl_divergence(&uniform, &uniform.clone()).unwrap(), 0.0);
        assert!(matches!(
            kl_divergence(&uniform, &Array2::zeros((3, 3))),
            Err(TsneError::Shape(_))
        ));
    }

    #[test]
    fn gradient_vanishes_when_distributions_match() {
        let y = array![[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0], [1.5, -1.0]];
        let low = low_dim_affinities(&y).unwrap();
        let g = tsne_gradient(&low.q, &low.q, &low.w, &y).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(matches!(
            tsne_gradient(&low.q, &low.q, &Array2::zeros((2, 2)), &y),
            Err(TsneError::Shape(_))
        ));
    }

    #[test]
    fn mirrored_configuration_has_antisymmetric_gradient() {
        // points 0 and 1 mirror each other through the origin; 2 and 3 too
        let y = array![[1.0, 0.5], [-1.0, -0.5], [0.3, -2.0], [-0.3, 2.0]];
        let p = Array2::from_shape_fn((4, 4), |(i, j)| {
            if i == j { 0.0 } else if i / 2 == j / 2 { 0.2 } else { 0.05 }
        });
        let low = low_dim_affinities(&y).unwrap();
        let g = tsne_gradient(&p, &low.q, &low.w, &y).unwrap();
        for c in 0..2 {
            assert_abs_diff_eq!(g[[0, c]], -g[[1, c]], epsilon = 1e-14);
            assert_abs_diff_eq!(g[[2, c]], -g[[3, c]], epsilon = 1e-14);
        }
    }

    #[test]
    fn three_point_smoke() {
        let x = array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let cfg = TsneConfig {
            perplexity: 1.5,
            n_iter: 300,
            seed: 3,
            ..Default::default()
        };
        let proj = tsne_matrix(x.view(), &cfg).unwrap();
        assert_eq!(proj.kl_trace.len(), 300);
        assert_eq!(proj.coords.dim(), (3, 2));
        assert!(proj.coords.iter().all(|v| v.is_finite()));
        assert!(proj.kl_trace.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn purity_counts_matching_nearest_neighbors() {
        let coords = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0], [0.2, 0.0]];
        let labels = ["a", "a", "b", "b", "b"];
        assert_abs_diff_eq!(nearest_neighbor_purity(coords.view(), &labels), 0.8);
    }

    #[test]
    fn projection_csv_layout() {
        let proj = Projection2D {
            coords: array![[0.5, -1.0], [2.0, 0.25]],
            kl_trace: vec![1.5, 1.25],
            sigmas: vec![1.0, 1.0],
            search_max_steps_hit: vec![],
        };
        let mut out = Vec::new();
        proj.write_csv(&mut out, &["a", "b"], &[BiasClass::Race, BiasClass::Gender])
            .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "doc_id,label,x,y\na,race,0.5,-1\nb,gender,2,0.25\n"
        );
        let mut kl = Vec::new();
        proj.write_kl_trace(&mut kl).unwrap();
        assert_eq!(String::from_utf8(kl).unwrap(), "iter,kl\n0,1.5\n1,1.25\n");
    }
}
