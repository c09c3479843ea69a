//! Independent reference implementations used by the integration tests.
//!
//! None of these call into the library's numerics: the beta and Student-t
//! oracles are ratios of adaptive Gauss-Kronrod quadratures, the gradient
//! oracle is a central finite difference of a from-scratch KL objective, and
//! the KNN oracle is a sort-everything classifier.

#![allow(dead_code, clippy::excessive_precision)]

use std::path::{Path, PathBuf};

use bias_bench::cli;
use bias_bench::corpus::{self, BiasClass, Corpus, Document};
use bias_bench::embedding_store::{EmbeddingRecord, EmbeddingSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// Kronrod 15-point nodes/weights and embedded Gauss 7-point weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive G7K15 quadrature of `f` over `[a, b]`, to relative tolerance `rel`
/// of a first whole-interval estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return value;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (rough, _) = gk15(&f, a, b);
    let tol = (rel * rough.abs()).max(1e-300);
    rec(&f, a, b, tol, 40)
}

/// `I_x(a, b)` as a ratio of quadratures.
///
/// For `a < 1` the left piece uses `t = u^(1/a)`, which turns `t^(a-1) dt`
/// into `du / a`; the right piece does the same with `1 - t = v^(1/b)` for
/// `b < 1`. Both integrands stay bounded.
pub fn beta_oracle(x: f64, a: f64, b: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x) && a > 0.0 && b > 0.0);
    let rel = 1e-14;
    // integral of t^(a-1) (1-t)^(b-1) over [0, s] with s <= 1/2
    let piece = |s: f64, a: f64, b: f64| {
        if a < 1.0 {
            integrate(|u| (1.0 - u.powf(1.0 / a)).powf(b - 1.0) / a, 0.0, s.powf(a), rel)
        } else {
            integrate(|t| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0), 0.0, s, rel)
        }
    };
    let total = piece(0.5, a, b) + piece(0.5, b, a);
    let partial = if x <= 0.5 {
        piece(x, a, b)
    } else {
        total - piece(1.0 - x, b, a)
    };
    (partial / total).clamp(0.0, 1.0)
}

/// Two-sided Student-t tail `P(|T| >= |t|)` with `df` degrees of freedom.
///
/// With `x = sqrt(df) tan(theta)` the density becomes proportional to
/// `cos(theta)^(df-1)` on `[0, pi/2)`.
pub fn student_t_two_sided_oracle(t: f64, df: f64) -> f64 {
    assert!(df >= 1.0);
    let g = |th: f64| th.cos().max(0.0).powf(df - 1.0);
    let theta0 = (t.abs() / df.sqrt()).atan();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let tail = integrate(g, theta0, half_pi, 1e-14);
    let total = integrate(g, 0.0, half_pi, 1e-14);
    (tail / total).clamp(0.0, 1.0)
}

/// Welch statistic, Welch-Satterthwaite df and two-sided p from the oracle.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let moments = |s: &[f64]| {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df, student_t_two_sided_oracle(t, df))
}

/// `KL(P || Q(Y))` written out directly, with `Q` from the Student-t kernel.
pub fn kl_oracle(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut w = Array2::<f64>::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = (0..y.ncols()).map(|c| (y[[i, c]] - y[[j, c]]).powi(2)).sum();
                w[[i, j]] = 1.0 / (1.0 + d2);
                z += w[[i, j]];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[[i, j]] > 0.0 {
                kl += p[[i, j]] * (p[[i, j]] / (w[[i, j]] / z)).ln();
            }
        }
    }
    kl
}

/// Central finite-difference gradient of [`kl_oracle`] with respect to `Y`.
pub fn finite_difference_gradient(p: &Array2<f64>, y: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut grad = Array2::<f64>::zeros(y.dim());
    let mut yy = y.clone();
    for i in 0..y.nrows() {
        for c in 0..y.ncols() {
            let orig = yy[[i, c]];
            yy[[i, c]] = orig + h;
            let up = kl_oracle(p, &yy);
            yy[[i, c]] = orig - h;
            let down = kl_oracle(p, &yy);
            yy[[i, c]] = orig;
            grad[[i, c]] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// A random symmetric joint-probability matrix with zero diagonal.
pub fn random_joint(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.05..1.0);
            p[[i, j]] = v;
            p[[j, i]] = v;
        }
    }
    let s = p.sum();
    p / s
}

/// Sort every training row by (distance, row) and take the modal label of
/// the first `k`, ties to the label seen first.
pub fn knn_oracle(train: &Array2<f64>, labels: &[BiasClass], query: &[f64], k: usize) -> BiasClass {
    let mut order: Vec<(f64, usize)> = train
        .rows()
        .into_iter()
        .enumerate()
        .map(|(row, p)| {
            let d2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2.sqrt(), row)
        })
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let nearest: Vec<BiasClass> = order[..k].iter().map(|&(_, r)| labels[r]).collect();
    let best = BiasClass::ALL
        .iter()
        .map(|c| nearest.iter().filter(|l| *l == c).count())
        .max()
        .unwrap();
    *nearest
        .iter()
        .find(|c| nearest.iter().filter(|l| l == c).count() == best)
        .unwrap()
}

/// Base-2 entropy of a probability vector.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// Four isotropic Gaussian clusters in `dim` dimensions, unit variance, with
/// pairwise center distance `separation`. Rows are grouped by class.
pub fn gaussian_clusters(per_class: usize, dim: usize, separation: f64, seed: u64) -> (Array2<f64>, Vec<BiasClass>) {
    assert!(dim >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / 2f64.sqrt();
    let n = 4 * per_class;
    let mut x = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (c, class) in BiasClass::ALL.iter().enumerate() {
        for i in 0..per_class {
            let row = c * per_class + i;
            for j in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                x[[row, j]] = z + if j == c { offset } else { 0.0 };
            }
            labels.push(*class);
        }
    }
    (x, labels)
}

/// A corpus and matching embedding set for a synthetic matrix.
pub fn synthetic_dataset(x: &Array2<f64>, labels: &[BiasClass], model: &str) -> (Corpus, EmbeddingSet) {
    let docs: Vec<Document> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| Document {
            id: format!("doc{i:04}"),
            text: format!("synthetic text {i}"),
            label: *l,
        })
        .collect();
    let records = docs
        .iter()
        .zip(x.rows())
        .map(|(d, row)| EmbeddingRecord {
            doc_id: d.id.clone(),
            label: d.label,
            vector: row.to_vec(),
        })
        .collect();
    (
        Corpus::new(docs, "synthetic").unwrap(),
        EmbeddingSet::new(model, x.ncols(), records).unwrap(),
    )
}

/// Write a raw CSV corpus of `per_class` short texts per class plus one blank row.
pub fn write_raw_csv(path: &Path, per_class: usize) {
    let mut body = String::from("text,label\n");
    for class in BiasClass::ALL {
        for i in 0..per_class {
            body.push_str(&format!("\"{class} comment number {i}, with a comma\",{class}\n"));
        }
    }
    body.push_str("\"   \",race\n");
    std::fs::write(path, body).unwrap();
}

/// One standard normal draw.
pub fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A corpus with the given number of documents per class, classes interleaved.
pub fn labelled_corpus(sizes: [usize; 4]) -> Corpus {
    let mut docs = Vec::new();
    let max = sizes.iter().copied().max().unwrap_or(0);
    for i in 0..max {
        for (class, &size) in BiasClass::ALL.iter().zip(&sizes) {
            if i < size {
                docs.push(Document {
                    id: format!("{class}-{i}"),
                    text: format!("text {i}"),
                    label: *class,
                });
            }
        }
    }
    Corpus::new(docs, "synthetic").unwrap()
}

/// A small self-contained pipeline workspace: raw CSV, two embedding files, config.
pub fn pipeline_fixture(dir: &Path) -> PathBuf {
    let raw = dir.join("raw.csv");
    write_raw_csv(&raw, 30);
    let loaded = corpus::load_corpus(
        &raw,
        &cli::CorpusFile {
            path: raw.clone(),
            text_column: "text".into(),
            label_column: Some("label".into()),
            label: None,
            id_column: None,
        }
        .columns(),
    )
    .unwrap();
    let docs = loaded.corpus.documents();
    for (model, spread) in [("mini_bert", 1.0), ("raw_roberta", 6.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(spread as u64);
        let records = docs
            .iter()
            .map(|d| EmbeddingRecord {
                doc_id: d.id.clone(),
                label: d.label,
                vector: (0..8)
                    .map(|j| {
                        let z = gauss(&mut rng);
                        spread * z + if j == d.label.index() { 8.0 } else { 0.0 }
                    })
                    .collect(),
            })
            .collect();
        EmbeddingSet::new(model, 8, records)
            .unwrap()
            .write(&dir.join(format!("{model}.jsonl")))
            .unwrap();
    }
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{
  "corpus": [{"path": "raw.csv", "label_column": "label"}],
  "per_class": 25,
  "corpus_seed": 7,
  "master_seed": 11,
  "embeddings": {"mini_bert": "mini_bert.jsonl", "raw_roberta": "raw_roberta.jsonl"},
  "tsne": {"perplexity": 10, "n_iter": 300},
  "k_values": [3, 5],
  "runs": 3
}
"#,
    )
    .unwrap();
    config
}
