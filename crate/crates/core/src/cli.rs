//! `bias-bench` command line: `sample`, `tsne`, `eval` and `report`.
//!
//! All subcommands read one JSON configuration file. Relative paths inside it
//! are resolved against the file's directory. Flags override the matching
//! configuration keys, and `BIAS_BENCH_OUT` overrides `--out`.
//!
//! Every subcommand builds its outputs in memory, writes them atomically, reads
//! them back for validation and records them in `<out>/manifest.json`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{self, BiasClass, ColumnConfig, Corpus, CorpusError, LabelSource};
use crate::embedding_store::{self, EmbeddingError};
use crate::eval::{self, EvalError, EvalReport, ExperimentConfig};
use crate::plot::{self, PlotError, PlotStyle};
use crate::seed;
use crate::tsne::{self, TsneConfig, TsneError};

pub const OUT_ENV: &str = "BIAS_BENCH_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("tsne: {0}")]
    Tsne(#[from] TsneError),
    #[error("plot: {0}")]
    Plot(#[from] PlotError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("validation: {0}")]
    Validation(String),
}

impl CliError {
    /// One-line form printed on failure.
    pub fn single_line(&self) -> String {
        format!("bias-bench: error: {self}").replace(['\n', '\r'], " ")
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bias-bench", version, about = "Bias-type classification benchmark over sentence embeddings")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the subcommand's random stage (corpus, t-SNE or master seed).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory (overridden by BIAS_BENCH_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the raw corpus, balance classes and write corpus.jsonl.
    Sample(SampleArgs),
    /// Project one model's embeddings with t-SNE and plot them.
    Tsne(TsneArgs),
    /// Run the KNN grid and write results, report and table.
    Eval(EvalArgs),
    /// Re-render the table and tests from an existing results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub per_class: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    /// Configured model name.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV; defaults to `<out>/results.csv`.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

/// One raw corpus input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub path: PathBuf,
    #[serde(default = "default_text_column")]
    pub text_column: String,
    /// Column holding the label; ignored when `label` is set.
    #[serde(default)]
    pub label_column: Option<String>,
    /// Fixed label for every row of the file.
    #[serde(default)]
    pub label: Option<BiasClass>,
    /// Id column; ids are generated from the file name and row when absent.
    #[serde(default)]
    pub id_column: Option<String>,
}

fn default_text_column() -> String {
    "text".into()
}

impl CorpusFile {
    pub fn columns(&self) -> ColumnConfig {
        let label = match (&self.label, &self.label_column) {
            (Some(class), _) => LabelSource::Fixed(*class),
            (None, Some(col)) => LabelSource::Column(col.clone()),
            (None, None) => LabelSource::Column("label".into()),
        };
        ColumnConfig {
            text: self.text_column.clone(),
            label,
            id: self.id_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Vec<CorpusFile>,
    pub per_class: usize,
    pub corpus_seed: Option<u64>,
    pub master_seed: Option<u64>,
    /// Model name → embedding file.
    pub embeddings: IndexMap<String, PathBuf>,
    pub tsne: TsneConfig,
    pub k_values: Vec<usize>,
    pub runs: usize,
    pub train_fraction: f64,
    pub out_dir: Option<PathBuf>,
    /// Balanced corpus written by `sample`; defaults to `<out>/corpus.jsonl`.
    pub balanced_corpus: Option<PathBuf>,
    pub plot: PlotStyle,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            corpus: Vec::new(),
            per_class: exp.per_class,
            corpus_seed: None,
            master_seed: None,
            embeddings: IndexMap::new(),
            tsne: TsneConfig::default(),
            k_values: exp.k_values,
            runs: exp.runs,
            train_fraction: exp.train_fraction,
            out_dir: None,
            balanced_corpus: None,
            plot: PlotStyle::default(),
        }
    }
}

/// A parsed configuration with paths resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub digest: String,
    pub out_dir: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_config(path: &Path, out_flag: Option<&Path>, env_out: Option<&Path>) -> Result<LoadedConfig> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut config: PipelineConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for file in &mut config.corpus {
        file.path = resolve(base, &file.path);
    }
    for p in config.embeddings.values_mut() {
        *p = resolve(base, p);
    }
    config.balanced_corpus = config.balanced_corpus.as_deref().map(|p| resolve(base, p));
    let configured_out = config.out_dir.as_deref().map(|p| resolve(base, p));
    let out_dir = env_out
        .map(Path::to_path_buf)
        .or_else(|| out_flag.map(Path::to_path_buf))
        .or(configured_out)
        .ok_or_else(|| CliError::Config("no output directory: set out_dir, --out or BIAS_BENCH_OUT".into()))?;
    Ok(LoadedConfig {
        config,
        digest: sha256_hex(&bytes),
        out_dir,
    })
}

/// Write through a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn record_manifest(loaded: &LoadedConfig, entry: &str, details: Value) -> Result<()> {
    let path = loaded.out_dir.join("manifest.json");
    let mut manifest: Value = match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|_| json!({})),
        Err(_) => json!({}),
    };
    let obj = manifest.as_object_mut().expect("manifest is an object");
    obj.insert("tool".into(), json!("bias-bench"));
    obj.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    obj.insert("prng".into(), json!(seed::PRNG_ID));
    obj.insert("config_sha256".into(), json!(loaded.digest));
    let commands = obj.entry("commands").or_insert_with(|| json!({}));
    commands
        .as_object_mut()
        .ok_or_else(|| CliError::Validation("manifest `commands` is not an object".into()))?
        .insert(entry.into(), details);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&path, &bytes)
}

fn outputs_value(files: &[(&Path, &[u8])]) -> Value {
    let mut map = serde_json::Map::new();
    for (path, bytes) in files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        map.insert(name, json!(sha256_hex(bytes)));
    }
    Value::Object(map)
}

fn balanced_corpus_path(loaded: &LoadedConfig) -> PathBuf {
    loaded
        .config
        .balanced_corpus
        .clone()
        .unwrap_or_else(|| loaded.out_dir.join("corpus.jsonl"))
}

fn load_balanced(loaded: &LoadedConfig) -> Result<Corpus> {
    let path = balanced_corpus_path(loaded);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "balanced corpus {} not found; run `bias-bench sample` first",
            path.display()
        )));
    }
    Ok(corpus::load_corpus(&path, &ColumnConfig::default())?.corpus)
}

/// What a successful subcommand produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// Text for stdout.
    pub stdout: String,
}

/// Parse nothing; run an already-parsed command line.
pub fn run(cli: Cli, env_out: Option<PathBuf>) -> Result<Outcome> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let loaded = load_config(&config_path, cli.out.as_deref(), env_out.as_deref())?;
    let job = || match &cli.command {
        Command::Sample(args) => cmd_sample(&loaded, args, cli.seed),
        Command::Tsne(args) => cmd_tsne(&loaded, args, cli.seed),
        Command::Eval(args) => cmd_eval(&loaded, args, cli.seed),
        Command::Report(args) => cmd_report(&loaded, args),
    };
    match cli.jobs {
        Some(0) => Err(CliError::Config("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(job),
        None => job(),
    }
}

pub fn cmd_sample(loaded: &LoadedConfig, args: &SampleArgs, seed_flag: Option<u64>) -> Result<Outcome> {
    let cfg = &loaded.config;
    if cfg.corpus.is_empty() {
        return Err(CliError::Config("no corpus files configured".into()));
    }
    let corpus_seed = seed_flag
        .or(cfg.corpus_seed)
        .ok_or_else(|| CliError::Config("corpus_seed must be set (or pass --seed)".into()))?;
    let per_class = args.per_class.unwrap_or(cfg.per_class);

    let mut parts = Vec::new();
    let mut skipped = 0;
    let mut inputs = Vec::new();
    for file in &cfg.corpus {
        let loaded_file = corpus::load_corpus(&file.path, &file.columns())?;
        skipped += loaded_file.skipped_empty;
        inputs.push(json!({
            "path": file.path.display().to_string(),
            "documents": loaded_file.corpus.len(),
            "skipped_empty": loaded_file.skipped_empty,
        }));
        parts.push(loaded_file.corpus);
    }
    let raw = Corpus::concat(parts)?;
    let balanced = corpus::balance_subsample(&raw, per_class, corpus_seed)?;

    let mut corpus_bytes = Vec::new();
    balanced
        .write_jsonl_to(&mut corpus_bytes)
        .expect("writing to memory");
    let counts = |c: &Corpus| -> Value {
        let counts = c.class_counts();
        let mut m = serde_json::Map::new();
        for class in BiasClass::ALL {
            m.insert(class.to_string(), json!(counts[class.index()]));
        }
        Value::Object(m)
    };
    let sample_manifest = json!({
        "per_class": per_class,
        "corpus_seed": corpus_seed,
        "documents": balanced.len(),
        "counts_before": counts(&raw),
        "counts_after": counts(&balanced),
        "skipped_empty": skipped,
        "inputs": inputs,
        "corpus_sha256": sha256_hex(&corpus_bytes),
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&sample_manifest).expect("serializes");
    manifest_bytes.push(b'\n');

    let corpus_path = balanced_corpus_path(loaded);
    let manifest_path = loaded.out_dir.join("sample_manifest.json");
    write_atomic(&corpus_path, &corpus_bytes)?;
    write_atomic(&manifest_path, &manifest_bytes)?;

    let reread = corpus::load_corpus(&corpus_path, &ColumnConfig::default())?.corpus;
    if reread != Corpus::new(balanced.documents().to_vec(), reread.provenance())? {
        return Err(CliError::Validation("balanced corpus did not read back identically".into()));
    }
    record_manifest(
        loaded,
        "sample",
        json!({
            "corpus_seed": corpus_seed,
            "per_class": per_class,
            "outputs": outputs_value(&[(&corpus_path, &corpus_bytes), (&manifest_path, &manifest_bytes)]),
        }),
    )?;
    Ok(Outcome {
        written: vec![corpus_path, manifest_path],
        stdout: format!(
            "sampled {} documents ({} per class, seed {corpus_seed})\n",
            balanced.len(),
            per_class
        ),
    })
}

pub fn cmd_tsne(loaded: &LoadedConfig, args: &TsneArgs, seed_flag: Option<u64>) -> Result<Outcome> {
    let cfg = &loaded.config;
    let emb_path = cfg.embeddings.get(&args.model).ok_or_else(|| {
        let names: Vec<&str> = cfg.embeddings.keys().map(String::as_str).collect();
        CliError::Config(format!(
            "unknown model `{}`; configured models: {}",
            args.model,
            if names.is_empty() { "(none)".to_string() } else { names.join(", ") }
        ))
    })?;
    let corpus = load_balanced(loaded)?;
    let set = embedding_store::align(&embedding_store::read_embeddings(emb_path)?, &corpus)?;

    let mut tsne_cfg = cfg.tsne.clone();
    if let Some(s) = seed_flag {
        tsne_cfg.seed = s;
    }
    if let Some(p) = args.perplexity {
        tsne_cfg.perplexity = p;
    }
    if let Some(n) = args.n_iter {
        tsne_cfg.n_iter = n;
    }
    let projection = tsne::run_tsne(&set, &tsne_cfg)?;

    let ids: Vec<&str> = set.records().iter().map(|r| r.doc_id.as_str()).collect();
    let labels = set.labels();
    let mut csv_bytes = Vec::new();
    projection
        .write_csv(&mut csv_bytes, &ids, &labels)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut kl_bytes = Vec::new();
    projection.write_kl_trace(&mut kl_bytes).expect("writing to memory");
    let style = PlotStyle {
        title: cfg.plot.title.clone().or_else(|| Some(format!("t-SNE embedding of {}", args.model))),
        ..cfg.plot.clone()
    };
    let svg = plot::render_scatter_svg(projection.coords.view(), &labels, &style)?;
    let purity = tsne::nearest_neighbor_purity(projection.coords.view(), &labels);

    let dir = loaded.out_dir.join("tsne");
    let csv_path = dir.join(format!("{}.csv", args.model));
    let kl_path = dir.join(format!("{}_kl.csv", args.model));
    let svg_path = dir.join(format!("{}.svg", args.model));
    write_atomic(&csv_path, &csv_bytes)?;
    write_atomic(&kl_path, &kl_bytes)?;
    write_atomic(&svg_path, svg.as_bytes())?;

    let written_svg = fs::read_to_string(&svg_path).map_err(io_err(&svg_path))?;
    let circles = written_svg.matches("<circle").count();
    if circles != corpus.len() {
        return Err(CliError::Validation(format!(
            "{} has {circles} points, expected {}",
            svg_path.display(),
            corpus.len()
        )));
    }
    let final_kl = projection.kl_trace.last().copied().unwrap_or(f64::NAN);
    record_manifest(
        loaded,
        &format!("tsne:{}", args.model),
        json!({
            "model": args.model,
            "tsne": tsne_cfg,
            "final_kl": final_kl,
            "nearest_neighbor_purity": purity,
            "perplexity_search_max_steps_hit": projection.search_max_steps_hit.len(),
            "outputs": outputs_value(&[(&csv_path, &csv_bytes), (&kl_path, &kl_bytes), (&svg_path, svg.as_bytes())]),
        }),
    )?;
    Ok(Outcome {
        written: vec![csv_path, kl_path, svg_path],
        stdout: format!(
            "{}: {} points, final KL {final_kl:.4}, 2-D nearest-neighbor purity {purity:.4}\n",
            args.model,
            corpus.len()
        ),
    })
}

pub fn cmd_eval(loaded: &LoadedConfig, args: &EvalArgs, seed_flag: Option<u64>) -> Result<Outcome> {
    let cfg = &loaded.config;
    let master_seed = seed_flag
        .or(cfg.master_seed)
        .ok_or_else(|| CliError::Config("master_seed must be set (or pass --seed)".into()))?;
    if cfg.embeddings.is_empty() {
        return Err(CliError::Config("no embeddings configured".into()));
    }
    let experiment = ExperimentConfig {
        embedding_paths: cfg.embeddings.clone(),
        k_values: args.k.clone().unwrap_or_else(|| cfg.k_values.clone()),
        runs: args.runs.unwrap_or(cfg.runs),
        train_fraction: args.train_fraction.unwrap_or(cfg.train_fraction),
        master_seed,
        per_class: cfg.per_class,
    };
    let corpus = load_balanced(loaded)?;
    let output = eval::run_experiment(&experiment, &corpus)?;
    let comparison = eval::compare(&output.results)?;
    let report = EvalReport::new(
        comparison,
        Some(master_seed),
        Some(experiment.train_fraction),
        output.splits,
    );

    let mut results_bytes = Vec::new();
    eval::write_results_csv(&output.results, &mut results_bytes).expect("writing to memory");
    let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_bytes.push(b'\n');
    let table = eval::render_table(&report.comparison);

    let results_path = loaded.out_dir.join("results.csv");
    let report_path = loaded.out_dir.join("report.json");
    let table_path = loaded.out_dir.join("table.txt");
    write_atomic(&results_path, &results_bytes)?;
    write_atomic(&report_path, &report_bytes)?;
    write_atomic(&table_path, table.as_bytes())?;

    let expected = experiment.embedding_paths.len() * experiment.k_values.len() * experiment.runs;
    let reread = eval::read_results_csv(fs::File::open(&results_path).map_err(io_err(&results_path))?)?;
    if reread.len() != expected {
        return Err(CliError::Validation(format!(
            "results.csv has {} rows, expected {expected}",
            reread.len()
        )));
    }
    record_manifest(
        loaded,
        "eval",
        json!({
            "master_seed": master_seed,
            "runs": experiment.runs,
            "k_values": experiment.k_values,
            "train_fraction": experiment.train_fraction,
            "models": experiment.embedding_paths.keys().collect::<Vec<_>>(),
            "outputs": outputs_value(&[(&results_path, &results_bytes), (&report_path, &report_bytes), (&table_path, table.as_bytes())]),
        }),
    )?;
    Ok(Outcome {
        written: vec![results_path, report_path, table_path],
        stdout: table,
    })
}

pub fn cmd_report(loaded: &LoadedConfig, args: &ReportArgs) -> Result<Outcome> {
    let path = args
        .results
        .clone()
        .unwrap_or_else(|| loaded.out_dir.join("results.csv"));
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let results = eval::read_results_csv(file)?;
    let comparison = eval::compare(&results)?;
    Ok(Outcome {
        written: Vec::new(),
        stdout: eval::render_table(&comparison),
    })
}
