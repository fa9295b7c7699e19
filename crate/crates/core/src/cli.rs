//! Command-line entry point: ingest, train, evaluate, compare, predict.
//!
//! Exit codes: 0 ok, 2 input problem, 3 divergence, 4 model-file problem,
//! 5 vocabulary problem.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineError};
use crate::ingest::{self, FeatureKind, IngestError, PreparedData, FEATURE_SPECS, NUM_FEATURES};
use crate::metrics::{MetricsReport, RocCurve};
use crate::model_file::{self, ModelFileError, ModelMeta};
use crate::nn::Network;
use crate::trainer::{self, EpochLog, Features, TrainConfig, TrainError};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid input data / configuration.
    Input(String),
    /// Training produced a non-finite loss.
    Divergence(String),
    /// Unreadable, corrupt, or incompatible model file.
    ModelFile(String),
    /// A value absent from the model's encoding vocabulary.
    Vocabulary(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::ModelFile(_) => 4,
            CliError::Vocabulary(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m)
            | CliError::Divergence(m)
            | CliError::ModelFile(m)
            | CliError::Vocabulary(m)
            | CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnseenCategory { .. } => CliError::Vocabulary(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Divergence(e.to_string()),
            TrainError::BadConfig => CliError::Input(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::ModelFile(e.to_string())
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Train(t) => t.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

/// Every knob affecting a run; serializable so the manifest records it all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data_path: String,
    pub seed: u64,
    pub split_ratio: f64,
    pub bins_per_continuous: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    pub dropout_p: f64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data_path: String::new(),
            seed: t.seed,
            split_ratio: 0.8,
            bins_per_continuous: 10,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            alpha1: t.alpha1,
            alpha2: t.alpha2,
            epsilon: t.epsilon,
            dropout_p: t.dropout_p,
            output_dir: "out".to_string(),
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            epsilon: self.epsilon,
            dropout_p: self.dropout_p,
            seed: self.seed,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hdcnn",
    about = "Train and evaluate a 1D-CNN heart-disease classifier on Cleveland-format records",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, impute, encode, and split a data file; cache the result as JSON
    Ingest(ConfigArgs),
    /// Train the network and write the model, epoch curves, and run manifest
    Train(ConfigArgs),
    /// Evaluate a saved model on the test split of a data file
    Evaluate(EvaluateArgs),
    /// Train every classifier on one shared split and tabulate the results
    Compare(ConfigArgs),
    /// Classify a single 13-field record with a saved model
    Predict(PredictArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with a full run configuration (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Path to the Cleveland-format data file
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Dropout probability (0 disables dropout)
    #[arg(long)]
    dropout: Option<f64>,
    /// Quantile bins per continuous feature
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "split-ratio")]
    split_ratio: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Path to a saved model file
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Path to a saved model file
    #[arg(long)]
    model: PathBuf,
    /// 13 comma-separated attribute values ('?' for missing)
    record: String,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(data) = &self.data {
            cfg.data_path = data.display().to_string();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if let Some(batch_size) = self.batch_size {
            cfg.batch_size = batch_size;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = lr;
        }
        if let Some(dropout) = self.dropout {
            cfg.dropout_p = dropout;
        }
        if let Some(bins) = self.bins {
            cfg.bins_per_continuous = bins;
        }
        if let Some(ratio) = self.split_ratio {
            cfg.split_ratio = ratio;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.display().to_string();
        }
        if cfg.data_path.is_empty() {
            return Err(CliError::Input(
                "no data file: pass --data or set data_path in --config".to_string(),
            ));
        }
        Ok(cfg)
    }
}

/// Parses argv and runs the selected command.
pub fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args.resolve()?),
        Command::Train(args) => cmd_train(&args.resolve()?).map(|_| ()),
        Command::Evaluate(args) => cmd_evaluate(&args.model, &args.config.resolve()?),
        Command::Compare(args) => cmd_compare(&args.resolve()?),
        Command::Predict(args) => cmd_predict(&args.model, &args.record),
    }
}

fn read_data(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let text = fs::read_to_string(&cfg.data_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.data_path)))?;
    Ok(ingest::prepare(
        &text,
        cfg.bins_per_continuous,
        cfg.split_ratio,
        cfg.seed,
    )?)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let prepared = read_data(cfg)?;
    let dir = ensure_out_dir(cfg)?;
    let json =
        serde_json::to_string_pretty(&prepared).map_err(|e| CliError::Other(e.to_string()))?;
    let path = dir.join("dataset.json");
    write_text(&path, &json)?;

    let n = prepared.dataset.n_samples;
    let positives = prepared
        .dataset
        .labels
        .iter()
        .filter(|&&y| y != 0.0)
        .count();
    println!("samples: {n}");
    println!(
        "labels: {} negative / {} positive",
        n - positives,
        positives
    );
    println!("vocabulary: {}", prepared.encoding.vocab_size);
    println!(
        "split: {} train / {} test (ratio {}, seed {})",
        prepared.split.train_idx.len(),
        prepared.split.test_idx.len(),
        cfg.split_ratio,
        cfg.seed
    );
    // observed raw ranges come from a fresh parse of the same text
    let text = fs::read_to_string(&cfg.data_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.data_path)))?;
    let records = ingest::parse_records(&text)?;
    println!("features (observed range, train-row mean/std):");
    for (f, spec) in FEATURE_SPECS.iter().enumerate() {
        let kind = match spec.kind {
            FeatureKind::Categorical => "categorical",
            FeatureKind::Continuous => "continuous",
        };
        let observed: Vec<f64> = records.iter().filter_map(|r| r.cells[f]).collect();
        let min = observed.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "  {:<20} {:<12} range {:>6.1} .. {:>6.1}  mean {:>8.3}  std {:>8.3}",
            spec.name, kind, min, max, prepared.dataset.means[f], prepared.dataset.stds[f]
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Manifest of one training run: everything needed to reproduce it plus the
/// final metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub split_fingerprint: String,
    pub vocab_size: usize,
    pub final_train_accuracy: f64,
    pub test_metrics: MetricsReport,
}

pub struct TrainOutput {
    pub manifest: RunManifest,
    pub logs: Vec<EpochLog>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, CliError> {
    let prepared = read_data(cfg)?;
    let train_cfg = cfg.train_config();
    train_cfg.validate().map_err(CliError::from)?;

    let train_ix = prepared
        .dataset
        .int_features
        .select_rows(&prepared.split.train_idx);
    let test_ix = prepared
        .dataset
        .int_features
        .select_rows(&prepared.split.test_idx);
    let train_y = prepared.train_labels();
    let test_y = prepared.test_labels();

    let mut net = Network::embedding_conv_net(prepared.encoding.vocab_size, cfg.dropout_p);
    net.init_params(cfg.seed);
    let logs = trainer::train(
        &mut net,
        Features::Indices(&train_ix),
        &train_y,
        Features::Indices(&test_ix),
        &test_y,
        &train_cfg,
    )?;

    let train_p = trainer::predict(&net, Features::Indices(&train_ix))?;
    let test_p = trainer::predict(&net, Features::Indices(&test_ix))?;
    let final_train_accuracy = train_p
        .iter()
        .zip(&train_y)
        .filter(|(&p, &y)| (if p >= 0.5 { 1.0 } else { 0.0 }) == y)
        .count() as f64
        / train_y.len() as f64;
    let test_metrics =
        MetricsReport::from_scores(&test_y, &test_p).map_err(|e| CliError::Other(e.to_string()))?;

    let dir = ensure_out_dir(cfg)?;
    let meta = ModelMeta {
        encoding: prepared.encoding.clone(),
        impute_values: prepared.impute_values.clone(),
    };
    let model_path = dir.join("model.bin");
    model_file::save_model(&model_path, &net, &meta)?;
    write_text(&dir.join("epochs.csv"), &trainer::epoch_logs_to_csv(&logs))?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        split_fingerprint: prepared.split.fingerprint(),
        vocab_size: prepared.encoding.vocab_size,
        final_train_accuracy,
        test_metrics,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
    write_text(&dir.join("run_manifest.json"), &manifest_json)?;

    println!(
        "trained {} epochs: train accuracy {:.4}, test accuracy {:.4}",
        logs.len(),
        final_train_accuracy,
        manifest.test_metrics.accuracy
    );
    println!("wrote {}", model_path.display());
    Ok(TrainOutput { manifest, logs })
}

pub fn cmd_evaluate(model_path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (net, meta) = model_file::load_model(model_path)?;

    let text = fs::read_to_string(&cfg.data_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", cfg.data_path)))?;
    let records = ingest::parse_records(&text)?;
    let (mut records, _) = ingest::impute_missing(&records)?;
    ingest::binarize_labels(&mut records)?;
    let split = ingest::split(records.len(), cfg.split_ratio, cfg.seed)?;

    // encode with the model's own vocabulary
    let mut probs = Vec::with_capacity(split.test_idx.len());
    let mut labels = Vec::with_capacity(split.test_idx.len());
    for &i in &split.test_idx {
        let cells: Vec<f64> = records[i].cells[..NUM_FEATURES]
            .iter()
            .map(|c| c.unwrap())
            .collect();
        let encoded = meta.encoding.encode_record(&cells)?;
        let input = crate::tensor::IndexMatrix::new(1, NUM_FEATURES, encoded);
        let p = trainer::predict(&net, Features::Indices(&input))?;
        probs.push(p[0]);
        labels.push(records[i].label().unwrap());
    }

    let report =
        MetricsReport::from_scores(&labels, &probs).map_err(|e| CliError::Other(e.to_string()))?;
    let curve: RocCurve =
        crate::metrics::roc(&labels, &probs).map_err(|e| CliError::Other(e.to_string()))?;

    let dir = ensure_out_dir(cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    write_text(&dir.join("metrics.json"), &json)?;
    write_text(&dir.join("roc.csv"), &curve.to_csv())?;

    println!(
        "test samples: {} (ratio {}, seed {})",
        labels.len(),
        cfg.split_ratio,
        cfg.seed
    );
    println!("{}", report.confusion);
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}",
        report.accuracy, report.precision, report.recall, report.f1, report.auc
    );
    Ok(())
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let prepared = read_data(cfg)?;
    let mut rows = baselines::compare(&prepared, &cfg.train_config())?;
    rows.extend(baselines::reported_rows());

    let dir = ensure_out_dir(cfg)?;
    write_text(&dir.join("comparison.csv"), &baselines::rows_to_csv(&rows))?;
    print!("{}", baselines::render_table(&rows));
    Ok(())
}

pub fn cmd_predict(model_path: &Path, record: &str) -> Result<(), CliError> {
    let (net, meta) = model_file::load_model(model_path)?;

    let cells: Vec<&str> = record.trim().split(',').collect();
    if cells.len() != NUM_FEATURES {
        return Err(CliError::Input(format!(
            "expected {NUM_FEATURES} fields, found {}",
            cells.len()
        )));
    }
    let mut values = Vec::with_capacity(NUM_FEATURES);
    for (f, cell) in cells.iter().enumerate() {
        let cell = cell.trim();
        if cell == "?" {
            values.push(meta.impute_values[f]);
        } else {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Input(format!(
                    "field {} ({}): unparseable number {cell:?}",
                    f + 1,
                    FEATURE_SPECS[f].name
                ))
            })?;
            values.push(v);
        }
    }
    let encoded = meta.encoding.encode_record(&values)?;
    let input = crate::tensor::IndexMatrix::new(1, NUM_FEATURES, encoded);
    let p = trainer::predict(&net, Features::Indices(&input))?[0];
    let class = if p >= 0.5 { 1 } else { 0 };
    println!("probability={p:.6} class={class}");
    Ok(())
}
