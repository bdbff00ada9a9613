//! Command-line surface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gazebench_core::analytics::BootstrapConfig;
use gazebench_core::saliency::spread_sweep;
use gazebench_core::{Scanpath, DEFAULT_MAX_FIXATIONS};
use gazebench_model::container::write_atomic;
use gazebench_model::{
    decode_scanpath, train_with_progress, DecodeMode, EmbeddingProvider, EmbeddingStore, GazeModel, GazeModelConfig,
    OptimConfig,
};

use crate::corpus::{load_corpus, snap_to_pixels, write_corpus, Corpus, CorpusCase, Split};
use crate::error::{CliError, Context, Result};
use crate::evaluate::{evaluate, pair_cases, EvalOptions};
use crate::rank::rank_report;
use crate::ratings::{load_ratings, table_to_csv, tabulate};
use crate::synthetic::{split_corpus, training_cases};

pub const THREADS_ENV: &str = "GAZEBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gazebench", version, about = "Scanpath prediction and evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predicted scanpaths against ground truth (IoU, CC, MultiMatch).
    Evaluate(EvaluateArgs),
    /// Correlate predicted and recorded case difficulty.
    Rank(RankArgs),
    /// Train a model on a corpus and its embeddings.
    Train(TrainArgs),
    /// Decode scanpaths for every case of a corpus.
    Predict(PredictArgs),
    /// Mean IoU across heatmap spreads.
    Sweep(SweepArgs),
    /// Count human ratings per criterion and score.
    Tabulate(TabulateArgs),
    /// Write a synthetic hotspot corpus with embeddings and manifest.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Predictions corpus (JSON lines).
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth corpus (JSON lines).
    #[arg(long)]
    pub gt: PathBuf,
    /// Only use ground-truth cases tagged with this split.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct StatArgs {
    #[arg(long, default_value_t = 1000)]
    pub bootstrap_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl StatArgs {
    fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig { n_resamples: self.bootstrap_n, seed: self.seed, ..Default::default() }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// JSON report path; a CSV with the same stem is written alongside.
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap Gaussian sigma in pixels.
    #[arg(long, default_value_t = 50.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.1)]
    pub iou_threshold: f64,
    #[command(flatten)]
    pub stats: StatArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// JSON report path; a CSV with the same stem is written alongside.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of hardest and easiest cases to list.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus (JSON lines).
    #[arg(long)]
    pub input: PathBuf,
    /// Embedding store; defaults to the corpus path with extension `emb`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Model output path; the loss trace goes to the same stem with `.trace.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with optional `[model]` and `[optim]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides both the initialization and the optimizer seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_fixations: Option<usize>,
    /// Defaults to `train` when the corpus has split tags, else every case.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Corpus whose cases (and image sizes) are predicted.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Predictions corpus output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Sample from the predicted Gaussians with this seed instead of using the means.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `test` when the corpus has split tags, else every case.
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated spreads in pixels, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
    pub spreads: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub iou_threshold: f64,
    #[command(flatten)]
    pub stats: StatArgs,
}

#[derive(Debug, Args)]
pub struct TabulateArgs {
    /// Ratings CSV with header `video_id,source,criterion,rating`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Corpus output path; manifest and embeddings are written alongside.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub n_train: usize,
    #[arg(long, default_value_t = 16)]
    pub n_test: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_FIXATIONS)]
    pub max_fixations: usize,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value = "synthetic")]
    pub dataset_name: String,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfigFile {
    pub model: GazeModelConfig,
    pub optim: OptimConfig,
}

impl TrainConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).context(path.display())?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

pub fn embeddings_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("emb")
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).context(path.display())
}

fn select(corpus: &Corpus, split: Option<Split>) -> Vec<&CorpusCase> {
    match split {
        Some(s) => corpus.split(s),
        None => corpus.cases.iter().collect(),
    }
}

fn default_split(corpus: &Corpus, preferred: Split) -> Option<Split> {
    corpus.cases.iter().any(|c| c.split.is_some()).then_some(preferred)
}

fn load_pair(args: &PairArgs) -> Result<(Vec<Scanpath>, Vec<Scanpath>)> {
    let pred = load_corpus(&args.input)?;
    let gt = load_corpus(&args.gt)?;
    let gt_cases: Vec<Scanpath> = select(&gt, args.split).into_iter().map(|c| c.scanpath.clone()).collect();
    if gt_cases.is_empty() {
        return Err(CliError::Validation("no ground-truth cases selected".into()));
    }
    let wanted: std::collections::BTreeSet<&str> = gt_cases.iter().map(Scanpath::case_id).collect();
    let pred_cases = pred
        .scanpaths()
        .filter(|s| args.split.is_none() || wanted.contains(s.case_id()))
        .cloned()
        .collect();
    Ok((pred_cases, gt_cases))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let (pred, gt) = load_pair(&args.pair)?;
    let opts = EvalOptions {
        spread: args.spread,
        iou_threshold: args.iou_threshold,
        bootstrap: args.stats.bootstrap(),
        ..Default::default()
    };
    let report = evaluate(&pred, &gt, &opts)?;
    write_text(&args.out, &report.to_json())?;
    write_text(&args.out.with_extension("csv"), &report.to_csv())?;
    let mut summary = String::new();
    for m in &report.summary {
        match (m.mean, m.ci_low, m.ci_high) {
            (Some(mean), Some(lo), Some(hi)) => {
                summary.push_str(&format!("{} {:.4} [{:.4}, {:.4}] (n={})\n", m.metric, mean, lo, hi, m.n_cases))
            }
            _ => summary.push_str(&format!("{} undefined (n=0)\n", m.metric)),
        }
    }
    Ok(summary)
}

pub fn cmd_rank(args: &RankArgs) -> Result<String> {
    let (pred, gt) = load_pair(&args.pair)?;
    let report = rank_report(&pair_cases(&pred, &gt)?, args.top_k)?;
    write_text(&args.out, &report.to_json())?;
    write_text(&args.out.with_extension("csv"), &report.to_csv())?;
    Ok(format!(
        "pearson {:.4} (p={:.3e})\nspearman {:.4} (p={:.3e})\n",
        report.pearson.coefficient, report.pearson.p_value, report.spearman.coefficient, report.spearman.p_value
    ))
}

pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfigFile::load(p)?,
        None => TrainConfigFile::default(),
    };
    if let Some(seed) = args.seed {
        cfg.model.seed = seed;
        cfg.optim.seed = seed;
    }
    if let Some(f) = args.max_fixations {
        cfg.model.max_fixations = f;
    }
    let corpus = load_corpus(&args.input)?;
    let split = args.split.or_else(|| default_split(&corpus, Split::Train));
    let emb_path = args.embeddings.clone().unwrap_or_else(|| embeddings_path(&args.input));
    let store = EmbeddingStore::load(&emb_path).context(emb_path.display())?;
    let cases = training_cases(select(&corpus, split), &store, cfg.model.max_fixations)?;
    let outcome = train_with_progress(&cases, &cfg.model, &cfg.optim, |e| {
        if e.epoch == 1 || e.epoch % 10 == 0 {
            eprintln!("epoch {:>4}  loss {:.5}  (spatial {:.5}, validity {:.5})", e.epoch, e.loss, e.spatial, e.validity);
        }
    })
    .context("training")?;
    outcome.model.save(&args.out).context(args.out.display())?;
    let mut trace = String::from("epoch,loss,spatial,validity,train_loss\n");
    for e in &outcome.trace {
        trace.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.loss, e.spatial, e.validity, e.train_loss));
    }
    write_text(&sibling(&args.out, ".trace.csv"), &trace)?;
    let (first, last) = (outcome.trace.first(), outcome.trace.last());
    Ok(match (first, last) {
        (Some(f), Some(l)) => format!("trained on {} cases: loss {:.5} -> {:.5}\n", cases.len(), f.loss, l.loss),
        _ => format!("trained on {} cases for 0 epochs\n", cases.len()),
    })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let corpus = load_corpus(&args.input)?;
    let split = args.split.or_else(|| default_split(&corpus, Split::Test));
    let emb_path = args.embeddings.clone().unwrap_or_else(|| embeddings_path(&args.input));
    let store = EmbeddingStore::load(&emb_path).context(emb_path.display())?;
    let model = GazeModel::load(&args.model).context(args.model.display())?;
    let mut out = Vec::new();
    let mut degenerate = 0;
    for (i, c) in select(&corpus, split).into_iter().enumerate() {
        let s = &c.scanpath;
        let heads = model.forward(&store.embedding(s.case_id())?).context(s.case_id())?;
        let mode = match args.seed {
            Some(seed) => DecodeMode::Stochastic { seed: seed.wrapping_add(i as u64) },
            None => DecodeMode::Deterministic,
        };
        let decoded = decode_scanpath(&heads, s.case_id(), s.image_dims(), mode)?;
        degenerate += usize::from(decoded.degenerate);
        out.push(CorpusCase { scanpath: snap_to_pixels(&decoded.scanpath)?, split: c.split });
    }
    if out.is_empty() {
        return Err(CliError::Validation("no cases selected for prediction".into()));
    }
    write_corpus(&args.out, &out, None)?;
    Ok(format!("predicted {} scanpaths ({} degenerate)\n", out.len(), degenerate))
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let (pred, gt) = load_pair(&args.pair)?;
    let pairs: Vec<(Scanpath, Scanpath)> = pair_cases(&pred, &gt)?
        .into_iter()
        .map(|(p, g)| (p.clone(), g.clone()))
        .collect();
    let curve = spread_sweep(&pairs, &args.spreads, args.iou_threshold, &args.stats.bootstrap())?;
    let csv = curve.to_csv();
    write_text(&args.out, &csv)?;
    Ok(csv)
}

pub fn cmd_tabulate(args: &TabulateArgs) -> Result<String> {
    let table = tabulate(&load_ratings(&args.input)?)?;
    let csv = table_to_csv(&table);
    write_text(&args.out, &csv)?;
    Ok(csv)
}

pub fn cmd_gen_synth(args: &GenSynthArgs) -> Result<String> {
    let corpus = split_corpus(args.n_train, args.n_test, args.noise, args.seed, args.max_fixations, args.d_model)?;
    let manifest = corpus.manifest(&args.dataset_name)?;
    write_corpus(&args.out, &corpus.cases, Some(&manifest))?;
    let emb_path = args.embeddings.clone().unwrap_or_else(|| embeddings_path(&args.out));
    corpus.embeddings.save(&emb_path).context(emb_path.display())?;
    Ok(format!(
        "wrote {} cases ({} train / {} test) and embeddings to {}\n",
        manifest.total,
        manifest.train,
        manifest.test,
        emb_path.display()
    ))
}

pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Tabulate(a) => cmd_tabulate(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    // A pool may already exist when called repeatedly in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| execute(&cli.command)) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
