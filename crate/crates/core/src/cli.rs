//! Command-line front end. [`run`] never exits the process; the binary maps
//! its [`CommandResult`] to an exit status.

use crate::analysis::{compare_reports, export_heatmap, header_keyword_attention, AttentionReport, LayerSelector};
use crate::corpus::{build_vocab, filter_by_length, generate_synthetic_corpus, tokenize_tree, SyntheticConfig};
use crate::encoder::ModelConfig;
use crate::latex::{corpus_stats, extract_tree, strip_noise_with_warnings, Format};
use crate::store::{self, StoreError};
use crate::train::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig, TrainError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "STRUCTMASK_THREADS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
    /// One line on success; the error message otherwise.
    pub summary: String,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(self) -> String {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::CorruptFile(_) | TrainError::VersionMismatch { .. } | TrainError::EmptyCorpus | TrainError::EmptyHeldout => {
                CliError::Data(e.to_string())
            }
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn write_out(path: &Path, bytes: &[u8], outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    store::write_atomic(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "structmask", version, about = "Structure-aware masked-LM pre-training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract document trees from LaTeX sources, one output file per document.
    Extract(ExtractArgs),
    /// Print corpus statistics for a tree directory as JSON.
    Stats(StatsArgs),
    /// Build a vocabulary and tokenized train/held-out shards from trees.
    BuildCorpus(BuildCorpusArgs),
    /// Generate a synthetic corpus with keyword annotations.
    SynthCorpus(SynthArgs),
    /// Pre-train an encoder on a built corpus.
    Pretrain(PretrainArgs),
    /// Score a checkpoint on held-out shards.
    Eval(EvalArgs),
    /// Measure header/keyword attention, optionally exporting a heatmap.
    Analyze(AnalyzeArgs),
    /// Relative change between two attention reports.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Tree,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tree => Format::Tree,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// A `.tex` file or a directory of `.tex` files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tree")]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Tree file or directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write the statistics to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildCorpusArgs {
    /// Tree file or directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for vocab.txt, train.jsonl and heldout.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Vocabulary size including the reserved tokens.
    #[arg(long, default_value_t = 500)]
    vocab_size: usize,
    /// Use an existing vocabulary file instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_tokens: usize,
    #[arg(long, default_value_t = usize::MAX)]
    max_tokens: usize,
    /// Fraction of documents held out for evaluation.
    #[arg(long, default_value_t = 0.1)]
    heldout_fraction: f64,
    /// Seed of the train/held-out split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for trees/ and annotations.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    docs: usize,
    #[arg(long, default_value_t = 80)]
    topics: usize,
    /// Body words per document.
    #[arg(long, default_value_t = 62)]
    words: usize,
    #[arg(long, default_value_t = 2)]
    sections: usize,
    #[arg(long, default_value_t = 0.8)]
    correlation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Documents per tree shard.
    #[arg(long, default_value_t = store::DEFAULT_DOCS_PER_SHARD)]
    per_shard: usize,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    /// Directory written by build-corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoint.bin, loss.csv and config.toml.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with optional [train] and [model] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Make HEADER tokens global (`on`) or train the vanilla twin (`off`).
    #[arg(long, value_enum)]
    global_attention: Option<Switch>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Tokenized shard file or directory.
    #[arg(long)]
    heldout: PathBuf,
    /// Seed for the evaluation masks; use the same value for compared models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Tokenized shard file or directory holding the annotated documents.
    #[arg(long)]
    docs: PathBuf,
    /// Annotation records, one JSON object per line.
    #[arg(long)]
    annotations: PathBuf,
    /// `last` or a zero-based layer index.
    #[arg(long, default_value = "last")]
    layer: LayerSelector,
    /// Name stored in the report; defaults to the checkpoint file name.
    #[arg(long)]
    model_id: Option<String>,
    /// Report output path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Document to export as a heatmap.
    #[arg(long, requires_all = ["heatmap_out", "vocab"])]
    heatmap_doc: Option<String>,
    /// Token range `start..end` for the heatmap; the whole document by default.
    #[arg(long, value_parser = parse_range)]
    heatmap_range: Option<(usize, usize)>,
    #[arg(long)]
    heatmap_out: Option<PathBuf>,
    /// Vocabulary used to label heatmap axes.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected start..end")?;
    let a = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    Ok((a, b))
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            return CommandResult {
                exit_code: code,
                outputs: Vec::new(),
                summary: e.render().to_string(),
            };
        }
    };
    let mut outputs = Vec::new();
    let result = match cli.command {
        Command::Extract(a) => extract(a, &mut outputs),
        Command::Stats(a) => stats(a, &mut outputs),
        Command::BuildCorpus(a) => build_corpus(a, &mut outputs),
        Command::SynthCorpus(a) => synth_corpus(a, &mut outputs),
        Command::Pretrain(a) => pretrain(a, &mut outputs),
        Command::Eval(a) => eval(a, &mut outputs),
        Command::Analyze(a) => analyze(a, &mut outputs),
        Command::Compare(a) => compare(a, &mut outputs),
    };
    match result {
        Ok(summary) => CommandResult { exit_code: EXIT_OK, outputs, summary },
        Err(e) => CommandResult {
            exit_code: e.code(),
            outputs: Vec::new(),
            summary: e.message(),
        },
    }
}

fn tex_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files = Vec::new();
    let entries = std::fs::read_dir(input).map_err(|e| data(format!("{}: {e}", input.display())))?;
    for entry in entries {
        let path = entry.map_err(data)?.path();
        if path.extension().is_some_and(|e| e == "tex") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn extract(args: ExtractArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let format = Format::from(args.format);
    let mut trees = Vec::new();
    let mut skipped = 0;
    for file in tex_files(&args.input)? {
        let raw = std::fs::read(&file).map_err(|e| data(format!("{}: {e}", file.display())))?;
        let raw = String::from_utf8_lossy(&raw);
        let doc_id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (clean, warnings) = strip_noise_with_warnings(&raw);
        for w in warnings {
            eprintln!("warning: {}: {w}", file.display());
        }
        match extract_tree(&clean, &doc_id) {
            Ok(tree) => trees.push(tree),
            Err(e) => {
                eprintln!("warning: {}: {e}", file.display());
                skipped += 1;
            }
        }
    }
    if trees.is_empty() {
        return Err(data(format!("{}: no extractable documents", args.input.display())));
    }
    for tree in &trees {
        let path = args.out.join(format!("{}.{}", tree.doc_id, format.extension()));
        write_out(&path, &crate::latex::encode_document(tree, format), outputs)?;
    }
    Ok(format!("extracted {} documents ({skipped} skipped) into {}", trees.len(), args.out.display()))
}

fn stats(args: StatsArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let trees = store::read_trees(&args.input)?;
    let stats = corpus_stats(&trees).map_err(data)?;
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    if let Some(out) = &args.out {
        write_out(out, format!("{json}\n").as_bytes(), outputs)?;
    }
    Ok(json)
}

fn build_corpus(args: BuildCorpusArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    if !(0.0..1.0).contains(&args.heldout_fraction) {
        return Err(CliError::Usage("--heldout-fraction must lie in [0, 1)".into()));
    }
    let trees = store::read_trees(&args.input)?;
    let mut order: Vec<usize> = (0..trees.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
    let n_held = ((trees.len() as f64) * args.heldout_fraction).round() as usize;
    let (held_idx, train_idx) = order.split_at(n_held);
    let mut train_idx = train_idx.to_vec();
    let mut held_idx = held_idx.to_vec();
    train_idx.sort_unstable();
    held_idx.sort_unstable();
    let train_trees: Vec<_> = train_idx.iter().map(|&i| trees[i].clone()).collect();
    let vocab = match &args.vocab {
        Some(path) => store::read_vocab(path)?,
        None => build_vocab(&train_trees, args.vocab_size).map_err(data)?,
    };
    let tokenize = |idx: &[usize]| {
        let docs = idx.iter().map(|&i| tokenize_tree(&trees[i], &vocab)).collect();
        filter_by_length(docs, args.min_tokens, args.max_tokens)
    };
    let train_docs = tokenize(&train_idx);
    let held_docs = tokenize(&held_idx);
    if train_docs.is_empty() {
        return Err(data("no training documents survive the length filter"));
    }
    write_out(&args.out.join("vocab.txt"), vocab.to_file_string().as_bytes(), outputs)?;
    write_out(&args.out.join("train.jsonl"), store::encode_tokenized(&train_docs).as_bytes(), outputs)?;
    write_out(&args.out.join("heldout.jsonl"), store::encode_tokenized(&held_docs).as_bytes(), outputs)?;
    Ok(format!(
        "vocabulary {} tokens, {} training and {} held-out documents in {}",
        vocab.len(),
        train_docs.len(),
        held_docs.len(),
        args.out.display()
    ))
}

fn synth_corpus(args: SynthArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let config = SyntheticConfig {
        sections_per_doc: args.sections,
        ..SyntheticConfig::new(args.docs, args.topics, args.words, args.correlation, args.seed)
    };
    let corpus = generate_synthetic_corpus(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    outputs.extend(store::write_tree_shards(&args.out.join("trees"), &corpus.trees, Format::Tree, args.per_shard)?);
    let ann_path = args.out.join("annotations.jsonl");
    store::write_annotations(&ann_path, &corpus.annotations)?;
    outputs.push(ann_path);
    Ok(format!(
        "{} synthetic documents, {} annotations in {}",
        corpus.trees.len(),
        corpus.annotations.len(),
        args.out.display()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

fn merge(base: &mut toml::Table, overlay: &toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Built-in defaults overlaid with a TOML config file.
pub fn load_run_config(file: Option<&str>) -> Result<RunConfig, String> {
    let defaults = RunConfig { train: TrainConfig::default(), model: ModelConfig::default() };
    let Some(text) = file else { return Ok(defaults) };
    let overlay: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut base = toml::Table::try_from(&defaults).map_err(|e| e.to_string())?;
    merge(&mut base, &overlay);
    base.try_into().map_err(|e: toml::de::Error| e.to_string())
}

fn pretrain(args: PretrainArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let file_text = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| data(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = load_run_config(file_text.as_deref()).map_err(|e| data(format!("config: {e}")))?;
    let t = &mut cfg.train;
    if let Some(v) = args.global_attention {
        t.global_attention_enabled = v == Switch::On;
    }
    t.seed = args.seed.unwrap_or(t.seed);
    t.steps = args.steps.unwrap_or(t.steps);
    t.batch_size = args.batch_size.unwrap_or(t.batch_size);
    t.lr = args.lr.unwrap_or(t.lr);
    t.eval_every = args.eval_every.unwrap_or(t.eval_every);
    let m = &mut cfg.model;
    m.layers = args.layers.unwrap_or(m.layers);
    m.heads = args.heads.unwrap_or(m.heads);
    m.d_model = args.d_model.unwrap_or(m.d_model);
    m.d_ff = args.d_ff.unwrap_or(m.d_ff);
    m.window = args.window.unwrap_or(m.window);
    m.max_len = args.max_len.unwrap_or(m.max_len);

    let vocab = store::read_vocab(&args.corpus.join("vocab.txt"))?;
    m.vocab_size = vocab.len();
    cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let train_docs = store::read_tokenized(&args.corpus.join("train.jsonl"))?;
    let heldout = if cfg.train.eval_every > 0 {
        Some(store::read_tokenized(&args.corpus.join("heldout.jsonl"))?)
    } else {
        None
    };
    let outcome = train(&train_docs, &cfg.train, &cfg.model, heldout.as_deref())?;

    let mut loss = String::from("step,loss\n");
    for (step, l) in &outcome.loss_curve {
        writeln!(loss, "{step},{l:e}").expect("string write");
    }
    let echo = toml::to_string(&cfg).expect("config serializes");
    let ckpt_path = args.out.join("checkpoint.bin");
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    outputs.push(ckpt_path);
    write_out(&args.out.join("loss.csv"), loss.as_bytes(), outputs)?;
    write_out(&args.out.join("config.toml"), echo.as_bytes(), outputs)?;
    if !outcome.eval_curve.is_empty() {
        let mut csv = String::from("step,masked_ce_nats,bpc\n");
        for (step, r) in &outcome.eval_curve {
            writeln!(csv, "{step},{:e},{:e}", r.masked_ce_nats, r.bpc).expect("string write");
        }
        write_out(&args.out.join("eval.csv"), csv.as_bytes(), outputs)?;
    }
    let last = outcome.loss_curve.last().map_or(f64::NAN, |x| x.1);
    Ok(format!(
        "trained {} steps (global attention {}), final batch loss {last:.4}, checkpoint in {}",
        cfg.train.steps,
        if cfg.train.global_attention_enabled { "on" } else { "off" },
        args.out.display()
    ))
}

fn eval(args: EvalArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let docs = store::read_tokenized(&args.heldout)?;
    let report = evaluate(&ckpt, &docs, args.seed)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        write_out(out, format!("{json}\n").as_bytes(), outputs)?;
    }
    Ok(json)
}

fn analyze(args: AnalyzeArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let docs = store::read_tokenized(&args.docs)?;
    let annotations = store::read_annotations(&args.annotations)?;
    let model_id = args.model_id.clone().unwrap_or_else(|| args.checkpoint.display().to_string());
    let report = header_keyword_attention(&ckpt, &model_id, &docs, &annotations, args.layer).map_err(data)?;
    if let (Some(doc_id), Some(out), Some(vocab)) = (&args.heatmap_doc, &args.heatmap_out, &args.vocab) {
        let vocab = store::read_vocab(vocab)?;
        let doc = docs
            .iter()
            .find(|d| &d.doc_id == doc_id)
            .ok_or_else(|| data(format!("unknown document {doc_id:?}")))?;
        let (start, end) = args.heatmap_range.unwrap_or((0, doc.len()));
        let csv = export_heatmap(&ckpt, doc, &vocab, args.layer, start..end).map_err(data)?;
        write_out(out, csv.as_bytes(), outputs)?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_out(&args.out, format!("{json}\n").as_bytes(), outputs)?;
    Ok(format!(
        "layer {}: header->keyword {:.6} over {} pairs, keyword->header {:.6} over {} pairs",
        report.layer,
        report.header_to_keyword,
        report.header_to_keyword_pairs,
        report.keyword_to_header,
        report.keyword_to_header_pairs
    ))
}

fn read_report(path: &Path) -> Result<AttentionReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn compare(args: CompareArgs, outputs: &mut Vec<PathBuf>) -> Result<String, CliError> {
    let a = read_report(&args.a)?;
    let b = read_report(&args.b)?;
    let change = compare_reports(&a, &b).map_err(data)?;
    let json = serde_json::to_string_pretty(&change).expect("change serializes");
    if let Some(out) = &args.out {
        write_out(out, format!("{json}\n").as_bytes(), outputs)?;
    }
    Ok(json)
}
