//! Command-line driver: generate synthetic streams, run one strategy,
//! compare strategies across seeds, sweep a hyper-parameter, score text
//! files, and turn histories into forgetting reports.
//!
//! Every CSV starts with `#` lines holding the code version and the fully
//! resolved configuration. Bodies depend only on the flags, so repeated
//! invocations produce identical files. Output files are written under
//! `--out-dir`; input paths are taken as given.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::json;

use crate::corpus::{generate_synthetic, load_stream, DriftConfig, Stream};
use crate::error::{Error, Result};
use crate::metrics::{bleu4, meteor, rouge_l, sentence_bleu, BleuMode};
use crate::model::{write_checkpoint, AdamConfig};
use crate::report::{
    fmt_num, forgetting_report, median, omega_aggregates, omega_summaries, write_forgetting_csv,
    write_history_csv, write_meta, Metric, OmegaSummary,
};
use crate::strategy::{run_stream, Budget, EvalRecord, StepRecord, StrategyConfig, StrategyKind};

#[derive(Debug, Parser)]
#[command(name = "repeat", version, about = "Continual learning with exemplar replay and adaptive EWC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic drifting stream and its manifest.
    Generate(GenerateArgs),
    /// Train one strategy over a stream.
    Run(RunArgs),
    /// Train several strategies over several seeds and collate Ω.
    Compare(CompareArgs),
    /// Repeat the comparison for each value of one hyper-parameter.
    Sweep(SweepArgs),
    /// Score candidate sentences against references.
    Score(ScoreArgs),
    /// Compute forgetting curves from a history CSV.
    Report(ReportArgs),
}

/// Optional JSON file with the same keys as the long flags (underscored);
/// flags win on conflict.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    #[serde(deserialize_with = "de_budget")]
    pub budget: Option<Budget>,
    pub k: Option<usize>,
    pub mu: Option<usize>,
    pub lambda_base: Option<f64>,
    pub lr: Option<f64>,
    pub feature_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub strategy: Option<StrategyKind>,
    pub strategies: Option<Vec<StrategyKind>>,
    pub threads: Option<usize>,
    pub drift: Option<serde_json::Value>,
}

fn de_budget<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Budget>, D::Error> {
    let raw: Option<serde_json::Value> = Option::deserialize(d)?;
    raw.map(|v| {
        let text = match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        text.parse::<Budget>().map_err(serde::de::Error::custom)
    })
    .transpose()
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_file(path)?;
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub partitions: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub valid: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub tokens: Option<usize>,
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub background: Option<usize>,
    #[arg(long)]
    pub signature_share: Option<f64>,
}

/// Training hyper-parameters shared by run, compare and sweep.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainingFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Exemplar budget: an integer count or a fraction of the training data seen.
    #[arg(long)]
    pub budget: Option<Budget>,
    /// Clusters per class.
    #[arg(long)]
    pub k: Option<usize>,
    /// Candidate pool multiplier.
    #[arg(long)]
    pub mu: Option<usize>,
    #[arg(long)]
    pub lambda_base: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

/// Strategy settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub budget: Budget,
    pub k: usize,
    pub mu: usize,
    pub lambda_base: f64,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub adam: AdamConfig,
}

impl TrainingConfig {
    pub fn strategy(&self, kind: StrategyKind, seed: u64) -> StrategyConfig {
        StrategyConfig {
            kind,
            epochs: self.epochs,
            batch_size: self.batch_size,
            budget: self.budget,
            k: self.k,
            mu: self.mu,
            lambda_base: self.lambda_base,
            seed,
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            adam: self.adam,
        }
    }
}

impl TrainingFlags {
    pub fn resolve(&self, file: &FileConfig) -> Result<TrainingConfig> {
        let d = StrategyConfig::default();
        let cfg = TrainingConfig {
            epochs: self.epochs.or(file.epochs).unwrap_or(d.epochs),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            budget: self.budget.or(file.budget).unwrap_or(d.budget),
            k: self.k.or(file.k).unwrap_or(d.k),
            mu: self.mu.or(file.mu).unwrap_or(d.mu),
            lambda_base: self.lambda_base.or(file.lambda_base).unwrap_or(d.lambda_base),
            feature_dim: self.feature_dim.or(file.feature_dim).unwrap_or(d.feature_dim),
            hidden_dim: self.hidden_dim.or(file.hidden_dim).unwrap_or(d.hidden_dim),
            adam: AdamConfig {
                lr: self.lr.or(file.lr).unwrap_or(d.adam.lr),
                ..d.adam
            },
        };
        cfg.strategy(StrategyKind::Ft, 0).validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated strategies; all five by default.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Vec<StrategyKind>,
    /// Comma-separated seeds; 0..5 by default.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Worker threads; all available cores by default.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub compare: CompareArgs,
    /// One of M, lambda_base, K, mu.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// One whitespace-tokenized candidate per line.
    #[arg(long)]
    pub candidates: PathBuf,
    /// One whitespace-tokenized reference per line.
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "accuracy")]
    pub metric: Metric,
}

/// Parses arguments, runs the command, reports errors on stderr, and returns
/// the exit code: 0 on success, 1 on invalid input, 2 on runtime failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a).map(|p| println!("{}", p.display())),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist or is not a file", path.display())))
    }
}

fn open_stream(manifest: &Path) -> Result<Stream> {
    require_file(manifest)?;
    load_stream(manifest)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn meta_lines(command: &str, config: &serde_json::Value) -> Vec<String> {
    vec![
        crate::VERSION.to_string(),
        format!("command: {command}"),
        format!("config: {config}"),
    ]
}

/// Writes `#` meta lines, a header, and rows.
fn write_table(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    write_meta(&mut buf, meta)?;
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let buf = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    write_file(path, buf)
}

fn resolve_drift(a: &GenerateArgs, file: &FileConfig) -> Result<DriftConfig> {
    let mut cfg: DriftConfig = match &file.drift {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("drift: {e}")))?,
        None => DriftConfig::default(),
    };
    if let Some(s) = a.seed.or(file.seed) {
        cfg.seed = s;
    }
    macro_rules! set {
        ($flag:ident => $field:ident) => {
            if let Some(v) = a.$flag {
                cfg.$field = v;
            }
        };
    }
    set!(partitions => n_partitions);
    set!(classes => n_classes);
    set!(train => train_size);
    set!(valid => valid_size);
    set!(test => test_size);
    set!(vocab => vocab_size);
    set!(tokens => tokens_per_sample);
    set!(drift => drift_strength);
    set!(noise => noise_rate);
    set!(pool_size => pool_size);
    set!(background => background_size);
    set!(signature_share => signature_share);
    cfg.validate()?;
    Ok(cfg)
}

/// Writes the stream and returns the manifest path.
pub fn cmd_generate(a: &GenerateArgs) -> Result<PathBuf> {
    let file = load_file_config(a.config.as_deref())?;
    let cfg = resolve_drift(a, &file)?;
    generate_synthetic(&cfg, &a.out_dir)?;
    Ok(a.out_dir.join("manifest.json"))
}

/// Finished run without the bulky model and optimizer state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: StrategyConfig,
    pub history: Vec<EvalRecord>,
    pub steps: Vec<StepRecord>,
}

/// Runs every configuration, spreading them over `threads` workers; results
/// come back in input order.
pub fn run_many(configs: &[StrategyConfig], stream: &Stream, threads: usize) -> Result<Vec<RunOutput>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunOutput>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    let workers = threads.clamp(1, configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let out = run_stream(cfg, stream).map(|state| RunOutput {
                    config: cfg.clone(),
                    history: state.history,
                    steps: state.steps,
                });
                if out.is_err() {
                    next.store(configs.len(), Ordering::SeqCst);
                }
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    let mut out = Vec::with_capacity(configs.len());
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(r) => out.push(r?),
            None => continue,
        }
    }
    if out.len() != configs.len() {
        return Err(Error::InvalidInput("a run failed before all runs were scheduled".into()));
    }
    Ok(out)
}

fn step_rows(runs: &[RunOutput]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for run in runs {
        for s in &run.steps {
            rows.push(vec![
                run.config.kind.name().to_string(),
                run.config.seed.to_string(),
                s.step.to_string(),
                fmt_num(s.lambda),
                s.budget.to_string(),
                s.mixture_size.to_string(),
                s.store_sizes.iter().sum::<usize>().to_string(),
                s.store_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
                s.epoch_losses.iter().map(|&l| fmt_num(l)).collect::<Vec<_>>().join(";"),
            ]);
        }
    }
    rows
}

const STEP_HEADER: [&str; 9] = [
    "strategy",
    "seed",
    "step",
    "lambda",
    "budget",
    "mixture_size",
    "store_total",
    "store_sizes",
    "epoch_losses",
];

fn omega_json(summaries: &[OmegaSummary]) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    for s in summaries {
        obj.insert(
            s.metric.name().to_string(),
            json!({"per_step": s.per_step, "overall": s.overall}),
        );
    }
    serde_json::Value::Object(obj)
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let file = load_file_config(a.config.as_deref())?;
    let training = a.training.resolve(&file)?;
    let kind = a.strategy.or(file.strategy).unwrap_or(StrategyKind::Repeat);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let cfg = training.strategy(kind, seed);
    let stream = open_stream(&a.manifest)?;
    let config_json = json!({
        "manifest": a.manifest,
        "strategy": kind,
        "seed": seed,
        "training": training,
    });
    let meta = meta_lines("run", &config_json);

    let state = run_stream(&cfg, &stream)?;
    create_dir(&a.out_dir)?;
    let mut buf = Vec::new();
    write_history_csv(&mut buf, &meta, &state.history)?;
    write_file(&a.out_dir.join("history.csv"), buf)?;
    let output = RunOutput {
        config: cfg.clone(),
        history: state.history.clone(),
        steps: state.steps.clone(),
    };
    write_table(&a.out_dir.join("steps.csv"), &meta, &STEP_HEADER, &step_rows(&[output]))?;

    let summaries = omega_summaries(&state.history)?;
    let summary = json!({
        "version": crate::VERSION,
        "config": config_json,
        "omega": omega_json(&summaries),
        "steps": state.steps,
    });
    write_file(&a.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write_checkpoint(&a.out_dir.join("model.bin"), &state.model)?;
    if let Some(anchor) = &state.anchor {
        anchor.write(&a.out_dir.join("anchor.bin"))?;
    }
    if kind.replays() {
        state.store.write(&a.out_dir.join("store.json"))?;
    }
    Ok(())
}

struct CompareSetup {
    training: TrainingConfig,
    strategies: Vec<StrategyKind>,
    seeds: Vec<u64>,
    threads: usize,
}

fn resolve_compare(a: &CompareArgs, file: &FileConfig) -> Result<CompareSetup> {
    let training = a.training.resolve(file)?;
    let mut strategies = if !a.strategies.is_empty() {
        a.strategies.clone()
    } else {
        file.strategies.clone().unwrap_or_else(|| StrategyKind::ALL.to_vec())
    };
    strategies.sort();
    strategies.dedup();
    let seeds = if !a.seeds.is_empty() {
        a.seeds.clone()
    } else {
        file.seeds.clone().unwrap_or_else(|| (0..5).collect())
    };
    if strategies.is_empty() || seeds.is_empty() {
        return Err(Error::Config("at least one strategy and one seed are required".into()));
    }
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        return Err(Error::Config("seeds must be distinct".into()));
    }
    let threads = a
        .threads
        .or(file.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    Ok(CompareSetup {
        training,
        strategies,
        seeds: unique,
        threads,
    })
}

fn omega_rows(summaries: &[OmegaSummary], prefix: &[String]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut run_keys: Vec<(StrategyKind, u64)> = summaries.iter().map(|s| (s.strategy, s.seed)).collect();
    run_keys.dedup();
    for (kind, seed) in run_keys {
        let mut row = prefix.to_vec();
        row.push(kind.name().to_string());
        row.push(seed.to_string());
        for metric in Metric::ALL {
            let s = summaries
                .iter()
                .find(|s| s.strategy == kind && s.seed == seed && s.metric == metric)
                .unwrap();
            row.push(fmt_num(s.overall));
        }
        rows.push(row);
    }
    let aggregates: Vec<_> = Metric::ALL.iter().map(|&m| omega_aggregates(summaries, m)).collect();
    for (label, pick) in [("median", 0usize), ("mean", 1)] {
        for kind in aggregates[0].keys() {
            let mut row = prefix.to_vec();
            row.push(kind.name().to_string());
            row.push(label.to_string());
            for agg in &aggregates {
                let (med, avg) = agg[kind];
                row.push(fmt_num(if pick == 0 { med } else { avg }));
            }
            rows.push(row);
        }
    }
    rows
}

const OMEGA_HEADER: [&str; 6] = ["strategy", "seed", "omega_accuracy", "omega_precision", "omega_recall", "omega_f1"];

/// First-partition curve: score on test set 1 after every step, per run and
/// as the median over seeds.
fn curve_rows(history: &[EvalRecord]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let first: Vec<&EvalRecord> = history.iter().filter(|r| r.test == 1).collect();
    for r in &first {
        rows.push(vec![
            r.strategy.name().to_string(),
            r.seed.to_string(),
            r.step.to_string(),
            fmt_num(r.scores.accuracy),
            fmt_num(r.scores.f1),
        ]);
    }
    let mut keys: Vec<(StrategyKind, usize)> = first.iter().map(|r| (r.strategy, r.step)).collect();
    keys.sort();
    keys.dedup();
    for (kind, step) in keys {
        let pick = |m: Metric| {
            let v: Vec<f64> = first
                .iter()
                .filter(|r| r.strategy == kind && r.step == step)
                .map(|r| m.of(&r.scores))
                .collect();
            median(&v).unwrap()
        };
        rows.push(vec![
            kind.name().to_string(),
            "median".to_string(),
            step.to_string(),
            fmt_num(pick(Metric::Accuracy)),
            fmt_num(pick(Metric::F1)),
        ]);
    }
    rows
}

fn compare_runs(setup: &CompareSetup, stream: &Stream) -> Result<Vec<RunOutput>> {
    let configs: Vec<StrategyConfig> = setup
        .strategies
        .iter()
        .flat_map(|&k| setup.seeds.iter().map(move |&s| (k, s)))
        .map(|(k, s)| setup.training.strategy(k, s))
        .collect();
    run_many(&configs, stream, setup.threads)
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let file = load_file_config(a.config.as_deref())?;
    let setup = resolve_compare(a, &file)?;
    let stream = open_stream(&a.manifest)?;
    let config_json = json!({
        "manifest": a.manifest,
        "strategies": setup.strategies,
        "seeds": setup.seeds,
        "training": setup.training,
    });
    let meta = meta_lines("compare", &config_json);
    let runs = compare_runs(&setup, &stream)?;
    let history: Vec<EvalRecord> = runs.iter().flat_map(|r| r.history.iter().cloned()).collect();
    let summaries = omega_summaries(&history)?;

    create_dir(&a.out_dir)?;
    write_table(&a.out_dir.join("compare.csv"), &meta, &OMEGA_HEADER, &omega_rows(&summaries, &[]))?;
    write_table(
        &a.out_dir.join("curve.csv"),
        &meta,
        &["strategy", "seed", "step", "accuracy", "f1"],
        &curve_rows(&history),
    )?;
    write_table(&a.out_dir.join("steps.csv"), &meta, &STEP_HEADER, &step_rows(&runs))?;
    let mut buf = Vec::new();
    write_history_csv(&mut buf, &meta, &history)?;
    write_file(&a.out_dir.join("history.csv"), buf)?;
    let mut buf = Vec::new();
    write_forgetting_csv(&mut buf, &meta, Metric::Accuracy, &forgetting_report(&history, Metric::Accuracy)?)?;
    write_file(&a.out_dir.join("forgetting.csv"), buf)?;

    let aggregates: serde_json::Map<String, serde_json::Value> = Metric::ALL
        .iter()
        .map(|&m| {
            let per_kind: serde_json::Map<String, serde_json::Value> = omega_aggregates(&summaries, m)
                .into_iter()
                .map(|(k, (med, avg))| (k.name().to_string(), json!({"median": med, "mean": avg})))
                .collect();
            (m.name().to_string(), serde_json::Value::Object(per_kind))
        })
        .collect();
    let summary = json!({
        "version": crate::VERSION,
        "config": config_json,
        "omega": aggregates,
    });
    write_file(&a.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Hyper-parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Budget,
    LambdaBase,
    K,
    Mu,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "M" | "m" | "budget" => Ok(SweepParam::Budget),
            "lambda_base" | "lambda" => Ok(SweepParam::LambdaBase),
            "K" | "k" => Ok(SweepParam::K),
            "mu" => Ok(SweepParam::Mu),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected M, lambda_base, K or mu"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Budget => "M",
            SweepParam::LambdaBase => "lambda_base",
            SweepParam::K => "K",
            SweepParam::Mu => "mu",
        }
    }

    fn apply(self, cfg: &TrainingConfig, value: &str) -> Result<TrainingConfig> {
        let bad = || Error::Config(format!("{value:?} is not a valid value for {}", self.name()));
        let mut out = cfg.clone();
        match self {
            SweepParam::Budget => out.budget = value.parse()?,
            SweepParam::LambdaBase => out.lambda_base = value.parse().map_err(|_| bad())?,
            SweepParam::K => out.k = value.parse().map_err(|_| bad())?,
            SweepParam::Mu => out.mu = value.parse().map_err(|_| bad())?,
        }
        out.strategy(StrategyKind::Ft, 0).validate()?;
        Ok(out)
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let file = load_file_config(a.compare.config.as_deref())?;
    let param = SweepParam::parse(&a.param)?;
    let base = resolve_compare(&a.compare, &file)?;
    let settings = a
        .values
        .iter()
        .map(|v| Ok((v.clone(), param.apply(&base.training, v)?)))
        .collect::<Result<Vec<_>>>()?;
    let stream = open_stream(&a.compare.manifest)?;
    let config_json = json!({
        "manifest": a.compare.manifest,
        "param": param.name(),
        "values": a.values,
        "strategies": base.strategies,
        "seeds": base.seeds,
        "training": base.training,
    });
    let meta = meta_lines("sweep", &config_json);

    let mut rows = Vec::new();
    for (value, training) in settings {
        let setup = CompareSetup {
            training,
            strategies: base.strategies.clone(),
            seeds: base.seeds.clone(),
            threads: base.threads,
        };
        let runs = compare_runs(&setup, &stream)?;
        let history: Vec<EvalRecord> = runs.into_iter().flat_map(|r| r.history).collect();
        let summaries = omega_summaries(&history)?;
        rows.extend(omega_rows(&summaries, &[param.name().to_string(), value]));
    }
    let mut header = vec!["param", "value"];
    header.extend(OMEGA_HEADER);
    create_dir(&a.compare.out_dir)?;
    write_table(&a.compare.out_dir.join("sweep.csv"), &meta, &header, &rows)
}

fn read_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    require_file(path)?;
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(raw
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let cands = read_lines(&a.candidates)?;
    let refs = read_lines(&a.references)?;
    if cands.len() != refs.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidate lines but {} reference lines",
            cands.len(),
            refs.len()
        )));
    }
    let config_json = json!({"candidates": a.candidates, "references": a.references});
    let meta = meta_lines("score", &config_json);
    let mut rows = Vec::new();
    let (mut meteor_sum, mut rouge_sum) = (0.0, 0.0);
    for (i, (c, r)) in cands.iter().zip(&refs).enumerate() {
        let (b, m, l) = (sentence_bleu(c, r), meteor(c, r), rouge_l(c, r));
        meteor_sum += m;
        rouge_sum += l;
        rows.push(vec![(i + 1).to_string(), fmt_num(b), fmt_num(m), fmt_num(l)]);
    }
    if !cands.is_empty() {
        let n = cands.len() as f64;
        rows.push(vec![
            "corpus".to_string(),
            fmt_num(bleu4(&cands, &refs, BleuMode::Corpus)?),
            fmt_num(meteor_sum / n),
            fmt_num(rouge_sum / n),
        ]);
    }
    create_dir(&a.out_dir)?;
    write_table(&a.out_dir.join("score.csv"), &meta, &["line", "bleu4", "meteor", "rouge_l"], &rows)
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    require_file(&a.history)?;
    let file = fs::File::open(&a.history).map_err(|e| Error::io(&a.history, e))?;
    let history = crate::report::read_history_csv(file)?;
    let records = forgetting_report(&history, a.metric)?;
    let meta = meta_lines("report", &json!({"history": a.history, "metric": a.metric}));
    create_dir(&a.out_dir)?;
    let mut buf = Vec::new();
    write_forgetting_csv(&mut buf, &meta, a.metric, &records)?;
    write_file(&a.out_dir.join("forgetting.csv"), buf)
}

/// Median Ω over seeds for one strategy and metric.
pub fn median_omega(summaries: &[OmegaSummary], kind: StrategyKind, metric: Metric) -> Option<f64> {
    let v: Vec<f64> = summaries
        .iter()
        .filter(|s| s.strategy == kind && s.metric == metric)
        .map(|s| s.overall)
        .collect();
    median(&v)
}
