//! `laficmil` command line: train, eval, verify and bench.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::bench::{format_records, format_table, run_bench, BenchConfig};
use crate::corpus::dataset::{build_bags, load_dataset, EmbedOptions};
use crate::corpus::{generate_correlated_task, load_embeddings, Bag};
use crate::error::{Error, Result};
use crate::model::{checkpoint, ModelConfig, ModelParams, Task};
use crate::training::{evaluate, metric_name, train, Target, TrainConfig};
use crate::verify::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "laficmil", version, about = "Correlated multiple-instance classification of long inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and optionally write a checkpoint.
    Train(RunArgs),
    /// Score a checkpoint on a dataset or the synthetic test split.
    Eval(RunArgs),
    /// Run oracle and property suites.
    Verify {
        /// pinv, nystrom, gradcheck, entropy or all
        suite: Suite,
    },
    /// Compare exact and Nyström attention time and peak memory.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Line-delimited JSON dataset.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Use the generated ordered co-occurrence task instead of a dataset.
    #[arg(long)]
    synthetic: bool,
    /// Precomputed chunk embeddings referenced by `chunks` records.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// TOML file with any `RunConfig` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report file; the report is also printed.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    landmarks: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    task: Option<Task>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated ascending sequence lengths.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [256usize, 1024, 4096])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    landmarks: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Largest n for which exact attention is run.
    #[arg(long, default_value_t = 4096)]
    exact_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File for the JSON records.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Effective run settings: built-in defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub landmarks: usize,
    pub pinv_iterations: usize,
    pub dconv_kernel: usize,
    pub max_bag: usize,
    pub chunk_size: usize,
    pub task: Task,
    /// Inferred from the labels when 0.
    pub num_labels: usize,
    pub synthetic_train_bags: usize,
    pub synthetic_test_bags: usize,
    pub synthetic_instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            lr: 3e-3,
            dim: 16,
            heads: 2,
            layers: 1,
            landmarks: 8,
            pinv_iterations: 6,
            dconv_kernel: 3,
            max_bag: 64,
            chunk_size: 512,
            task: Task::Binary,
            num_labels: 0,
            synthetic_train_bags: 400,
            synthetic_test_bags: 200,
            synthetic_instances: 6,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("{origin}: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data")
    }

    fn apply(&mut self, args: &RunArgs) {
        macro_rules! take {
            ($($field:ident <- $flag:ident),*) => {
                $(if let Some(v) = args.$flag { self.$field = v; })*
            };
        }
        take!(seed <- seed, epochs <- epochs, lr <- lr, dim <- dim, heads <- heads,
              layers <- layers, landmarks <- landmarks, chunk_size <- chunk_size, task <- task);
    }

    pub fn model_config(&self, num_labels: usize) -> Result<ModelConfig> {
        let mut attention = AttentionConfig::new(self.dim, self.heads)?.with_landmarks(self.landmarks);
        attention.pinv_iterations = self.pinv_iterations;
        attention.dconv_kernel = self.dconv_kernel;
        let mut cfg = ModelConfig::new(attention, self.task, num_labels)?;
        cfg.layers = self.layers;
        cfg.max_bag = self.max_bag;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::new(self.task)
        }
    }
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::from_toml(&text, &path.display().to_string())?
        }
        None => RunConfig::default(),
    };
    cfg.apply(args);
    Ok(cfg)
}

fn infer_num_labels(task: Task, bags: &[Bag]) -> usize {
    match task {
        Task::Binary => 1,
        Task::Multiclass => bags
            .iter()
            .filter_map(|b| match b.label {
                Target::Index(i) => Some(i + 1),
                Target::Labels(_) => None,
            })
            .max()
            .unwrap_or(0)
            .max(2),
        Task::Multilabel => bags
            .iter()
            .find_map(|b| match &b.label {
                Target::Labels(l) => Some(l.len()),
                Target::Index(_) => None,
            })
            .unwrap_or(0),
    }
}

/// Training bags and optional held-out bags.
fn load_bags(args: &RunArgs, cfg: &RunConfig, dim: usize) -> Result<(Vec<Bag>, Vec<Bag>)> {
    if args.synthetic {
        if cfg.task != Task::Binary {
            return Err(Error::InvalidConfig("the synthetic task is binary; use --task binary".into()));
        }
        let total = cfg.synthetic_train_bags + cfg.synthetic_test_bags;
        let mut bags = generate_correlated_task(total, cfg.synthetic_instances, dim, cfg.seed)?.bags;
        let test = bags.split_off(cfg.synthetic_train_bags.min(total));
        return Ok((bags, test));
    }
    let path = args
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("either --dataset or --synthetic is required".into()))?;
    let records = load_dataset(path)?;
    let embeddings = args.embeddings.as_deref().map(load_embeddings).transpose()?;
    let options = EmbedOptions {
        chunk_size: cfg.chunk_size,
        dim,
        seed: cfg.seed,
    };
    Ok((build_bags(&records, &options, embeddings.as_ref())?, Vec::new()))
}

fn emit_report(report: &str, out: Option<&Path>) -> Result<()> {
    print!("{report}");
    if let Some(path) = out {
        checkpoint::write_atomic(path, report.as_bytes())?;
    }
    Ok(())
}

fn run_train(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let (train_bags, test_bags) = load_bags(args, &cfg, cfg.dim)?;
    if train_bags.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_labels = if cfg.num_labels > 0 {
        cfg.num_labels
    } else {
        infer_num_labels(cfg.task, &train_bags)
    };
    let model_cfg = cfg.model_config(num_labels)?;
    let mut params = ModelParams::init(&model_cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let held_out = (!test_bags.is_empty()).then_some(test_bags.as_slice());
    let report = train(&train_bags, &mut params, &model_cfg, &cfg.train_config(), held_out)?;
    if let Some(path) = &args.checkpoint {
        checkpoint::save(path, &model_cfg, &params)?;
    }

    let last = report.final_record().ok_or_else(|| Error::InvalidConfig("epochs must be >= 1".into()))?;
    let summary = serde_json::json!({
        "command": "train",
        "task": cfg.task,
        "metric": report.metric_name,
        "epochs": report.epochs.len(),
        "final_loss": last.mean_loss,
        "final_metric": last.metric,
        "final_eval_metric": last.eval_metric,
        "train_bags": train_bags.len(),
        "eval_bags": test_bags.len(),
        "num_labels": num_labels,
        "parameters": params.parameter_count(),
    });
    let mut text = String::new();
    writeln!(text, "# effective config\n{}", cfg.to_toml()).unwrap();
    writeln!(text, "# epochs\n{}", report.to_lines()).unwrap();
    writeln!(text, "# summary\n{summary}").unwrap();
    emit_report(&text, args.out.as_deref())
}

fn run_eval(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("eval requires --checkpoint".into()))?;
    let (model_cfg, params) = checkpoint::load(path)?;
    let cfg = RunConfig {
        task: model_cfg.task,
        ..cfg
    };
    let (train_bags, test_bags) = load_bags(args, &cfg, model_cfg.d())?;
    // the synthetic mode scores its held-out split
    let bags = if args.synthetic { test_bags } else { train_bags };
    let metric = evaluate(&bags, &params, &model_cfg, model_cfg.task)?;
    let name = metric_name(model_cfg.task);
    let summary = serde_json::json!({
        "command": "eval",
        "task": model_cfg.task,
        "metric": name,
        "value": metric,
        "bags": bags.len(),
        "checkpoint": path.display().to_string(),
    });
    let mut text = String::new();
    writeln!(text, "# effective config\n{}", cfg.to_toml()).unwrap();
    writeln!(text, "{name}={metric:.4}\n").unwrap();
    writeln!(text, "# summary\n{summary}").unwrap();
    emit_report(&text, args.out.as_deref())
}

fn run_verify(suite: Suite) -> Result<()> {
    let report = run_suite(suite)?;
    print!("{report}");
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Error::InvalidConfig(format!("verify: {failed} of {} checks failed", report.checks.len())));
    }
    Ok(())
}

fn run_bench_command(args: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        landmarks: args.landmarks,
        head_dim: args.dim,
        repetitions: args.repetitions,
        exact_cap: args.exact_cap,
        seed: args.seed,
    };
    let rows = run_bench(&args.ns, &cfg)?;
    print!("{}", format_table(&rows));
    let records = format_records(&rows);
    match &args.out {
        Some(path) => checkpoint::write_atomic(path, records.as_bytes()),
        None => {
            print!("\n{records}");
            Ok(())
        }
    }
}

fn one_line(message: &str) -> String {
    message
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses `args` and runs the command. Returns the process exit code; every
/// failure prints exactly one line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("{}", first.trim());
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Verify { suite } => run_verify(*suite),
        Command::Bench(args) => run_bench_command(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            1
        }
    }
}
