//! `biasamp`: run bias-amplification experiments from JSON configs.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

mod measure;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use biasamp::data::{ingest, ingest_idx, write_dataset, write_raw, Class, Dataset, Group, ImageFormat, Split};
use biasamp::experiment::{
    aggregate, build_datasets, emit_report, probe_trial, run_trial_with_model, sweep, ExperimentError, RunStore,
    SweepConfig, SweepSummary, TrialConfig, SCHEMA_VERSION,
};
use biasamp::model::write_checkpoint;
use biasamp::TOOL_VERSION;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use measure::fixed;

#[derive(Debug, Parser)]
#[command(name = "biasamp", about = "Controlled bias-amplification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON experiment config (a trial for generate/train/probe, a sweep for sweep/report).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "BIASAMP_OUT", default_value = "results")]
    out: PathBuf,
    /// Maximum number of trials trained at once.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Idx,
    Cifar10,
    Cifar100,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert IDX or CIFAR binaries into a raw image cache.
    Ingest {
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long, value_enum)]
        split: SplitArg,
        /// IDX image file.
        #[arg(long, required_if_eq("format", "idx"))]
        images: Option<PathBuf>,
        /// IDX label file.
        #[arg(long, required_if_eq("format", "idx"))]
        labels: Option<PathBuf>,
        /// CIFAR batch files, in order.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Cache file to write.
        #[arg(long)]
        output: PathBuf,
    },
    /// Build the biased train/test datasets of a trial config and cache them.
    Generate,
    /// Run one trial; writes run.json and model.ckpt.
    Train,
    /// Score a JSONL file of prediction records.
    Measure { predictions: PathBuf },
    /// Run a sweep, then aggregate and report it.
    Sweep,
    /// Re-aggregate and report stored runs.
    Report {
        /// Run file to read instead of `<out>/<name>/runs.jsonl`.
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Report name when no sweep config is given.
        #[arg(long)]
        name: Option<String>,
    },
    /// Train a model to recognize the group label and print its accuracy.
    Probe,
}

/// A problem with the invocation or the configuration.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|cause| {
        cause.is::<UsageError>()
            || cause.downcast_ref::<ExperimentError>().is_some_and(ExperimentError::is_config_error)
    });
    if config {
        2
    } else {
        1
    }
}

fn read_config(path: Option<&Path>) -> Result<(PathBuf, String)> {
    let path = path.ok_or_else(|| usage("this command needs --config <file>"))?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((path.to_path_buf(), text))
}

fn load_trial(path: Option<&Path>) -> Result<TrialConfig> {
    let (path, text) = read_config(path)?;
    let cfg: TrialConfig = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn load_sweep(path: Option<&Path>) -> Result<SweepConfig> {
    let (path, text) = read_config(path)?;
    let cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn describe(ds: &Dataset) -> String {
    let counts = ds.cell_counts();
    let cell = |c: Class, g: Group| counts[c.index()][g.index()];
    format!(
        "{} examples (+1/a {}, +1/b {}, -1/a {}, -1/b {})",
        ds.len(),
        cell(Class::Positive, Group::A),
        cell(Class::Positive, Group::B),
        cell(Class::Negative, Group::A),
        cell(Class::Negative, Group::B)
    )
}

fn print_summary(summary: &SweepSummary) {
    println!("{} bias_amp mean ci_low ci_high n", summary.axis.name());
    for p in &summary.points {
        if let Some(s) = p.metric("bias_amp") {
            let bound = |v: Option<f64>| v.map(fixed).unwrap_or_else(|| "-".into());
            println!("{} {} {} {} {}", p.value, fixed(s.mean), bound(s.low()), bound(s.high()), s.n);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let config = g.config.as_deref();
    match cli.command {
        Command::Ingest { format, split, images, labels, inputs, output } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let raw = match format {
                FormatArg::Idx => {
                    let (images, labels) =
                        images.zip(labels).ok_or_else(|| usage("idx needs --images and --labels"))?;
                    ingest_idx(&images, &labels, split)?
                }
                FormatArg::Cifar10 | FormatArg::Cifar100 => {
                    if inputs.is_empty() {
                        return Err(usage("cifar formats need at least one --input"));
                    }
                    let format =
                        if matches!(format, FormatArg::Cifar10) { ImageFormat::Cifar10 } else { ImageFormat::Cifar100 };
                    ingest(&inputs, format, split)?
                }
            };
            write_raw(&output, &raw)?;
            let s = raw.shape;
            println!(
                "ingested {} images ({}x{}x{}), {} classes -> {}",
                raw.len(),
                s.channels,
                s.height,
                s.width,
                raw.class_count,
                output.display()
            );
        }
        Command::Generate => {
            let cfg = load_trial(config)?;
            let built = build_datasets(&cfg)?;
            std::fs::create_dir_all(&g.out).with_context(|| g.out.display().to_string())?;
            for (name, ds) in [("train.bamp", &built.train), ("test.bamp", &built.test)] {
                let path = g.out.join(name);
                write_dataset(&path, ds)?;
                println!("{}: {}", path.display(), describe(ds));
            }
            for w in &built.warnings {
                log::warn!("{w}");
            }
        }
        Command::Train => {
            let cfg = load_trial(config)?;
            let (record, model) = run_trial_with_model(&cfg)?;
            std::fs::create_dir_all(&g.out).with_context(|| g.out.display().to_string())?;
            std::fs::write(g.out.join("run.json"), serde_json::to_string_pretty(&record)? + "\n")?;
            write_checkpoint(&g.out.join("model.ckpt"), &model)?;
            let f = &record.final_metrics;
            println!("trial {}", record.trial_id);
            println!("epochs {}", record.effective_epochs);
            println!("bias_amp {}", fixed(f.bias_amp));
            println!("acc {}", fixed(f.acc));
            println!("ece {}", fixed(f.ece));
        }
        Command::Measure { predictions } => {
            let text = std::fs::read_to_string(&predictions).with_context(|| predictions.display().to_string())?;
            let records = measure::parse_records(&text, &predictions.display().to_string())?;
            print!("{}", measure::render(&records)?);
        }
        Command::Sweep => {
            let cfg = load_sweep(config)?;
            let concurrency =
                g.concurrency.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let store = RunStore::new(g.out.join(&cfg.name).join("runs.jsonl"));
            let outcome = sweep(&cfg, &store, concurrency)?;
            log::info!(
                "{}: ran {}, skipped {}, failed {}",
                cfg.name,
                outcome.ran,
                outcome.skipped,
                outcome.failures.len()
            );
            if !outcome.failures.is_empty() {
                eprintln!("{} trial(s) failed; see {}", outcome.failures.len(), store.failures_path().display());
            }
            let summary = aggregate(&cfg.name, &outcome.records)?;
            let files = emit_report(&summary, &g.out)?;
            print_summary(&summary);
            println!("report written to {}", files.dir.display());
        }
        Command::Report { runs, name } => {
            let (name, runs) = match (config, runs, name) {
                (Some(_), runs, _) => {
                    let cfg = load_sweep(config)?;
                    let runs = runs.unwrap_or_else(|| g.out.join(&cfg.name).join("runs.jsonl"));
                    (cfg.name, runs)
                }
                (None, Some(runs), name) => {
                    let name = name
                        .or_else(|| runs.file_stem().map(|s| s.to_string_lossy().into_owned()))
                        .ok_or_else(|| usage("report needs --name"))?;
                    (name, runs)
                }
                (None, None, _) => return Err(usage("report needs --config or --runs")),
            };
            let records = RunStore::new(&runs).load()?;
            if records.is_empty() {
                anyhow::bail!("{}: no completed runs", runs.display());
            }
            let summary = aggregate(&name, &records)?;
            let files = emit_report(&summary, &g.out)?;
            print_summary(&summary);
            println!("report written to {}", files.dir.display());
        }
        Command::Probe => {
            let cfg = load_trial(config)?;
            println!("probe_accuracy {}", fixed(probe_trial(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let version = format!("{TOOL_VERSION} (run schema {SCHEMA_VERSION})");
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
