use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acos_core::dataset::{load_corpus, CorpusFormat};
use acos_core::experiment::{report_log, sweep_csv, ExperimentConfig, Harness, PromptBuilder, Selection};
use acos_core::prompt::ShotOrder;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "acos",
    version,
    about = "Few-shot ACOS quadruple extraction with a chat-completion model"
)]
struct Cli {
    /// Log debug detail to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset file to canonical JSONL.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        /// canonical, acos-tsv or paraphrase.
        #[arg(long)]
        format: CorpusFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the prompt built for one test example.
    Render {
        /// JSONL holding the example to render.
        #[arg(long)]
        dataset: PathBuf,
        /// JSONL the shots are drawn from.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Order::First)]
        order: Order,
    },
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// One run per k; prints `k,precision,recall,f1`.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per selection method; prints `method,precision,recall,f1`.
    SweepSelect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Selection>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score a run log at IOU thresholds; prints `threshold,precision,recall,f1`.
    Score {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
    },
    /// Re-score a run log (exact match plus optional thresholds).
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    First,
    Last,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            tracing_subscriber::filter::LevelFilter::DEBUG
        } else {
            tracing_subscriber::filter::LevelFilter::WARN
        })
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Import { input, format, out } => {
            let corpus = load_corpus(&input, format)?;
            for w in corpus.warnings() {
                eprintln!("warning: {w}");
            }
            corpus.write_jsonl(&out)?;
            eprintln!(
                "wrote {} examples ({} categories) to {}",
                corpus.len(),
                corpus.categories().len(),
                out.display()
            );
        }
        Command::Render {
            dataset,
            train,
            id,
            k,
            order,
        } => {
            let train = load_corpus(&train, CorpusFormat::Canonical)?;
            let dataset = load_corpus(&dataset, CorpusFormat::Canonical)?;
            let Some(example) = dataset.get(&id) else {
                bail!("no example with id {id:?} in the dataset");
            };
            let mut builder = PromptBuilder::tfidf(&train, k)?;
            builder.shot_order = match order {
                Order::First => ShotOrder::MostSimilarFirst,
                Order::Last => ShotOrder::MostSimilarLast,
            };
            let (_, prompt) = builder.build(example)?;
            println!("{prompt}");
        }
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let outcome = Harness::new(cfg)?.run()?;
            let report_path = outcome.log_path.with_extension("report.json");
            write(&report_path, &outcome.report.to_json())?;
            print!("{}", outcome.report.to_table());
            eprintln!(
                "{} examples ({} new, {} failed); log {}, report {}",
                outcome.records.len(),
                outcome.processed,
                outcome.report.failed_examples,
                outcome.log_path.display(),
                report_path.display()
            );
        }
        Command::SweepK { config, values, out } => {
            let harness = Harness::new(load_config(&config)?)?;
            emit_csv(&sweep_csv("k", &harness.sweep_k(&values)?), out.as_deref())?;
        }
        Command::SweepSelect { config, methods, out } => {
            let harness = Harness::new(load_config(&config)?)?;
            emit_csv(
                &sweep_csv("method", &harness.sweep_selection(&methods)?),
                out.as_deref(),
            )?;
        }
        Command::Score { log, thresholds } => {
            let report = report_log(&log, &thresholds)?;
            print!("{}", acos_core::scoring::sweep_csv(&report.relaxed));
        }
        Command::Report {
            log,
            thresholds,
            format,
        } => {
            let report = report_log(&log, &thresholds)?;
            match format {
                ReportFormat::Table => print!("{}", report.to_table()),
                ReportFormat::Json => println!("{}", report.to_json()),
                ReportFormat::Csv => print!("{}", report.to_csv()),
            }
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn write(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn emit_csv(csv: &str, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        write(path, csv)?;
    }
    print!("{csv}");
    Ok(())
}
