//! `emojiscribe` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or model
//! error. Results go to stdout (or `--out`), diagnostics to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AnnotateArgs, CliError, CliResult, ModelKind, PipelineEval};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "emojiscribe",
    version,
    about = "Insert emoji into dictated text"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; stdout when omitted for text results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a configuration key, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label a corpus and write the samples cache, vocabulary and stats.
    BuildData {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the boundary model from a build-data directory or a corpus.
    TrainBoundary {
        #[arg(long)]
        data: PathBuf,
        /// `word v1 .. vd` text file used to seed the embedding table.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train the emoji model on `label<TAB>text` lines.
    TrainEmoji {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Boundary precision, recall, F1 and accuracy on a corpus.
    EvalBoundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Emoji top-1, top-5 and weighted F1.
    EvalEmoji {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Strict overall accuracy against a gold annotation file.
    EvalPipeline {
        #[arg(long)]
        gold: PathBuf,
        /// Score this prediction file instead of running the models.
        #[arg(long, conflicts_with_all = ["boundary", "emoji"])]
        pred: Option<PathBuf>,
        #[arg(long)]
        boundary: Option<PathBuf>,
        #[arg(long)]
        emoji: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Annotate `--text` or each stdin line.
    Annotate {
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        emoji: PathBuf,
        #[arg(long)]
        text: Option<String>,
        /// Print gold-file lines instead of rendered text.
        #[arg(long)]
        tsv: bool,
    },
    /// Held-out accuracy per window width.
    SweepWindow {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        heldout: PathBuf,
        /// Comma-separated widths; overrides the `sizes` key.
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Per-word latency of each stage.
    Bench {
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        emoji: PathBuf,
        #[arg(long)]
        texts: PathBuf,
    },
    /// Rewrite a model with int8 weights.
    Quantize {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the parameter count of a model file or a configured model.
    Params {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "emoji")]
        kind: ModelKind,
    },
}

fn resolve(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    for pair in &common.overrides {
        cfg.set_pair(pair).map_err(CliError::Usage)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())
            .map_err(CliError::Usage)?;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = resolve(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::BuildData { corpus } => commands::build_data(&cfg, corpus, out),
        Command::TrainBoundary { data, embeddings } => {
            commands::train_boundary(&cfg, data, embeddings.as_deref(), out)
        }
        Command::TrainEmoji { data, labels } => {
            commands::train_emoji(&cfg, data, labels.as_deref(), out)
        }
        Command::EvalBoundary { model, data } => commands::eval_boundary(&cfg, model, data, out),
        Command::EvalEmoji { model, data } => commands::eval_emoji(model, data, out),
        Command::EvalPipeline {
            gold,
            pred,
            boundary,
            emoji,
            labels,
        } => commands::eval_pipeline(
            &cfg,
            PipelineEval {
                gold,
                pred: pred.as_deref(),
                boundary: boundary.as_deref(),
                emoji: emoji.as_deref(),
                labels: labels.as_deref(),
            },
            out,
        ),
        Command::Annotate {
            boundary,
            emoji,
            text,
            tsv,
        } => commands::annotate(
            &cfg,
            AnnotateArgs {
                boundary,
                emoji,
                text: text.as_deref(),
                tsv: *tsv,
            },
            out,
        ),
        Command::SweepWindow {
            data,
            heldout,
            sizes,
        } => {
            if let Some(s) = sizes {
                cfg.set("sizes", s).map_err(CliError::Usage)?;
            }
            commands::sweep_window(&cfg, data, heldout, out)
        }
        Command::Bench {
            boundary,
            emoji,
            texts,
        } => commands::bench(&cfg, boundary, emoji, texts, out),
        Command::Quantize { input } => commands::quantize(input, out),
        Command::Params { model, kind } => commands::params(&cfg, model.as_deref(), *kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
