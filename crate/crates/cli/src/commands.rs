use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use emojiscribe::artifact::{self, BoundaryBundle, EmojiBundle, ModelMeta};
use emojiscribe::boundary::{sweep_csv, window_sweep, BoundaryConfig, BoundaryModel};
use emojiscribe::dataset::{
    class_stats, corpus_samples, label_corpus, load_word_vectors, read_corpus, read_samples,
    write_samples, ClassStats, EvalSequence, Sample, Vocabulary,
};
use emojiscribe::emoji::{
    encode_examples, normalize_examples, read_examples, EmojiLabelSet, EmojiModel,
};
use emojiscribe::pipeline::{
    self, format_annotation, overall_accuracy, read_annotations, Pipeline,
};
use emojiscribe::tagger::TriggerLexicon;
use emojiscribe::textnorm::Normalizer;
use emojiscribe::Error;

use crate::config::RunConfig;

pub const SAMPLES_FILE: &str = "samples.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration values.
    Usage(String),
    /// Unreadable data or models, or failures inside the library.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn usage<T>(r: Result<T, String>) -> CliResult<T> {
    r.map_err(CliError::Usage)
}

fn with_path<T>(path: &Path, r: emojiscribe::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes `text` to `out` when given, stdout otherwise.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            s.flush()?;
        }
    }
    Ok(())
}

fn require_out(out: Option<&Path>) -> CliResult<&Path> {
    out.ok_or_else(|| CliError::Usage("--out is required for this command".into()))
}

fn labeled(path: &Path) -> CliResult<Vec<emojiscribe::dataset::LabeledTokenSeq>> {
    let docs = with_path(path, read_corpus(path))?;
    let l = label_corpus(&docs, &TriggerLexicon::default(), &Normalizer::default());
    if l.is_empty() {
        return Err(CliError::Data(format!(
            "{}: corpus is empty",
            path.display()
        )));
    }
    Ok(l)
}

fn corpus_vocab(
    docs: &[emojiscribe::dataset::LabeledTokenSeq],
    size: usize,
) -> CliResult<Vocabulary> {
    Ok(Vocabulary::build(
        docs.iter()
            .flat_map(|l| l.tokens.tokens.iter().map(|t| t.surface.as_str())),
        size,
    )?)
}

fn labels(path: Option<&Path>) -> CliResult<EmojiLabelSet> {
    match path {
        Some(p) => with_path(p, EmojiLabelSet::load(p)),
        None => Ok(EmojiLabelSet::default()),
    }
}

fn load_pipeline(cfg: &RunConfig, boundary: &Path, emoji: &Path) -> CliResult<Pipeline> {
    let config = usage(cfg.pipeline())?;
    let b = with_path(boundary, artifact::load_boundary(boundary))?;
    let e = with_path(emoji, artifact::load_emoji(emoji))?;
    Ok(Pipeline::new(config)?.with_boundary(b)?.with_emoji(e))
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct DataStats {
    window: usize,
    offset: usize,
    documents: usize,
    stats: ClassStats,
}

pub fn build_data(cfg: &RunConfig, corpus: &Path, out: Option<&Path>) -> CliResult {
    let out = require_out(out)?;
    let config = usage(cfg.boundary())?;
    let docs = labeled(corpus)?;
    let vocab = corpus_vocab(&docs, config.vocab_size)?;
    let spec = config.window_spec();
    let samples = corpus_samples(&docs, &vocab, spec);
    let stats = class_stats(&samples);
    std::fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join(SAMPLES_FILE))?);
    write_samples(&mut w, spec, &samples)?;
    w.flush()?;
    vocab.save(out.join(VOCAB_FILE))?;
    let meta = DataStats {
        window: spec.width,
        offset: spec.offset,
        documents: docs.len(),
        stats,
    };
    std::fs::write(
        out.join(STATS_FILE),
        serde_json::to_string_pretty(&meta).map_err(|e| CliError::Data(e.to_string()))? + "\n",
    )?;
    log::info!(
        "{} documents, {} samples, vocab {}",
        docs.len(),
        samples.len(),
        vocab.len()
    );
    emit(
        None,
        &format!(
            "documents,samples,positives,negatives\n{},{},{},{}\n",
            docs.len(),
            samples.len(),
            stats.n,
            stats.m
        ),
    )
}

/// Samples and vocabulary from a `build-data` directory or a raw corpus.
fn boundary_data(data: &Path, config: &BoundaryConfig) -> CliResult<(Vec<Sample>, Vocabulary)> {
    if data.is_dir() {
        let path = data.join(SAMPLES_FILE);
        let (spec, samples) = with_path(
            &path,
            File::open(&path)
                .map_err(Error::from)
                .and_then(read_samples),
        )?;
        if spec != config.window_spec() {
            return Err(CliError::Data(format!(
                "{} holds windows {}/{}, configuration asks for {}/{}",
                path.display(),
                spec.width,
                spec.offset,
                config.window,
                config.offset
            )));
        }
        let vpath = data.join(VOCAB_FILE);
        Ok((samples, with_path(&vpath, Vocabulary::load(&vpath))?))
    } else {
        let docs = labeled(data)?;
        let vocab = corpus_vocab(&docs, config.vocab_size)?;
        Ok((corpus_samples(&docs, &vocab, config.window_spec()), vocab))
    }
}

pub fn train_boundary(
    cfg: &RunConfig,
    data: &Path,
    embeddings: Option<&Path>,
    out: Option<&Path>,
) -> CliResult {
    let out = require_out(out)?;
    let (config, hyper) = (usage(cfg.boundary())?, usage(cfg.train())?);
    let (samples, vocab) = boundary_data(data, &config)?;
    if vocab.len() > config.vocab_size {
        return Err(CliError::Data(format!(
            "vocabulary has {} words, model holds {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    let emb_dim = config.emb_dim;
    let mut model = BoundaryModel::build(config, hyper.seed)?;
    if let Some(p) = embeddings {
        let rows = with_path(p, load_word_vectors(p, &vocab, emb_dim))?;
        let n = model.load_embeddings(&rows)?;
        log::info!("{n} of {} words have pre-trained vectors", vocab.len());
    }
    let history = model.train(&samples, &class_stats(&samples), &hyper)?;
    artifact::save_boundary(out, &BoundaryBundle { model, vocab }, false)?;
    emit(None, &history.to_csv())
}

pub fn train_emoji(
    cfg: &RunConfig,
    data: &Path,
    label_file: Option<&Path>,
    out: Option<&Path>,
) -> CliResult {
    let out = require_out(out)?;
    let (config, hyper) = (usage(cfg.emoji())?, usage(cfg.train())?);
    let labels = labels(label_file)?;
    let examples = with_path(
        data,
        File::open(data)
            .map_err(Error::from)
            .and_then(|f| read_examples(BufReader::new(f))),
    )?;
    if let Some(bad) = examples.iter().find(|e| e.label >= labels.len()) {
        return Err(CliError::Data(format!("label {} out of range", bad.label)));
    }
    let seqs = normalize_examples(&examples, &Normalizer::default());
    let vocab = Vocabulary::build(
        seqs.iter()
            .flat_map(|(s, _)| s.tokens.iter().map(|t| t.surface.as_str())),
        config.vocab_size,
    )?;
    let mut model = EmojiModel::build(config, hyper.seed)?;
    let encoded = encode_examples(&model, &seqs, &vocab);
    let history = model.train(&encoded, &hyper)?;
    artifact::save_emoji(
        out,
        &EmojiBundle {
            model,
            vocab,
            labels,
        },
        false,
    )?;
    emit(None, &history.to_csv())
}

pub fn eval_boundary(cfg: &RunConfig, model: &Path, data: &Path, out: Option<&Path>) -> CliResult {
    let mut b = with_path(model, artifact::load_boundary(model))?;
    if cfg.is_set("threshold") {
        b.model.set_threshold(usage(cfg.get("threshold"))?)?;
    }
    let eval: Vec<EvalSequence> = labeled(data)?
        .iter()
        .map(EvalSequence::from_labeled)
        .collect();
    let metrics = b.model.evaluate(&eval, &b.vocab)?;
    emit(out, &metrics.to_csv())
}

pub fn eval_emoji(model: &Path, data: &Path, out: Option<&Path>) -> CliResult {
    let e = with_path(model, artifact::load_emoji(model))?;
    let examples = with_path(
        data,
        File::open(data)
            .map_err(Error::from)
            .and_then(|f| read_examples(BufReader::new(f))),
    )?;
    let seqs = normalize_examples(&examples, &Normalizer::default());
    let metrics = e
        .model
        .evaluate(&encode_examples(&e.model, &seqs, &e.vocab))?;
    emit(out, &metrics.to_csv())
}

pub struct PipelineEval<'a> {
    pub gold: &'a Path,
    pub pred: Option<&'a Path>,
    pub boundary: Option<&'a Path>,
    pub emoji: Option<&'a Path>,
    pub labels: Option<&'a Path>,
}

pub fn eval_pipeline(cfg: &RunConfig, args: PipelineEval<'_>, out: Option<&Path>) -> CliResult {
    let gold = with_path(
        args.gold,
        File::open(args.gold)
            .map_err(Error::from)
            .and_then(|f| read_annotations(BufReader::new(f))),
    )?;
    let (pred, labels) = match (args.pred, args.boundary, args.emoji) {
        (Some(p), None, None) => (
            with_path(
                p,
                File::open(p)
                    .map_err(Error::from)
                    .and_then(|f| read_annotations(BufReader::new(f))),
            )?,
            labels(args.labels)?,
        ),
        (None, Some(b), Some(e)) => {
            let p = load_pipeline(cfg, b, e)?;
            let pred = gold
                .iter()
                .map(|g| p.annotate(&g.text).map(|a| a.to_annotation()))
                .collect::<Result<Vec<_>, _>>()?;
            (pred, p.emoji()?.labels.clone())
        }
        _ => {
            return Err(CliError::Usage(
                "eval-pipeline needs either --pred or both --boundary and --emoji".into(),
            ))
        }
    };
    let acc = overall_accuracy(&pred, &gold, &labels)?;
    emit(
        out,
        &format!(
            "metric,value\noverall_accuracy,{acc:.4}\nmessages,{}\n",
            gold.len()
        ),
    )
}

pub struct AnnotateArgs<'a> {
    pub boundary: &'a Path,
    pub emoji: &'a Path,
    pub text: Option<&'a str>,
    /// Emit `text<TAB>pos:emoji,...` lines instead of rendered text.
    pub tsv: bool,
}

pub fn annotate(cfg: &RunConfig, args: AnnotateArgs<'_>, out: Option<&Path>) -> CliResult {
    let p = load_pipeline(cfg, args.boundary, args.emoji)?;
    let texts: Vec<String> = match args.text {
        Some(t) if t.trim().is_empty() => Vec::new(),
        Some(t) => vec![t.to_string()],
        None => std::io::stdin().lock().lines().collect::<Result<_, _>>()?,
    };
    let mut s = String::new();
    for t in &texts {
        let a = p.annotate(t)?;
        if args.tsv {
            s.push_str(&format_annotation(&a.to_annotation()));
        } else {
            s.push_str(&pipeline::render(&a));
        }
        s.push('\n');
    }
    emit(out, &s)
}

pub fn sweep_window(cfg: &RunConfig, data: &Path, heldout: &Path, out: Option<&Path>) -> CliResult {
    let (base, hyper, sizes) = (
        usage(cfg.boundary())?,
        usage(cfg.train())?,
        usage(cfg.sizes())?,
    );
    let (train, held) = (labeled(data)?, labeled(heldout)?);
    let vocab = corpus_vocab(&train, base.vocab_size)?;
    let rows = window_sweep(&train, &held, &vocab, &sizes, &base, &hyper)?;
    emit(out, &sweep_csv(&rows))
}

pub fn bench(
    cfg: &RunConfig,
    boundary: &Path,
    emoji: &Path,
    texts: &Path,
    out: Option<&Path>,
) -> CliResult {
    let (warmup, iterations) = usage(cfg.bench_iterations())?;
    let p = load_pipeline(cfg, boundary, emoji)?;
    let texts = with_path(texts, read_corpus(texts))?;
    let report = pipeline::bench(&p, &texts, warmup, iterations)?;
    emit(out, &report.to_csv())
}

pub fn quantize(input: &Path, out: Option<&Path>) -> CliResult {
    let out = require_out(out)?;
    with_path(input, artifact::quantize_file(input, out))?;
    let size = std::fs::metadata(out)?.len();
    log::info!("wrote {} ({size} bytes)", out.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Boundary,
    Emoji,
}

pub fn params(cfg: &RunConfig, model: Option<&Path>, kind: ModelKind) -> CliResult {
    let count = match model {
        Some(path) => {
            let (meta, weights) = with_path(path, artifact::load(path))?;
            match meta {
                ModelMeta::Boundary { config, .. } => {
                    BoundaryModel::from_store(config, &weights.store)?.param_count()
                }
                ModelMeta::Emoji { config, .. } => {
                    EmojiModel::from_store(config, &weights.store)?.param_count()
                }
            }
        }
        None => match kind {
            ModelKind::Boundary => BoundaryModel::build(usage(cfg.boundary())?, 0)?.param_count(),
            ModelKind::Emoji => EmojiModel::build(usage(cfg.emoji())?, 0)?.param_count(),
        },
    };
    emit(None, &format!("{count}\n"))
}
