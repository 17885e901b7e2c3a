//! End-to-end annotation: normalize, find boundaries, split into sub-parts,
//! pick one emoji per sub-part, render.

use std::fmt::Write as _;
use std::io::BufRead;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifact::{BoundaryBundle, EmojiBundle};
use crate::emoji::EmojiLabelSet;
use crate::tagger::BoundarySet;
use crate::textnorm::{Normalizer, TokenSeq};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Minimum top-1 probability for an emoji to be inserted.
    pub emoji_threshold: f64,
    /// Overrides the boundary model's own threshold when set.
    pub boundary_threshold: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            emoji_threshold: 0.3,
            boundary_threshold: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.emoji_threshold) {
            return Err(Error::InvalidConfig(format!(
                "emoji threshold {} outside [0, 1]",
                self.emoji_threshold
            )));
        }
        if let Some(t) = self.boundary_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "boundary threshold {t} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    /// Index of the token the emoji follows.
    pub after: usize,
    pub emoji: String,
    pub label: usize,
    pub probability: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedText {
    pub original: String,
    pub tokens: TokenSeq,
    /// Strictly increasing `after` positions.
    pub insertions: Vec<Insertion>,
}

impl AnnotatedText {
    pub fn to_annotation(&self) -> Annotation {
        Annotation {
            text: self.original.clone(),
            insertions: self
                .insertions
                .iter()
                .map(|i| (i.after, i.emoji.clone()))
                .collect(),
        }
    }
}

/// Tokens separated by single spaces, each inserted emoji following its
/// token as a separate item.
pub fn render(a: &AnnotatedText) -> String {
    let mut out = String::new();
    let mut ins = a.insertions.iter().peekable();
    for (i, t) in a.tokens.tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.surface);
        while let Some(e) = ins.next_if(|e| e.after == i) {
            out.push(' ');
            out.push_str(&e.emoji);
        }
    }
    out
}

/// Sub-parts as inclusive `(start, end)` token ranges. The last token
/// always closes a sub-part.
pub fn subparts(len: usize, boundaries: &BoundarySet) -> Vec<(usize, usize)> {
    if len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    for b in boundaries.iter().filter(|&b| b < len - 1).chain([len - 1]) {
        out.push((start, b));
        start = b + 1;
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct Pipeline {
    normalizer: Normalizer,
    boundary: Option<BoundaryBundle>,
    emoji: Option<EmojiBundle>,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ..Self::default()
        })
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    pub fn with_boundary(mut self, mut bundle: BoundaryBundle) -> Result<Self> {
        if let Some(t) = self.config.boundary_threshold {
            bundle.model.set_threshold(t)?;
        }
        self.boundary = Some(bundle);
        Ok(self)
    }

    pub fn with_emoji(mut self, bundle: EmojiBundle) -> Self {
        self.emoji = Some(bundle);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn boundary(&self) -> Result<&BoundaryBundle> {
        self.boundary
            .as_ref()
            .ok_or(Error::ModelNotLoaded("boundary"))
    }

    pub fn emoji(&self) -> Result<&EmojiBundle> {
        self.emoji.as_ref().ok_or(Error::ModelNotLoaded("emoji"))
    }

    pub fn annotate(&self, text: &str) -> Result<AnnotatedText> {
        let (b, e) = (self.boundary()?, self.emoji()?);
        let tokens = self.normalizer.apply(text);
        let predicted = b.model.predict_boundaries(&tokens, &b.vocab);
        let mut insertions = Vec::new();
        for (start, end) in subparts(tokens.len(), &predicted) {
            let part = TokenSeq {
                tokens: tokens.tokens[start..=end].to_vec(),
                original: tokens.original.clone(),
            };
            let (label, p) = e.model.predict(&part, &e.vocab)?.best();
            if p as f64 >= self.config.emoji_threshold {
                let emoji = e
                    .labels
                    .get(label)
                    .map_or_else(String::new, |l| l.glyph.clone());
                insertions.push(Insertion {
                    after: end,
                    emoji,
                    label,
                    probability: p,
                });
            }
        }
        Ok(AnnotatedText {
            original: text.to_string(),
            tokens,
            insertions,
        })
    }
}

/// A text with `(after_token_index, emoji)` pairs, as stored in gold and
/// prediction files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub text: String,
    pub insertions: Vec<(usize, String)>,
}

/// Parses `text<TAB>pos:emoji[,pos:emoji...]`; the annotation part may be
/// empty.
pub fn parse_annotation(line: &str) -> std::result::Result<Annotation, String> {
    let (text, ann) = line.split_once('\t').ok_or("missing tab")?;
    let mut insertions: Vec<(usize, String)> = Vec::new();
    for item in ann.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (pos, emoji) = item
            .split_once(':')
            .ok_or_else(|| format!("`{item}` is not pos:emoji"))?;
        let pos: usize = pos
            .trim()
            .parse()
            .map_err(|e| format!("bad position `{pos}`: {e}"))?;
        if insertions.last().is_some_and(|(p, _)| *p >= pos) {
            return Err("positions must be strictly increasing".into());
        }
        let emoji = emoji.trim();
        if emoji.is_empty() {
            return Err(format!("empty emoji at position {pos}"));
        }
        insertions.push((pos, emoji.to_string()));
    }
    Ok(Annotation {
        text: text.to_string(),
        insertions,
    })
}

pub fn read_annotations<R: BufRead>(r: R) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_annotation(&line).map_err(|msg| Error::Parse {
            what: "annotation file",
            line: n + 1,
            msg,
        })?);
    }
    Ok(out)
}

pub fn format_annotation(a: &Annotation) -> String {
    let ann: Vec<String> = a
        .insertions
        .iter()
        .map(|(p, e)| format!("{p}:{e}"))
        .collect();
    format!("{}\t{}", a.text, ann.join(","))
}

/// Percent of messages where every gold insertion is matched at the same
/// position by an emoji of the same category and nothing extra was
/// inserted.
pub fn overall_accuracy(
    pred: &[Annotation],
    gold: &[Annotation],
    labels: &EmojiLabelSet,
) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    if pred.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} gold messages",
            pred.len(),
            gold.len()
        )));
    }
    let mut correct = 0usize;
    for (p, g) in pred.iter().zip(gold) {
        let mut ok = p.insertions.len() == g.insertions.len();
        for (pos, emoji) in &g.insertions {
            let want = labels.category_of_glyph(emoji).ok_or_else(|| {
                Error::InvalidConfig(format!("gold emoji {emoji} is not a known label"))
            })?;
            let got = p
                .insertions
                .iter()
                .find(|(q, _)| q == pos)
                .and_then(|(_, e)| labels.category_of_glyph(e));
            ok &= got == Some(want);
        }
        correct += usize::from(ok);
    }
    Ok(100.0 * correct as f64 / gold.len() as f64)
}

/// Per-word latency summary in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
}

impl LatencyStats {
    /// Nearest-rank p99; median averages the middle pair.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        let rank = (0.99 * n as f64).ceil() as usize;
        Ok(Self {
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            p99: s[rank.clamp(1, n) - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub boundary: LatencyStats,
    pub emoji: LatencyStats,
    pub pipeline: LatencyStats,
    pub iterations: usize,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,metric,value_ms\n");
        for (stage, s) in [
            ("boundary", &self.boundary),
            ("emoji", &self.emoji),
            ("pipeline", &self.pipeline),
        ] {
            for (metric, v) in [("mean", s.mean), ("median", s.median), ("p99", s.p99)] {
                let _ = writeln!(out, "{stage},{metric},{v:.6}");
            }
        }
        out
    }
}

pub const BENCH_WARMUP: usize = 100;
pub const BENCH_ITERATIONS: usize = 1000;

/// Times boundary detection, emoji prediction over the whole text, and full
/// annotation, cycling through `texts`. Each stage includes normalization.
/// Single-threaded.
pub fn bench(
    pipeline: &Pipeline,
    texts: &[String],
    warmup: usize,
    iterations: usize,
) -> Result<BenchReport> {
    let (b, e) = (pipeline.boundary()?, pipeline.emoji()?);
    let norm = pipeline.normalizer();
    let texts: Vec<(&str, usize)> = texts
        .iter()
        .map(|t| (t.as_str(), norm.apply(t).len()))
        .filter(|&(_, n)| n > 0)
        .collect();
    if texts.is_empty() || iterations == 0 {
        return Err(Error::EmptyEvalSet);
    }
    let mut samples = [Vec::new(), Vec::new(), Vec::new()];
    for it in 0..warmup + iterations {
        let (text, words) = texts[it % texts.len()];
        let t0 = Instant::now();
        let s = norm.apply(text);
        std::hint::black_box(b.model.predict_boundaries(&s, &b.vocab));
        let t1 = Instant::now();
        let s = norm.apply(text);
        std::hint::black_box(e.model.predict(&s, &e.vocab)?);
        let t2 = Instant::now();
        std::hint::black_box(pipeline.annotate(text)?);
        let t3 = Instant::now();
        if it >= warmup {
            let per_word = |d: std::time::Duration| d.as_secs_f64() * 1e3 / words as f64;
            samples[0].push(per_word(t1 - t0));
            samples[1].push(per_word(t2 - t1));
            samples[2].push(per_word(t3 - t2));
        }
    }
    Ok(BenchReport {
        boundary: LatencyStats::from_samples(&samples[0])?,
        emoji: LatencyStats::from_samples(&samples[1])?,
        pipeline: LatencyStats::from_samples(&samples[2])?,
        iterations,
    })
}
