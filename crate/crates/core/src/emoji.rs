//! Emoji classification for a single sub-part.
//!
//! The main model fuses a word embedding with character-CNN features through
//! a learned gate, runs two stacked LSTMs, pools the concatenation of all
//! three per-step vectors with temporal attention, and scores the 64 labels.
//! Three smaller baselines share the same training and evaluation code.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Vocabulary;
use crate::nn::{
    axpy, char_cnn_backward, char_cnn_forward, cross_entropy, dense_backward, dense_forward,
    feature_attention_backward, feature_attention_forward, lstm_backward, lstm_forward, softmax,
    temporal_attention_backward, temporal_attention_forward, Adam, Batcher, CharCnnCache,
    CharCnnParams, Direction, EpochStats, FeatureAttentionCache, FeatureAttentionParams, History,
    Init, LstmCache, LstmParams, ParamId, ParamStore, Scalar, TemporalAttentionCache,
    TemporalAttentionParams, Tensor, Tensors, TrainConfig,
};
use crate::textnorm::{Normalizer, TokenSeq};
use crate::{Error, Result};

const DEFAULT_LABELS: &str = include_str!("../data/emoji_labels.tsv");

pub const NUM_LABELS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmojiLabel {
    pub glyph: String,
    pub category: String,
    pub name: String,
}

/// Ordered label inventory; a label's index is its class id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmojiLabelSet {
    labels: Vec<EmojiLabel>,
}

/// Drops variation selectors so `❤️` and `❤` compare equal.
fn bare_glyph(s: &str) -> String {
    s.chars()
        .filter(|&c| c != '\u{fe0f}' && c != '\u{fe0e}')
        .collect()
}

impl Default for EmojiLabelSet {
    fn default() -> Self {
        Self::parse(DEFAULT_LABELS).expect("bundled label file is valid")
    }
}

impl EmojiLabelSet {
    /// Parses `emoji<TAB>category<TAB>name` lines; exactly 64 are required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels: Vec<EmojiLabel> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                what: "emoji labels",
                line: n + 1,
                msg,
            };
            let mut parts = line.split('\t');
            let (Some(glyph), Some(category), Some(name), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected three tab-separated fields".into()));
            };
            let glyph = bare_glyph(glyph.trim());
            let category = category.trim().to_string();
            if glyph.is_empty() || category.is_empty() {
                return Err(err("empty emoji or category".into()));
            }
            if labels.iter().any(|l| l.glyph == glyph) {
                return Err(err(format!("duplicate emoji {glyph}")));
            }
            labels.push(EmojiLabel {
                glyph,
                category,
                name: name.trim().to_string(),
            });
        }
        if labels.len() != NUM_LABELS {
            return Err(Error::Parse {
                what: "emoji labels",
                line: 0,
                msg: format!("expected {NUM_LABELS} labels, found {}", labels.len()),
            });
        }
        Ok(Self { labels })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&EmojiLabel> {
        self.labels.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EmojiLabel> {
        self.labels.iter()
    }

    pub fn index_of(&self, glyph: &str) -> Option<usize> {
        let g = bare_glyph(glyph);
        self.labels.iter().position(|l| l.glyph == g)
    }

    pub fn category_of_glyph(&self, glyph: &str) -> Option<&str> {
        self.index_of(glyph)
            .map(|i| self.labels[i].category.as_str())
    }

    /// Distinct categories in first-seen order.
    pub fn categories(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for l in &self.labels {
            if !out.contains(&l.category.as_str()) {
                out.push(&l.category);
            }
        }
        out
    }
}

pub const PAD_CHAR: u32 = 0;
pub const UNK_CHAR: u32 = 1;
/// PAD, UNK and `a`..`z`.
pub const NUM_CHARS: usize = 28;

pub fn char_id(c: char) -> u32 {
    if c.is_ascii_lowercase() {
        2 + (c as u32 - 'a' as u32)
    } else {
        UNK_CHAR
    }
}

/// Character ids of a word, truncated to `max_len`.
pub fn encode_chars(word: &str, max_len: usize) -> Vec<u32> {
    let ids: Vec<u32> = word.chars().take(max_len).map(char_id).collect();
    if ids.is_empty() {
        vec![UNK_CHAR]
    } else {
        ids
    }
}

/// Model-ready view of one sub-part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedText {
    pub words: Vec<u32>,
    pub chars: Vec<Vec<u32>>,
}

impl EncodedText {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmojiArch {
    Aca,
    Bow,
    LstmWord,
    LstmChar,
}

impl FromStr for EmojiArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "aca" => Ok(Self::Aca),
            "bow" => Ok(Self::Bow),
            "lstm_word" => Ok(Self::LstmWord),
            "lstm_char" => Ok(Self::LstmChar),
            other => Err(Error::InvalidConfig(format!(
                "unknown emoji architecture `{other}`"
            ))),
        }
    }
}

impl fmt::Display for EmojiArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aca => "aca",
            Self::Bow => "bow",
            Self::LstmWord => "lstm_word",
            Self::LstmChar => "lstm_char",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmojiConfig {
    pub arch: EmojiArch,
    pub vocab_size: usize,
    pub word_emb: usize,
    pub char_emb: usize,
    /// `(width, count)` filter groups.
    pub char_kernels: Vec<(usize, usize)>,
    pub lstm1: usize,
    pub lstm2: usize,
    pub attn_dim: usize,
    pub classes: usize,
    pub max_word_len: usize,
}

impl Default for EmojiConfig {
    fn default() -> Self {
        Self {
            arch: EmojiArch::Aca,
            vocab_size: 60_000,
            word_emb: 16,
            char_emb: 8,
            char_kernels: vec![(1, 5), (2, 10), (3, 15)],
            lstm1: 128,
            lstm2: 128,
            attn_dim: 128,
            classes: NUM_LABELS,
            max_word_len: 24,
        }
    }
}

impl EmojiConfig {
    pub fn char_dim(&self) -> usize {
        self.char_kernels.iter().map(|k| k.1).sum()
    }

    /// Width of the per-token vector fed to the first LSTM.
    pub fn fused_dim(&self) -> usize {
        match self.arch {
            EmojiArch::Aca => self.word_emb + self.char_dim(),
            EmojiArch::LstmWord => self.word_emb,
            EmojiArch::LstmChar => self.char_dim(),
            EmojiArch::Bow => 0,
        }
    }

    /// Width of the per-step vector seen by temporal attention.
    pub fn concat_dim(&self) -> usize {
        match self.arch {
            EmojiArch::Aca => self.fused_dim() + self.lstm1 + self.lstm2,
            EmojiArch::LstmWord | EmojiArch::LstmChar => self.lstm1,
            EmojiArch::Bow => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must cover PAD and UNK");
        }
        if self.classes < 2 {
            return bad("need at least two classes");
        }
        if self.arch == EmojiArch::Bow {
            return Ok(());
        }
        if self.lstm1 == 0 || self.attn_dim == 0 || (self.arch == EmojiArch::Aca && self.lstm2 == 0)
        {
            return bad("recurrent and attention sizes must be positive");
        }
        if matches!(self.arch, EmojiArch::Aca | EmojiArch::LstmWord) && self.word_emb == 0 {
            return bad("word_emb must be positive");
        }
        if matches!(self.arch, EmojiArch::Aca | EmojiArch::LstmChar) {
            if self.char_emb == 0 || self.max_word_len == 0 || self.char_kernels.is_empty() {
                return bad("character path needs char_emb, max_word_len and kernels");
            }
            if self.char_kernels.iter().any(|&(w, c)| w == 0 || c == 0) {
                return bad("char kernel widths and counts must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum Net {
    Bow {
        w: ParamId,
        b: ParamId,
    },
    Seq {
        word: Option<ParamId>,
        chars: Option<CharCnnParams>,
        fa: Option<FeatureAttentionParams>,
        lstm1: LstmParams,
        lstm2: Option<LstmParams>,
        ta: TemporalAttentionParams,
        out_w: ParamId,
        out_b: ParamId,
    },
}

struct SeqCache<F> {
    chars: Vec<CharCnnCache<F>>,
    fa: Vec<FeatureAttentionCache<F>>,
    c1: LstmCache<F>,
    c2: Option<LstmCache<F>>,
    ta: TemporalAttentionCache<F>,
    pooled: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct EmojiModel {
    config: EmojiConfig,
    net: Net,
    pub store: ParamStore<f32>,
}

impl EmojiModel {
    pub fn build(config: EmojiConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let mut s = ParamStore::new();
        let c = &config;
        let net = if c.arch == EmojiArch::Bow {
            let w = s.add(
                "emoji.bow.w",
                init.glorot(&[c.vocab_size, c.classes], c.vocab_size, c.classes),
            )?;
            let b = s.add("emoji.bow.b", Tensor::zeros(&[c.classes]))?;
            Net::Bow { w, b }
        } else {
            let use_word = matches!(c.arch, EmojiArch::Aca | EmojiArch::LstmWord);
            let use_chars = matches!(c.arch, EmojiArch::Aca | EmojiArch::LstmChar);
            let word = if use_word {
                Some(s.add(
                    "emoji.word_emb",
                    init.uniform(&[c.vocab_size, c.word_emb], 0.05),
                )?)
            } else {
                None
            };
            let chars = if use_chars {
                Some(CharCnnParams::register(
                    &mut s,
                    "emoji.chars",
                    NUM_CHARS,
                    c.char_emb,
                    &c.char_kernels,
                    &mut init,
                )?)
            } else {
                None
            };
            let fa = if c.arch == EmojiArch::Aca {
                Some(FeatureAttentionParams::register(
                    &mut s,
                    "emoji.fa",
                    c.word_emb,
                    c.char_dim(),
                    &mut init,
                )?)
            } else {
                None
            };
            let lstm1 =
                LstmParams::register(&mut s, "emoji.lstm1", c.fused_dim(), c.lstm1, &mut init)?;
            let lstm2 = if c.arch == EmojiArch::Aca {
                Some(LstmParams::register(
                    &mut s,
                    "emoji.lstm2",
                    c.lstm1,
                    c.lstm2,
                    &mut init,
                )?)
            } else {
                None
            };
            let d = c.concat_dim();
            let ta =
                TemporalAttentionParams::register(&mut s, "emoji.ta", d, c.attn_dim, &mut init)?;
            let out_w = s.add("emoji.out.w", init.glorot(&[c.classes, d], d, c.classes))?;
            let out_b = s.add("emoji.out.b", Tensor::zeros(&[c.classes]))?;
            Net::Seq {
                word,
                chars,
                fa,
                lstm1,
                lstm2,
                ta,
                out_w,
                out_b,
            }
        };
        if let Net::Seq {
            fa: Some(fa),
            lstm1,
            lstm2: Some(l2),
            ta,
            ..
        } = &net
        {
            assert_eq!(fa.output_dim(), lstm1.input, "fused width");
            assert_eq!(
                fa.output_dim() + lstm1.hidden + l2.hidden,
                ta.dim,
                "concat width"
            );
        }
        Ok(Self {
            config,
            net,
            store: s,
        })
    }

    pub fn from_store(config: EmojiConfig, store: &ParamStore<f32>) -> Result<Self> {
        let mut model = Self::build(config, 0)?;
        model.store.load_values(store)?;
        Ok(model)
    }

    pub fn config(&self) -> &EmojiConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn encode(&self, seq: &TokenSeq, vocab: &Vocabulary) -> EncodedText {
        EncodedText {
            words: vocab.encode(seq),
            chars: seq
                .tokens
                .iter()
                .map(|t| encode_chars(&t.surface, self.config.max_word_len))
                .collect(),
        }
    }

    fn check_ids(&self, text: &EncodedText) -> Result<()> {
        if text.is_empty() {
            return Err(Error::EmptySubpart);
        }
        if text.chars.len() != text.words.len() {
            return Err(Error::ShapeMismatch("one char list per word".into()));
        }
        if let Some(&id) = text
            .words
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(Error::IdOutOfRange {
                id,
                rows: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn forward<F: Scalar>(
        &self,
        values: &Tensors<F>,
        text: &EncodedText,
    ) -> Result<(Vec<F>, Option<SeqCache<F>>)> {
        self.check_ids(text)?;
        let (word, chars, fa, lstm1, lstm2, ta, out_w, out_b) = match &self.net {
            Net::Bow { w, b } => {
                let mut logits = values[*b].data().to_vec();
                for &id in &text.words {
                    axpy(F::one(), values[*w].row(id as usize), &mut logits);
                }
                return Ok((logits, None));
            }
            Net::Seq {
                word,
                chars,
                fa,
                lstm1,
                lstm2,
                ta,
                out_w,
                out_b,
            } => (word, chars, fa, lstm1, lstm2, ta, out_w, out_b),
        };
        let t_len = text.len();
        let mut char_caches = Vec::new();
        let mut fa_caches = Vec::new();
        let mut x = Vec::with_capacity(t_len * self.config.fused_dim());
        for t in 0..t_len {
            let w = word.map(|id| values[id].row(text.words[t] as usize));
            let c = match chars {
                Some(p) => {
                    let (c, cache) = char_cnn_forward(&text.chars[t], p, values)?;
                    char_caches.push(cache);
                    Some(c)
                }
                None => None,
            };
            match (w, c, fa) {
                (Some(w), Some(c), Some(p)) => {
                    let (f, cache) = feature_attention_forward(w, &c, p, values)?;
                    fa_caches.push(cache);
                    x.extend_from_slice(&f);
                }
                (Some(w), None, _) => x.extend_from_slice(w),
                (None, Some(c), _) => x.extend_from_slice(&c),
                _ => unreachable!("every sequence model reads words or characters"),
            }
        }
        let x = Tensor::new(&[t_len, self.config.fused_dim()], x)?;
        let (h1, c1) = lstm_forward(&x, lstm1, values, Direction::Forward)?;
        let (z, c2) = match lstm2 {
            Some(p2) => {
                let (h2, c2) = lstm_forward(&h1, p2, values, Direction::Forward)?;
                let mut z = Vec::with_capacity(t_len * self.config.concat_dim());
                for t in 0..t_len {
                    z.extend_from_slice(x.row(t));
                    z.extend_from_slice(h1.row(t));
                    z.extend_from_slice(h2.row(t));
                }
                (
                    Tensor::new(&[t_len, self.config.concat_dim()], z)?,
                    Some(c2),
                )
            }
            None => (h1, None),
        };
        let (pooled, ta_cache) = temporal_attention_forward(&z, ta, values)?;
        let pooled = Tensor::new(&[pooled.len()], pooled)?;
        let logits = dense_forward(&pooled, &values[*out_w], &values[*out_b])?.into_data();
        Ok((
            logits,
            Some(SeqCache {
                chars: char_caches,
                fa: fa_caches,
                c1,
                c2,
                ta: ta_cache,
                pooled,
            }),
        ))
    }

    fn backward<F: Scalar>(
        &self,
        text: &EncodedText,
        cache: Option<&SeqCache<F>>,
        values: &Tensors<F>,
        grads: &mut Tensors<F>,
        d_logits: &[F],
    ) {
        let (word, chars, fa, lstm1, lstm2, ta, out_w, out_b) = match &self.net {
            Net::Bow { w, b } => {
                axpy(F::one(), d_logits, grads[*b].data_mut());
                for &id in &text.words {
                    axpy(F::one(), d_logits, grads[*w].row_mut(id as usize));
                }
                return;
            }
            Net::Seq {
                word,
                chars,
                fa,
                lstm1,
                lstm2,
                ta,
                out_w,
                out_b,
            } => (word, chars, fa, lstm1, lstm2, ta, out_w, out_b),
        };
        let cache = cache.expect("sequence models keep a cache");
        let d_out = Tensor::new(&[d_logits.len()], d_logits.to_vec()).expect("1-D");
        let mut d_pooled = Tensor::zeros(cache.pooled.shape());
        let [dw, db] = grads.many_mut([*out_w, *out_b]);
        dense_backward(
            &cache.pooled,
            &values[*out_w],
            &d_out,
            dw,
            db,
            Some(&mut d_pooled),
        );
        let dz = temporal_attention_backward(&cache.ta, ta, values, grads, d_pooled.data());
        let t_len = text.len();
        let df = self.config.fused_dim();
        let dx = match (lstm2, &cache.c2) {
            (Some(p2), Some(c2)) => {
                let h1 = lstm1.hidden;
                let split = |lo: usize, hi: usize| {
                    let mut t = Tensor::zeros(&[t_len, hi - lo]);
                    for s in 0..t_len {
                        t.row_mut(s).copy_from_slice(&dz.row(s)[lo..hi]);
                    }
                    t
                };
                let mut dx = split(0, df);
                let mut dh1 = split(df, df + h1);
                let dh2 = split(df + h1, dz.row_len());
                let back = lstm_backward(c2, p2, values, grads, &dh2);
                dh1.data_mut()
                    .iter_mut()
                    .zip(back.data())
                    .for_each(|(a, b)| *a += *b);
                let back = lstm_backward(&cache.c1, lstm1, values, grads, &dh1);
                dx.data_mut()
                    .iter_mut()
                    .zip(back.data())
                    .for_each(|(a, b)| *a += *b);
                dx
            }
            _ => lstm_backward(&cache.c1, lstm1, values, grads, &dz),
        };
        for t in 0..t_len {
            let (d_word, d_chars) = match fa {
                Some(p) => {
                    let (w, c) =
                        feature_attention_backward(&cache.fa[t], p, values, grads, dx.row(t));
                    (Some(w), Some(c))
                }
                None if word.is_some() => (Some(dx.row(t).to_vec()), None),
                None => (None, Some(dx.row(t).to_vec())),
            };
            if let (Some(id), Some(d)) = (word, d_word) {
                axpy(F::one(), &d, grads[*id].row_mut(text.words[t] as usize));
            }
            if let (Some(p), Some(d)) = (chars, d_chars) {
                char_cnn_backward(&cache.chars[t], p, values, grads, &d);
            }
        }
    }

    /// Mean cross-entropy over `batch`, accumulating gradients.
    pub fn loss_and_grad<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        batch: &[EncodedExample],
    ) -> Result<f64> {
        let scale = F::lit(1.0 / batch.len() as f64);
        let mut total = 0.0;
        for ex in batch {
            if ex.label >= self.config.classes {
                return Err(Error::InvalidConfig(format!(
                    "label {} outside {} classes",
                    ex.label, self.config.classes
                )));
            }
            let (logits, cache) = self.forward(&store.values, &ex.text)?;
            let (loss, mut d) = cross_entropy(&logits, ex.label);
            d.iter_mut().for_each(|v| *v *= scale);
            total += loss.to_f64().unwrap_or(f64::NAN);
            self.backward(
                &ex.text,
                cache.as_ref(),
                &store.values,
                &mut store.grads,
                &d,
            );
        }
        Ok(total / batch.len() as f64)
    }

    pub fn distribution(&self, text: &EncodedText) -> Result<EmojiDistribution> {
        let (logits, _) = self.forward(&self.store.values, text)?;
        Ok(EmojiDistribution::new(softmax(&logits)))
    }

    pub fn predict(&self, seq: &TokenSeq, vocab: &Vocabulary) -> Result<EmojiDistribution> {
        self.distribution(&self.encode(seq, vocab))
    }

    /// The `k` most likely labels with their probabilities.
    pub fn predict_topk(
        &self,
        seq: &TokenSeq,
        vocab: &Vocabulary,
        k: usize,
    ) -> Result<Vec<(usize, f32)>> {
        if k == 0 || k > self.config.classes {
            return Err(Error::InvalidConfig(format!(
                "k = {k} outside 1..={}",
                self.config.classes
            )));
        }
        let d = self.predict(seq, vocab)?;
        Ok(d.top(k).iter().map(|&i| (i, d.probabilities[i])).collect())
    }

    fn top1_accuracy(&self, data: &[EncodedExample]) -> Result<f64> {
        let correct: usize = data
            .par_iter()
            .map(|ex| {
                self.distribution(&ex.text)
                    .map(|d| usize::from(d.ranked[0] == ex.label))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(100.0 * correct as f64 / data.len() as f64)
    }

    /// Mini-batch Adam on cross-entropy; deterministic given the seeds.
    pub fn train(&mut self, data: &[EncodedExample], hyper: &TrainConfig) -> Result<History> {
        hyper.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut adam = Adam::new(hyper.adam, &self.store);
        let mut batcher = Batcher::new(data.len(), hyper.batch_size, hyper.seed);
        let mut history = History::default();
        for epoch in 1..=hyper.epochs {
            let mut loss_sum = 0.0;
            for idx in batcher.epoch() {
                let batch: Vec<EncodedExample> = idx.iter().map(|&i| data[i].clone()).collect();
                self.store.zero_grads();
                let mut store = std::mem::take(&mut self.store);
                let loss = self.loss_and_grad(&mut store, &batch);
                self.store = store;
                loss_sum += loss? * batch.len() as f64;
                adam.step(&mut self.store);
            }
            let accuracy = self.top1_accuracy(data)?;
            let stats = EpochStats {
                epoch,
                loss: loss_sum / data.len() as f64,
                accuracy,
            };
            log::info!(
                "emoji epoch {epoch}: loss {:.5} top1 {:.2}%",
                stats.loss,
                accuracy
            );
            history.epochs.push(stats);
            if hyper.target_accuracy.is_some_and(|t| accuracy >= t) {
                break;
            }
        }
        Ok(history)
    }

    pub fn evaluate(&self, data: &[EncodedExample]) -> Result<EmojiMetrics> {
        let dists = data
            .par_iter()
            .map(|ex| self.distribution(&ex.text))
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<usize> = data.iter().map(|ex| ex.label).collect();
        evaluate_distributions(&dists, &gold, self.config.classes)
    }
}

/// Class probabilities and the label order they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct EmojiDistribution {
    pub probabilities: Vec<f32>,
    /// Descending probability, ties by label index.
    pub ranked: Vec<usize>,
}

impl EmojiDistribution {
    pub fn new(probabilities: Vec<f32>) -> Self {
        let mut ranked: Vec<usize> = (0..probabilities.len()).collect();
        ranked.sort_by(|&a, &b| {
            probabilities[b]
                .total_cmp(&probabilities[a])
                .then(a.cmp(&b))
        });
        Self {
            probabilities,
            ranked,
        }
    }

    pub fn top(&self, k: usize) -> &[usize] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    pub fn best(&self) -> (usize, f32) {
        let i = self.ranked[0];
        (i, self.probabilities[i])
    }
}

/// Percentages; F1 is the support-weighted mean of per-class F1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmojiMetrics {
    pub top1: f64,
    pub top5: f64,
    pub weighted_f1: f64,
    pub n: usize,
}

impl EmojiMetrics {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\ntop1,{:.4}\ntop5,{:.4}\nweighted_f1,{:.4}\nn,{}\n",
            self.top1, self.top5, self.weighted_f1, self.n
        )
    }
}

pub fn evaluate_distributions(
    dists: &[EmojiDistribution],
    gold: &[usize],
    classes: usize,
) -> Result<EmojiMetrics> {
    if gold.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    if dists.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            dists.len(),
            gold.len()
        )));
    }
    let n = gold.len();
    let (mut top1, mut top5) = (0usize, 0usize);
    let mut tp = vec![0u64; classes];
    let mut predicted = vec![0u64; classes];
    let mut support = vec![0u64; classes];
    for (d, &g) in dists.iter().zip(gold) {
        if g >= classes {
            return Err(Error::InvalidConfig(format!(
                "gold label {g} outside {classes} classes"
            )));
        }
        let best = d.ranked[0];
        top1 += usize::from(best == g);
        top5 += usize::from(d.top(5).contains(&g));
        support[g] += 1;
        predicted[best.min(classes - 1)] += 1;
        if best == g {
            tp[g] += 1;
        }
    }
    let mut f1_sum = 0.0;
    for c in 0..classes {
        if support[c] == 0 {
            continue;
        }
        let p = if predicted[c] == 0 {
            0.0
        } else {
            tp[c] as f64 / predicted[c] as f64
        };
        let r = tp[c] as f64 / support[c] as f64;
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        f1_sum += f1 * support[c] as f64;
    }
    Ok(EmojiMetrics {
        top1: 100.0 * top1 as f64 / n as f64,
        top5: 100.0 * top5 as f64 / n as f64,
        weighted_f1: 100.0 * f1_sum / n as f64,
        n,
    })
}

/// A raw training line: label index and text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmojiExample {
    pub label: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub text: EncodedText,
    pub label: usize,
}

/// Reads `label_index<TAB>text` lines.
pub fn read_examples<R: BufRead>(r: R) -> Result<Vec<EmojiExample>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            what: "emoji examples",
            line: n + 1,
            msg,
        };
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| err("missing tab".into()))?;
        let label = label
            .trim()
            .parse()
            .map_err(|e| err(format!("bad label: {e}")))?;
        out.push(EmojiExample {
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn write_examples<W: Write>(mut w: W, examples: &[EmojiExample]) -> Result<()> {
    for ex in examples {
        writeln!(w, "{}\t{}", ex.label, ex.text)?;
    }
    Ok(())
}

/// Normalizes every text; examples that normalize to nothing are dropped.
pub fn normalize_examples(examples: &[EmojiExample], norm: &Normalizer) -> Vec<(TokenSeq, usize)> {
    examples
        .iter()
        .map(|ex| (norm.apply(&ex.text), ex.label))
        .filter(|(s, _)| !s.is_empty())
        .collect()
}

pub fn encode_examples(
    model: &EmojiModel,
    seqs: &[(TokenSeq, usize)],
    vocab: &Vocabulary,
) -> Vec<EncodedExample> {
    seqs.iter()
        .map(|(s, label)| EncodedExample {
            text: model.encode(s, vocab),
            label: *label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn tiny(arch: EmojiArch) -> EmojiConfig {
        EmojiConfig {
            arch,
            vocab_size: 6,
            word_emb: 3,
            char_emb: 2,
            char_kernels: vec![(1, 2), (2, 2)],
            lstm1: 3,
            lstm2: 2,
            attn_dim: 3,
            classes: 5,
            max_word_len: 4,
        }
    }

    fn text(words: &[u32], chars: &[&str]) -> EncodedText {
        EncodedText {
            words: words.to_vec(),
            chars: chars.iter().map(|w| encode_chars(w, 4)).collect(),
        }
    }

    #[test]
    fn bundled_labels() {
        let l = EmojiLabelSet::default();
        assert_eq!(l.len(), 64);
        assert_eq!(l.categories().len(), 16);
        assert_eq!(l.category_of_glyph("🎂"), Some("celebration"));
        assert_eq!(l.category_of_glyph("❤️"), Some("love"));
        assert!(l.index_of("🦄").is_none());
    }

    #[test]
    fn label_parse_errors() {
        assert!(EmojiLabelSet::parse("😂\thappy\tjoy\n").is_err());
        let dup = "😂\thappy\tx\n".repeat(64);
        assert!(EmojiLabelSet::parse(&dup).is_err());
        assert!(EmojiLabelSet::parse("😂\thappy\n").is_err());
    }

    #[test]
    fn char_encoding() {
        assert_eq!(encode_chars("abz", 24), [2, 3, 27]);
        assert_eq!(encode_chars("abcdef", 3), [2, 3, 4]);
        assert_eq!(encode_chars("", 3), [UNK_CHAR]);
        assert_eq!(char_id('é'), UNK_CHAR);
    }

    #[test]
    fn published_layer_widths() {
        let c = EmojiConfig::default();
        assert_eq!(c.char_dim(), 30);
        assert_eq!(c.fused_dim(), 46);
        assert_eq!(c.concat_dim(), 302);
    }

    #[test]
    fn full_config_parameter_count() {
        let m = EmojiModel::build(EmojiConfig::default(), 0).unwrap();
        let expected = 60_000 * 16
            + NUM_CHARS * 8
            + (5 * 8 + 5)
            + (10 * 2 * 8 + 10)
            + (15 * 3 * 8 + 15)
            + (16 + 30 + 2)
            + (4 * 128 * 46 + 4 * 128 * 128 + 4 * 128)
            + (4 * 128 * 128 * 2 + 4 * 128)
            + (128 * 302 + 128)
            + (64 * 302 + 64);
        assert_eq!(m.param_count(), expected);
        assert!(m.param_count() as f64 <= 0.25 * 22_400_000.0);
    }

    #[test]
    fn single_token_gives_a_distribution() {
        for arch in [
            EmojiArch::Aca,
            EmojiArch::Bow,
            EmojiArch::LstmWord,
            EmojiArch::LstmChar,
        ] {
            let m = EmojiModel::build(tiny(arch), 1).unwrap();
            let d = m.distribution(&text(&[2], &["hi"])).unwrap();
            assert_eq!(d.probabilities.len(), 5);
            let s: f32 = d.probabilities.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "{arch}");
            assert!(matches!(
                m.distribution(&text(&[], &[])),
                Err(Error::EmptySubpart)
            ));
        }
    }

    #[test]
    fn ranking_ties_by_index() {
        let d = EmojiDistribution::new(vec![0.2, 0.3, 0.2, 0.3]);
        assert_eq!(d.ranked, [1, 3, 0, 2]);
        assert_eq!(d.top(2), [1, 3]);
    }

    fn check(arch: EmojiArch, tol: f64) {
        let m = EmojiModel::build(tiny(arch), 9).unwrap();
        let mut store = m.store.cast::<f64>();
        let batch = vec![
            EncodedExample {
                text: text(&[2, 5], &["ab", "zq"]),
                label: 3,
            },
            EncodedExample {
                text: text(&[1], &["xyzw"]),
                label: 0,
            },
        ];
        let r = grad_check(&mut store, 1e-5, |s| m.loss_and_grad(s, &batch).unwrap());
        assert!(r.max_rel_err <= tol, "{arch}: {r:?}");
    }

    #[test]
    fn aca_end_to_end_gradients() {
        check(EmojiArch::Aca, 1e-3);
    }

    #[test]
    fn baseline_gradients() {
        check(EmojiArch::Bow, 1e-4);
        check(EmojiArch::LstmWord, 1e-3);
        check(EmojiArch::LstmChar, 1e-3);
    }

    #[test]
    fn metrics_perfect_and_prefix() {
        let dists: Vec<EmojiDistribution> = (0..4)
            .map(|g| {
                let mut p = vec![0.0; 8];
                p[g] = 1.0;
                EmojiDistribution::new(p)
            })
            .collect();
        let m = evaluate_distributions(&dists, &[0, 1, 2, 3], 8).unwrap();
        assert_eq!((m.top1, m.top5, m.weighted_f1), (100.0, 100.0, 100.0));
        let m = evaluate_distributions(&dists, &[1, 1, 2, 3], 8).unwrap();
        assert_eq!(m.top1, 75.0);
        assert!(m.top5 >= m.top1);
        assert!(evaluate_distributions(&[], &[], 8).is_err());
    }

    #[test]
    fn weighted_f1_by_hand() {
        // gold 0,0,0,1 ; pred 0,0,1,1
        let one_hot = |k: usize| {
            let mut p = vec![0.0; 3];
            p[k] = 1.0;
            EmojiDistribution::new(p)
        };
        let dists = vec![one_hot(0), one_hot(0), one_hot(1), one_hot(1)];
        let m = evaluate_distributions(&dists, &[0, 0, 0, 1], 3).unwrap();
        let f0 = 2.0 * 1.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0);
        let f1 = 2.0 * 0.5 * 1.0 / 1.5;
        assert!((m.weighted_f1 - 100.0 * (3.0 * f0 + f1) / 4.0).abs() < 1e-9);
    }

    #[test]
    fn examples_round_trip() {
        let ex = vec![
            EmojiExample {
                label: 3,
                text: "so much rain".into(),
            },
            EmojiExample {
                label: 20,
                text: "happy birthday".into(),
            },
        ];
        let mut buf = Vec::new();
        write_examples(&mut buf, &ex).unwrap();
        assert_eq!(read_examples(&buf[..]).unwrap(), ex);
        assert!(read_examples("x\thi\n".as_bytes()).is_err());
        assert!(read_examples("3 hi\n".as_bytes()).is_err());
    }
}
