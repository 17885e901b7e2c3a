//! Vocabularies, boundary labels and fixed-width training windows.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::tagger::{mark_subpart_boundaries, tag, BoundarySet, TriggerLexicon};
use crate::textnorm::{Normalizer, TokenSeq};
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_WORD: &str = "<pad>";
pub const UNK_WORD: &str = "<unk>";

pub const DEFAULT_VOCAB_SIZE: usize = 20_000;
pub const DEFAULT_WINDOW: usize = 6;
pub const DEFAULT_OFFSET: usize = 4;

const CACHE_MAGIC: &[u8; 4] = b"VMDS";
const CACHE_VERSION: u32 = 1;

/// Frequency-ranked word ↔ id mapping with reserved `PAD = 0`, `UNK = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    word_to_id: HashMap<String, u32>,
    id_to_word: Vec<String>,
}

impl Vocabulary {
    /// Keeps the `size - 2` most frequent words; ties break lexicographically.
    pub fn build<'a, I>(corpus: I, size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if size < 2 {
            return Err(Error::InvalidConfig(format!("vocabulary size {size} < 2")));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for w in corpus {
            *counts.entry(w).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(w, _)| *w != PAD_WORD && *w != UNK_WORD)
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(size - 2);
        let words = [PAD_WORD, UNK_WORD]
            .into_iter()
            .chain(ranked.into_iter().map(|(w, _)| w))
            .map(str::to_string)
            .collect();
        Ok(Self::from_words(words))
    }

    fn from_words(id_to_word: Vec<String>) -> Self {
        let word_to_id = id_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self {
            word_to_id,
            id_to_word,
        }
    }

    /// Rebuilds a vocabulary from its word list in id order.
    pub fn from_id_order(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[0] != PAD_WORD || words[1] != UNK_WORD {
            return Err(Error::Format(
                "vocabulary must start with <pad> and <unk>".into(),
            ));
        }
        let vocab = Self::from_words(words);
        if vocab.word_to_id.len() != vocab.id_to_word.len() {
            return Err(Error::Format("duplicate word in vocabulary".into()));
        }
        Ok(vocab)
    }

    pub fn id(&self, word: &str) -> u32 {
        self.word_to_id.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.id_to_word.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_word
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<u32> {
        seq.tokens.iter().map(|t| self.id(&t.surface)).collect()
    }

    /// One word per line, in id order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for w in &self.id_to_word {
            out.push_str(w);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_id_order(text.lines().map(str::to_string).collect())
    }
}

/// Normalized tokens with a boundary flag after each one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledTokenSeq {
    pub tokens: TokenSeq,
    pub boundary_after: Vec<bool>,
}

impl LabeledTokenSeq {
    pub fn new(tokens: TokenSeq, boundary_after: Vec<bool>) -> Result<Self> {
        if tokens.len() != boundary_after.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} tokens",
                boundary_after.len(),
                tokens.len()
            )));
        }
        Ok(Self {
            tokens,
            boundary_after,
        })
    }

    pub fn boundaries(&self) -> BoundarySet {
        self.boundary_after
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Labels a written article: a boundary follows every word that ended a
/// sentence (`.`, `?`, `!`) and every word preceding a trigger. Commas and
/// other punctuation never create labels.
pub fn derive_labels(
    raw_article: &str,
    lex: &TriggerLexicon,
    norm: &Normalizer,
) -> LabeledTokenSeq {
    let tokens = norm.apply(raw_article);
    let triggers =
        mark_subpart_boundaries(&tokens, &tag(&tokens, lex)).expect("tags are produced per token");
    let boundary_after = tokens
        .tokens
        .iter()
        .enumerate()
        .map(|(i, t)| t.ends_sentence() || triggers.contains(i))
        .collect();
    LabeledTokenSeq {
        tokens,
        boundary_after,
    }
}

/// One fixed-width window of token ids and the label of its decision slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sample {
    pub window: Vec<u32>,
    pub label: bool,
}

/// Window geometry: `width` ids with the decision token at 1-indexed slot
/// `offset`, i.e. `offset - 1` words of left context and `width - offset`
/// words of right context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub width: usize,
    pub offset: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            width: DEFAULT_WINDOW,
            offset: DEFAULT_OFFSET,
        }
    }
}

impl WindowSpec {
    pub fn new(width: usize, offset: usize) -> Result<Self> {
        if width < 2 || offset < 1 || offset > width {
            return Err(Error::InvalidWindowConfig {
                window: width,
                offset,
            });
        }
        Ok(Self { width, offset })
    }

    /// Window around token `i` of `ids`, PAD outside the article.
    pub fn extract(&self, ids: &[u32], i: usize) -> Vec<u32> {
        let left = self.offset - 1;
        (0..self.width)
            .map(|k| {
                let pos = i as isize - left as isize + k as isize;
                if pos < 0 || pos as usize >= ids.len() {
                    PAD
                } else {
                    ids[pos as usize]
                }
            })
            .collect()
    }

    /// All windows of a sequence, one per token.
    pub fn all(&self, ids: &[u32]) -> Vec<Vec<u32>> {
        (0..ids.len()).map(|i| self.extract(ids, i)).collect()
    }
}

/// One sample per token; sample `i` is labeled with `boundary_after[i]`.
pub fn make_windows(
    seq: &LabeledTokenSeq,
    vocab: &Vocabulary,
    width: usize,
    offset: usize,
) -> Result<Vec<Sample>> {
    let spec = WindowSpec::new(width, offset)?;
    let ids = vocab.encode(&seq.tokens);
    Ok(spec
        .all(&ids)
        .into_iter()
        .zip(&seq.boundary_after)
        .map(|(window, &label)| Sample { window, label })
        .collect())
}

/// Boundary-positive (`n`) and boundary-negative (`m`) sample counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassStats {
    pub n: u64,
    pub m: u64,
}

impl ClassStats {
    pub fn total(&self) -> u64 {
        self.n + self.m
    }

    /// Weight applied to the negative class in the scaled loss.
    pub fn negative_weight(&self) -> Result<f64> {
        if self.m == 0 {
            return Err(Error::DegenerateStats);
        }
        Ok(self.n as f64 / self.m as f64)
    }
}

pub fn class_stats(samples: &[Sample]) -> ClassStats {
    let n = samples.iter().filter(|s| s.label).count() as u64;
    ClassStats {
        n,
        m: samples.len() as u64 - n,
    }
}

/// A punctuation-free sequence with its gold boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSequence {
    pub tokens: TokenSeq,
    pub gold: BoundarySet,
}

impl EvalSequence {
    /// Gold boundaries from label derivation, plus the end of the text,
    /// which always closes a sub-part.
    pub fn from_labeled(seq: &LabeledTokenSeq) -> Self {
        let mut gold = seq.boundaries();
        if !seq.tokens.is_empty() {
            gold.insert(seq.tokens.len() - 1);
        }
        Self {
            tokens: seq.tokens.clone(),
            gold,
        }
    }

    /// Number of sub-parts: internal boundaries plus the closing one.
    pub fn subparts(&self) -> usize {
        if self.tokens.is_empty() {
            return 0;
        }
        let last = self.tokens.len() - 1;
        self.gold.iter().filter(|&p| p < last).count() + 1
    }
}

/// Keeps only dialogues with at least two sub-parts.
pub fn extract_multisentence<S: AsRef<str> + Sync>(
    dialogs: &[S],
    lex: &TriggerLexicon,
    norm: &Normalizer,
) -> Vec<EvalSequence> {
    dialogs
        .par_iter()
        .map(|d| EvalSequence::from_labeled(&derive_labels(d.as_ref(), lex, norm)))
        .filter(|e| e.subparts() >= 2)
        .collect()
}

/// Reads a one-document-per-line corpus, skipping blank lines.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut docs = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            docs.push(line);
        }
    }
    Ok(docs)
}

/// Labels every document. Work is sharded across the rayon pool but the
/// output keeps document order.
pub fn label_corpus<S: AsRef<str> + Sync>(
    docs: &[S],
    lex: &TriggerLexicon,
    norm: &Normalizer,
) -> Vec<LabeledTokenSeq> {
    docs.par_iter()
        .map(|d| derive_labels(d.as_ref(), lex, norm))
        .filter(|l| !l.tokens.is_empty())
        .collect()
}

/// Samples for a whole labeled corpus, in document order.
pub fn corpus_samples(
    docs: &[LabeledTokenSeq],
    vocab: &Vocabulary,
    spec: WindowSpec,
) -> Vec<Sample> {
    docs.par_iter()
        .map(|d| make_windows(d, vocab, spec.width, spec.offset).expect("spec already validated"))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Writes the binary samples cache (`VMDS`, little-endian).
pub fn write_samples<W: Write>(mut w: W, spec: WindowSpec, samples: &[Sample]) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(spec.width as u32).to_le_bytes())?;
    w.write_all(&(spec.offset as u32).to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        if s.window.len() != spec.width {
            return Err(Error::WrongWindowWidth {
                got: s.window.len(),
                expected: spec.width,
            });
        }
        for id in &s.window {
            w.write_all(&id.to_le_bytes())?;
        }
        w.write_all(&[s.label as u8])?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_samples<R: Read>(mut r: R) -> Result<(WindowSpec, Vec<Sample>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not a samples cache (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "unsupported samples cache version {version}"
        )));
    }
    let spec = WindowSpec::new(read_u32(&mut r)? as usize, read_u32(&mut r)? as usize)?;
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let window = (0..spec.width)
            .map(|_| read_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let mut label = [0u8; 1];
        r.read_exact(&mut label)?;
        if label[0] > 1 {
            return Err(Error::Format(format!("bad label byte {}", label[0])));
        }
        samples.push(Sample {
            window,
            label: label[0] == 1,
        });
    }
    Ok((spec, samples))
}

/// Reads `word v1 .. vd` lines and keeps the rows for words in `vocab`.
/// PAD and UNK are never filled; unknown words are skipped.
pub fn read_word_vectors<R: BufRead>(
    r: R,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<Vec<(u32, Vec<f32>)>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let err = |msg: String| Error::Parse {
            what: "word vector",
            line: n + 1,
            msg,
        };
        let v = fields
            .map(|f| f.parse::<f32>().map_err(|e| err(format!("`{f}`: {e}"))))
            .collect::<Result<Vec<f32>>>()?;
        if v.len() != dim {
            return Err(err(format!("{} values, expected {dim}", v.len())));
        }
        let id = vocab.id(word);
        if id > UNK && vocab.contains(word) {
            rows.push((id, v));
        }
    }
    Ok(rows)
}

pub fn load_word_vectors(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<Vec<(u32, Vec<f32>)>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_word_vectors(file, vocab, dim)
}
