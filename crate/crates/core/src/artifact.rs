//! Model files on disk: a `VMW1` weight file plus a JSON sidecar at
//! `<weights>.json` holding the configuration, vocabulary and labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryConfig, BoundaryModel};
use crate::dataset::Vocabulary;
use crate::emoji::{EmojiConfig, EmojiLabelSet, EmojiModel};
use crate::nn::{read_weights, write_weights, LoadedWeights, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelMeta {
    Boundary {
        config: BoundaryConfig,
        vocab: Vec<String>,
    },
    Emoji {
        config: EmojiConfig,
        vocab: Vec<String>,
        labels: EmojiLabelSet,
    },
}

#[derive(Clone, Debug)]
pub struct BoundaryBundle {
    pub model: BoundaryModel,
    pub vocab: Vocabulary,
}

#[derive(Clone, Debug)]
pub struct EmojiBundle {
    pub model: EmojiModel,
    pub vocab: Vocabulary,
    pub labels: EmojiLabelSet,
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes weights and sidecar.
pub fn save(path: &Path, store: &ParamStore<f32>, meta: &ModelMeta, quantized: bool) -> Result<()> {
    write_file(path, |w| write_weights(w, store, quantized))?;
    write_file(&sidecar_path(path), |w| {
        serde_json::to_writer_pretty(&mut *w, meta)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Reads weights and sidecar without rebuilding a model.
pub fn load(path: &Path) -> Result<(ModelMeta, LoadedWeights)> {
    let weights = read_weights(BufReader::new(File::open(path)?))?;
    let meta = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    Ok((meta, weights))
}

pub fn save_boundary(path: &Path, b: &BoundaryBundle, quantized: bool) -> Result<()> {
    let meta = ModelMeta::Boundary {
        config: b.model.config().clone(),
        vocab: b.vocab.words().to_vec(),
    };
    save(path, &b.model.store, &meta, quantized)
}

pub fn save_emoji(path: &Path, e: &EmojiBundle, quantized: bool) -> Result<()> {
    let meta = ModelMeta::Emoji {
        config: e.model.config().clone(),
        vocab: e.vocab.words().to_vec(),
        labels: e.labels.clone(),
    };
    save(path, &e.model.store, &meta, quantized)
}

pub fn load_boundary(path: &Path) -> Result<BoundaryBundle> {
    match load(path)? {
        (ModelMeta::Boundary { config, vocab }, w) => Ok(BoundaryBundle {
            model: BoundaryModel::from_store(config, &w.store)?,
            vocab: Vocabulary::from_id_order(vocab)?,
        }),
        _ => Err(Error::Format(format!(
            "{} is not a boundary model",
            path.display()
        ))),
    }
}

pub fn load_emoji(path: &Path) -> Result<EmojiBundle> {
    match load(path)? {
        (
            ModelMeta::Emoji {
                config,
                vocab,
                labels,
            },
            w,
        ) => Ok(EmojiBundle {
            model: EmojiModel::from_store(config, &w.store)?,
            vocab: Vocabulary::from_id_order(vocab)?,
            labels,
        }),
        _ => Err(Error::Format(format!(
            "{} is not an emoji model",
            path.display()
        ))),
    }
}

/// Rewrites a model with int8 weights; the sidecar is carried over.
pub fn quantize_file(input: &Path, output: &Path) -> Result<()> {
    let (meta, w) = load(input)?;
    save(output, &w.store, &meta, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::TokenSeq;

    fn tiny_boundary() -> BoundaryBundle {
        let vocab = Vocabulary::build(["a", "b", "c"], 10).unwrap();
        let config = BoundaryConfig {
            vocab_size: 10,
            emb_dim: 4,
            filters: 8,
            ..BoundaryConfig::default()
        };
        BoundaryBundle {
            model: BoundaryModel::build(config, 1).unwrap(),
            vocab,
        }
    }

    #[test]
    fn boundary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.vmw");
        let b = tiny_boundary();
        save_boundary(&path, &b, false).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = load_boundary(&path).unwrap();
        assert_eq!(back.vocab, b.vocab);
        let s = TokenSeq::from_words(&["a", "b", "zzz"]);
        assert_eq!(
            back.model.probabilities(&s, &back.vocab),
            b.model.probabilities(&s, &b.vocab)
        );
        assert!(load_emoji(&path).is_err());
    }

    #[test]
    fn quantized_copy_is_smaller_and_close() {
        let dir = tempfile::tempdir().unwrap();
        let (f, q) = (dir.path().join("f.vmw"), dir.path().join("q.vmw"));
        let b = tiny_boundary();
        save_boundary(&f, &b, false).unwrap();
        quantize_file(&f, &q).unwrap();
        let (fs, qs) = (
            std::fs::metadata(&f).unwrap().len(),
            std::fs::metadata(&q).unwrap().len(),
        );
        assert!(qs < fs);
        let back = load_boundary(&q).unwrap();
        let s = TokenSeq::from_words(&["a", "c", "b"]);
        for (x, y) in back
            .model
            .probabilities(&s, &back.vocab)
            .iter()
            .zip(b.model.probabilities(&s, &b.vocab))
        {
            assert!((x - y).abs() < 0.05);
        }
    }

    #[test]
    fn emoji_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.vmw");
        let vocab = Vocabulary::build(["rain", "cake"], 8).unwrap();
        let config = EmojiConfig {
            vocab_size: 8,
            lstm1: 4,
            lstm2: 4,
            attn_dim: 4,
            ..EmojiConfig::default()
        };
        let e = EmojiBundle {
            model: EmojiModel::build(config, 2).unwrap(),
            vocab,
            labels: EmojiLabelSet::default(),
        };
        save_emoji(&path, &e, false).unwrap();
        let back = load_emoji(&path).unwrap();
        let s = TokenSeq::from_words(&["rain", "again"]);
        assert_eq!(
            back.model.predict(&s, &back.vocab).unwrap(),
            e.model.predict(&s, &e.vocab).unwrap()
        );
        assert_eq!(back.labels, e.labels);
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.vmw");
        save_boundary(&path, &tiny_boundary(), false).unwrap();
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(load_boundary(&path).is_err());
    }
}
