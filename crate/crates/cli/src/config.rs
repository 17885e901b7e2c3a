//! Run configuration: built-in defaults, then an optional `key = value`
//! file, then `--set key=value` flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use emojiscribe::boundary::{BoundaryArch, BoundaryConfig};
use emojiscribe::emoji::{EmojiArch, EmojiConfig};
use emojiscribe::nn::{AdamConfig, TrainConfig};
use emojiscribe::pipeline::PipelineConfig;

const KEYS: &[(&str, &str)] = &[
    ("seed", "42"),
    ("epochs", "10"),
    ("batch_size", "64"),
    ("learning_rate", "0.001"),
    ("target_accuracy", ""),
    ("arch", "cnn"),
    ("window", "6"),
    ("offset", "4"),
    ("vocab_size", "20000"),
    ("emb_dim", "50"),
    ("filters", "512"),
    ("kernel", "3"),
    ("dilation", "2"),
    ("pool", "2"),
    ("bilstm_hidden", "64"),
    ("class_weight_ratio", ""),
    ("scaled_loss", "true"),
    ("threshold", "0.5"),
    ("emoji_arch", "aca"),
    ("emoji_vocab_size", "60000"),
    ("word_emb", "16"),
    ("char_emb", "8"),
    ("lstm1", "128"),
    ("lstm2", "128"),
    ("attn_dim", "128"),
    ("max_word_len", "24"),
    ("emoji_threshold", "0.3"),
    ("sizes", "3,4,5,6,7,8"),
    ("warmup", "100"),
    ("iterations", "1000"),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(format!("unknown configuration key `{key}`"))
    }
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected `key = value`", n + 1))?;
            c.set(k.trim(), v.trim())
                .map_err(|e| format!("config line {}: {e}", n + 1))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
        self.set(k.trim(), v.trim())
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| KEYS.iter().find(|(k, _)| *k == key).map(|(_, d)| *d))
            .expect("key listed in KEYS")
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse()
            .map_err(|e| format!("bad value `{v}` for `{key}`: {e}"))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn seed(&self) -> Result<u64, String> {
        self.get("seed")
    }

    pub fn train(&self) -> Result<TrainConfig, String> {
        let t = TrainConfig {
            epochs: self.get("epochs")?,
            batch_size: self.get("batch_size")?,
            adam: AdamConfig {
                lr: self.get("learning_rate")?,
                ..AdamConfig::default()
            },
            seed: self.seed()?,
            target_accuracy: self.get_opt("target_accuracy")?,
        };
        t.validate().map_err(|e| e.to_string())?;
        Ok(t)
    }

    pub fn boundary(&self) -> Result<BoundaryConfig, String> {
        let c = BoundaryConfig {
            arch: self.get::<BoundaryArch>("arch")?,
            window: self.get("window")?,
            offset: self.get("offset")?,
            vocab_size: self.get("vocab_size")?,
            emb_dim: self.get("emb_dim")?,
            filters: self.get("filters")?,
            kernel: self.get("kernel")?,
            dilation: self.get("dilation")?,
            pool: self.get("pool")?,
            bilstm_hidden: self.get("bilstm_hidden")?,
            class_weight_ratio: self.get_opt("class_weight_ratio")?,
            scaled_loss: self.get("scaled_loss")?,
            threshold: self.get("threshold")?,
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn emoji(&self) -> Result<EmojiConfig, String> {
        let c = EmojiConfig {
            arch: self.get::<EmojiArch>("emoji_arch")?,
            vocab_size: self.get("emoji_vocab_size")?,
            word_emb: self.get("word_emb")?,
            char_emb: self.get("char_emb")?,
            lstm1: self.get("lstm1")?,
            lstm2: self.get("lstm2")?,
            attn_dim: self.get("attn_dim")?,
            max_word_len: self.get("max_word_len")?,
            ..EmojiConfig::default()
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, String> {
        let c = PipelineConfig {
            emoji_threshold: self.get("emoji_threshold")?,
            boundary_threshold: if self.is_set("threshold") {
                Some(self.get("threshold")?)
            } else {
                None
            },
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    pub fn sizes(&self) -> Result<Vec<usize>, String> {
        let sizes = self
            .raw("sizes")
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad window size `{s}`: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if sizes.is_empty() || sizes.iter().any(|&w| w < 2) {
            return Err("window sizes must be at least 2".into());
        }
        Ok(sizes)
    }

    /// Checks every section so that bad values fail before any work.
    pub fn validate(&self) -> Result<(), String> {
        self.seed()?;
        self.train()?;
        self.boundary()?;
        self.emoji()?;
        self.pipeline()?;
        self.sizes()?;
        self.bench_iterations()?;
        Ok(())
    }

    pub fn bench_iterations(&self) -> Result<(usize, usize), String> {
        let (w, n) = (self.get("warmup")?, self.get("iterations")?);
        if n == 0 {
            return Err("iterations must be positive".into());
        }
        Ok((w, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use emojiscribe::pipeline::{BENCH_ITERATIONS, BENCH_WARMUP};

    #[test]
    fn defaults_match_library_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.boundary().unwrap(), BoundaryConfig::default());
        assert_eq!(c.emoji().unwrap(), EmojiConfig::default());
        assert_eq!(c.pipeline().unwrap(), PipelineConfig::default());
        assert_eq!(c.train().unwrap(), TrainConfig::default());
        assert_eq!(
            c.bench_iterations().unwrap(),
            (BENCH_WARMUP, BENCH_ITERATIONS)
        );
    }

    #[test]
    fn file_then_flags() {
        let mut c =
            RunConfig::parse("# comment\nepochs = 3\nwindow=5 # inline\noffset = 4\n\n").unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), 3);
        c.set_pair("epochs=7").unwrap();
        assert_eq!(c.train().unwrap().epochs, 7);
        assert_eq!(c.boundary().unwrap().window, 5);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::parse("nonsense").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        let c = RunConfig::parse("epochs = many").unwrap();
        assert!(c.train().is_err());
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig::parse("offset = 9").unwrap().boundary().is_err());
        assert!(RunConfig::parse("emoji_threshold = 1.5")
            .unwrap()
            .pipeline()
            .is_err());
        assert!(RunConfig::parse("sizes = 3,x").unwrap().sizes().is_err());
    }

    #[test]
    fn threshold_reaches_the_pipeline_only_when_set() {
        assert_eq!(
            RunConfig::default().pipeline().unwrap().boundary_threshold,
            None
        );
        let c = RunConfig::parse("threshold = 0.7").unwrap();
        assert_eq!(c.pipeline().unwrap().boundary_threshold, Some(0.7));
    }
}
