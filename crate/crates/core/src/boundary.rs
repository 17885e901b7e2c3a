//! Windowed boundary detector: a dilated CNN and a BiLSTM baseline.
//!
//! The model scores one window of token ids at a time and answers whether an
//! emoji may follow the decision token.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    class_stats, corpus_samples, ClassStats, EvalSequence, LabeledTokenSeq, Sample, Vocabulary,
    WindowSpec, PAD,
};
use crate::nn::{
    bce_with_weight, conv1d_backward, conv1d_forward, dense_backward, dense_forward,
    embedding_backward, embedding_forward, lstm_backward, lstm_forward, maxpool1d_backward,
    maxpool1d_forward, relu, relu_backward, sigmoid, Adam, Batcher, Direction, EpochStats, History,
    Init, LstmCache, LstmParams, MaxPoolCache, ParamId, ParamStore, Scalar, Tensor, Tensors,
    TrainConfig,
};
use crate::tagger::BoundarySet;
use crate::textnorm::TokenSeq;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArch {
    Cnn,
    Bilstm,
}

impl FromStr for BoundaryArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Self::Cnn),
            "bilstm" => Ok(Self::Bilstm),
            other => Err(Error::InvalidConfig(format!(
                "unknown boundary architecture `{other}`"
            ))),
        }
    }
}

impl fmt::Display for BoundaryArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cnn => "cnn",
            Self::Bilstm => "bilstm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub arch: BoundaryArch,
    pub window: usize,
    pub offset: usize,
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub filters: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pool: usize,
    pub bilstm_hidden: usize,
    /// Negative-class weight for the BiLSTM; `None` falls back to N/M.
    pub class_weight_ratio: Option<f64>,
    /// Whether the CNN weights negatives by N/M.
    pub scaled_loss: bool,
    pub threshold: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            arch: BoundaryArch::Cnn,
            window: crate::dataset::DEFAULT_WINDOW,
            offset: crate::dataset::DEFAULT_OFFSET,
            vocab_size: crate::dataset::DEFAULT_VOCAB_SIZE,
            emb_dim: 50,
            filters: 512,
            kernel: 3,
            dilation: 2,
            pool: 2,
            bilstm_hidden: 64,
            class_weight_ratio: None,
            scaled_loss: true,
            threshold: 0.5,
        }
    }
}

impl BoundaryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        WindowSpec::new(self.window, self.offset)?;
        if self.emb_dim == 0 {
            return bad("emb_dim must be positive".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must cover PAD and UNK".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if let Some(r) = self.class_weight_ratio {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("class_weight_ratio {r} must be positive"));
            }
        }
        match self.arch {
            BoundaryArch::Cnn => {
                if self.filters == 0 || self.kernel == 0 || self.dilation == 0 || self.pool == 0 {
                    return bad("filters, kernel, dilation and pool must be positive".into());
                }
            }
            BoundaryArch::Bilstm => {
                if self.bilstm_hidden == 0 {
                    return bad("bilstm_hidden must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            width: self.window,
            offset: self.offset,
        }
    }

    /// Ids the network actually reads. Windows narrower than the CNN's
    /// receptive field plus one pool are right-padded with PAD.
    pub fn input_len(&self) -> usize {
        match self.arch {
            BoundaryArch::Cnn => self
                .window
                .max((self.kernel - 1) * self.dilation + self.pool),
            BoundaryArch::Bilstm => self.window,
        }
    }

    /// Length of the CNN feature map after pooling.
    fn pooled_len(&self) -> usize {
        (self.input_len() - (self.kernel - 1) * self.dilation) / self.pool
    }
}

#[derive(Clone, Debug)]
enum Net {
    Cnn {
        emb: ParamId,
        conv_w: ParamId,
        conv_b: ParamId,
        out_w: ParamId,
        out_b: ParamId,
    },
    Bilstm {
        emb: ParamId,
        fwd: LstmParams,
        bwd: LstmParams,
        out_w: ParamId,
        out_b: ParamId,
    },
}

enum Cache<F> {
    Cnn {
        ids: Vec<u32>,
        x: Tensor<F>,
        pre: Tensor<F>,
        pool: MaxPoolCache,
        pooled_shape: Vec<usize>,
        flat: Tensor<F>,
    },
    Bilstm {
        ids: Vec<u32>,
        fwd: LstmCache<F>,
        bwd: LstmCache<F>,
        feat: Tensor<F>,
        steps: usize,
    },
}

/// A built boundary network and its parameters.
#[derive(Clone, Debug)]
pub struct BoundaryModel {
    config: BoundaryConfig,
    net: Net,
    pub store: ParamStore<f32>,
}

impl BoundaryModel {
    /// Builds with seeded Glorot initialization. The PAD embedding row
    /// starts at zero.
    pub fn build(config: BoundaryConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let mut store = ParamStore::new();
        let (v, e) = (config.vocab_size, config.emb_dim);
        let mut table = init.uniform(&[v, e], 0.05);
        table.row_mut(PAD as usize).fill(0.0);
        let emb = store.add("boundary.emb", table)?;
        let net = match config.arch {
            BoundaryArch::Cnn => {
                let (f, k) = (config.filters, config.kernel);
                let conv_w = store.add("boundary.conv.w", init.glorot(&[f, k, e], k * e, f))?;
                let conv_b = store.add("boundary.conv.b", Tensor::zeros(&[f]))?;
                let flat = config.pooled_len() * f;
                let out_w = store.add("boundary.out.w", init.glorot(&[1, flat], flat, 1))?;
                let out_b = store.add("boundary.out.b", Tensor::zeros(&[1]))?;
                Net::Cnn {
                    emb,
                    conv_w,
                    conv_b,
                    out_w,
                    out_b,
                }
            }
            BoundaryArch::Bilstm => {
                let h = config.bilstm_hidden;
                let fwd = LstmParams::register(&mut store, "boundary.lstm_fwd", e, h, &mut init)?;
                let bwd = LstmParams::register(&mut store, "boundary.lstm_bwd", e, h, &mut init)?;
                let out_w = store.add("boundary.out.w", init.glorot(&[1, 2 * h], 2 * h, 1))?;
                let out_b = store.add("boundary.out.b", Tensor::zeros(&[1]))?;
                Net::Bilstm {
                    emb,
                    fwd,
                    bwd,
                    out_w,
                    out_b,
                }
            }
        };
        Ok(Self { config, net, store })
    }

    /// Rebuilds the network for `config` and takes its values from `store`.
    pub fn from_store(config: BoundaryConfig, store: &ParamStore<f32>) -> Result<Self> {
        let mut model = Self::build(config, 0)?;
        model.store.load_values(store)?;
        Ok(model)
    }

    pub fn config(&self) -> &BoundaryConfig {
        &self.config
    }

    /// Overwrites embedding rows with pre-trained vectors. Returns the
    /// number of rows written.
    pub fn load_embeddings(&mut self, rows: &[(u32, Vec<f32>)]) -> Result<usize> {
        let id = self.store.id("boundary.emb")?;
        let table = self.store.value_mut(id);
        let (v, e) = (self.config.vocab_size, self.config.emb_dim);
        for (word, vec) in rows {
            if *word as usize >= v {
                return Err(Error::IdOutOfRange { id: *word, rows: v });
            }
            if vec.len() != e {
                return Err(Error::ShapeMismatch(format!(
                    "embedding row of {} values, expected {e}",
                    vec.len()
                )));
            }
            table.row_mut(*word as usize).copy_from_slice(vec);
        }
        Ok(rows.len())
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let mut c = self.config.clone();
        c.threshold = threshold;
        c.validate()?;
        self.config = c;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    fn check_width(&self, window: &[u32]) -> Result<()> {
        if window.len() != self.config.window {
            return Err(Error::WrongWindowWidth {
                got: window.len(),
                expected: self.config.window,
            });
        }
        Ok(())
    }

    fn input<'a>(&self, window: &'a [u32]) -> Cow<'a, [u32]> {
        let n = self.config.input_len();
        if window.len() >= n {
            Cow::Borrowed(window)
        } else {
            let mut ids = window.to_vec();
            ids.resize(n, PAD);
            Cow::Owned(ids)
        }
    }

    fn forward<F: Scalar>(&self, values: &Tensors<F>, window: &[u32]) -> Result<(F, Cache<F>)> {
        let ids = self.input(window).into_owned();
        let c = &self.config;
        match self.net {
            Net::Cnn {
                emb,
                conv_w,
                conv_b,
                out_w,
                out_b,
            } => {
                let x = embedding_forward(&ids, &values[emb])?;
                let pre = conv1d_forward(&x, &values[conv_w], &values[conv_b], c.dilation)?;
                let (pooled, pool) = maxpool1d_forward(&relu(&pre), c.pool)?;
                let pooled_shape = pooled.shape().to_vec();
                let flat = pooled.reshape(&[pooled_shape.iter().product()])?;
                let y = dense_forward(&flat, &values[out_w], &values[out_b])?;
                let logit = y.data()[0];
                Ok((
                    logit,
                    Cache::Cnn {
                        ids,
                        x,
                        pre,
                        pool,
                        pooled_shape,
                        flat,
                    },
                ))
            }
            Net::Bilstm {
                emb,
                ref fwd,
                ref bwd,
                out_w,
                out_b,
            } => {
                let x = embedding_forward(&ids, &values[emb])?;
                let (hf, fwd_cache) = lstm_forward(&x, fwd, values, Direction::Forward)?;
                let (hb, bwd_cache) = lstm_forward(&x, bwd, values, Direction::Backward)?;
                let center = c.offset - 1;
                let mut feat = hf.row(center).to_vec();
                feat.extend_from_slice(hb.row(center));
                let feat = Tensor::new(&[feat.len()], feat)?;
                let y = dense_forward(&feat, &values[out_w], &values[out_b])?;
                Ok((
                    y.data()[0],
                    Cache::Bilstm {
                        ids,
                        fwd: fwd_cache,
                        bwd: bwd_cache,
                        feat,
                        steps: x.rows(),
                    },
                ))
            }
        }
    }

    /// Accumulates the gradient of `d_logit · logit` into `grads`.
    fn backward<F: Scalar>(
        &self,
        cache: &Cache<F>,
        values: &Tensors<F>,
        grads: &mut Tensors<F>,
        d_logit: F,
    ) {
        let d_out = Tensor::new(&[1], vec![d_logit]).expect("scalar");
        match (&self.net, cache) {
            (
                &Net::Cnn {
                    emb,
                    conv_w,
                    conv_b,
                    out_w,
                    out_b,
                },
                Cache::Cnn {
                    ids,
                    x,
                    pre,
                    pool,
                    pooled_shape,
                    flat,
                },
            ) => {
                let mut d_flat = Tensor::zeros(flat.shape());
                let [dw, db] = grads.many_mut([out_w, out_b]);
                dense_backward(flat, &values[out_w], &d_out, dw, db, Some(&mut d_flat));
                let d_pooled = d_flat.reshape(pooled_shape).expect("same size");
                let d_act = maxpool1d_backward(pool, &d_pooled);
                let d_pre = relu_backward(pre, &d_act);
                let mut d_x = Tensor::zeros(x.shape());
                let [dw, db] = grads.many_mut([conv_w, conv_b]);
                conv1d_backward(
                    x,
                    &values[conv_w],
                    self.config.dilation,
                    &d_pre,
                    dw,
                    db,
                    Some(&mut d_x),
                );
                embedding_backward(ids, &d_x, &mut grads[emb]);
            }
            (
                Net::Bilstm {
                    emb,
                    fwd,
                    bwd,
                    out_w,
                    out_b,
                },
                Cache::Bilstm {
                    ids,
                    fwd: fc,
                    bwd: bc,
                    feat,
                    steps,
                },
            ) => {
                let h = fwd.hidden;
                let mut d_feat = Tensor::zeros(feat.shape());
                let [dw, db] = grads.many_mut([*out_w, *out_b]);
                dense_backward(feat, &values[*out_w], &d_out, dw, db, Some(&mut d_feat));
                let center = self.config.offset - 1;
                let mut d_hf = Tensor::zeros(&[*steps, h]);
                let mut d_hb = Tensor::zeros(&[*steps, h]);
                d_hf.row_mut(center).copy_from_slice(&d_feat.data()[..h]);
                d_hb.row_mut(center).copy_from_slice(&d_feat.data()[h..]);
                let mut d_x = lstm_backward(fc, fwd, values, grads, &d_hf);
                let d_xb = lstm_backward(bc, bwd, values, grads, &d_hb);
                d_x.data_mut()
                    .iter_mut()
                    .zip(d_xb.data())
                    .for_each(|(a, b)| *a += *b);
                embedding_backward(ids, &d_x, &mut grads[*emb]);
            }
            _ => unreachable!("cache built by the same network"),
        }
    }

    /// Mean scaled loss over `samples`, accumulating parameter gradients.
    /// Generic so it can run on a widened copy of the parameters.
    pub fn loss_and_grad<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        samples: &[Sample],
        negative_weight: f64,
    ) -> Result<f64> {
        let w = F::lit(negative_weight);
        let scale = F::lit(1.0 / samples.len() as f64);
        let mut total = 0.0;
        for s in samples {
            self.check_width(&s.window)?;
            let (logit, cache) = self.forward(&store.values, &s.window)?;
            let (loss, d_logit) = bce_with_weight(sigmoid(logit), s.label, w);
            total += loss.to_f64().unwrap_or(f64::NAN);
            self.backward(&cache, &store.values, &mut store.grads, d_logit * scale);
        }
        Ok(total / samples.len() as f64)
    }

    /// Boundary probability for one window.
    pub fn predict_window(&self, window: &[u32]) -> Result<f32> {
        self.check_width(window)?;
        let (logit, _) = self.forward(&self.store.values, window)?;
        Ok(sigmoid(logit))
    }

    /// Probability after every token, using the dataset window geometry.
    pub fn probabilities(&self, seq: &TokenSeq, vocab: &Vocabulary) -> Vec<f32> {
        let ids = vocab.encode(seq);
        self.config
            .window_spec()
            .all(&ids)
            .iter()
            .map(|w| {
                self.predict_window(w)
                    .expect("windows have the configured width")
            })
            .collect()
    }

    pub fn predict_boundaries(&self, seq: &TokenSeq, vocab: &Vocabulary) -> BoundarySet {
        let t = self.config.threshold;
        self.probabilities(seq, vocab)
            .into_iter()
            .enumerate()
            .filter(|&(_, p)| p as f64 >= t)
            .map(|(i, _)| i)
            .collect()
    }

    /// Fraction (percent) of samples classified correctly at the threshold.
    pub fn sample_accuracy(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let t = self.config.threshold;
        let correct: usize = samples
            .par_iter()
            .map(|s| {
                self.predict_window(&s.window)
                    .map(|p| usize::from((p as f64 >= t) == s.label))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(100.0 * correct as f64 / samples.len() as f64)
    }

    /// Weight on the negative class used by [`BoundaryModel::train`].
    pub fn negative_weight(&self, stats: &ClassStats) -> Result<f64> {
        match (self.config.arch, self.config.class_weight_ratio) {
            (BoundaryArch::Bilstm, Some(r)) => Ok(r),
            (BoundaryArch::Cnn, _) if !self.config.scaled_loss => Ok(1.0),
            _ => stats.negative_weight(),
        }
    }

    /// Mini-batch Adam on the scaled loss. Single-threaded and fully
    /// determined by `hyper.seed` and the initial weights.
    pub fn train(
        &mut self,
        samples: &[Sample],
        stats: &ClassStats,
        hyper: &TrainConfig,
    ) -> Result<History> {
        hyper.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let neg_w = self.negative_weight(stats)?;
        let mut adam = Adam::new(hyper.adam, &self.store);
        let mut batcher = Batcher::new(samples.len(), hyper.batch_size, hyper.seed);
        let mut history = History::default();
        let mut batch = Vec::with_capacity(hyper.batch_size);
        for epoch in 1..=hyper.epochs {
            let mut loss_sum = 0.0;
            for idx in batcher.epoch() {
                batch.clear();
                batch.extend(idx.iter().map(|&i| samples[i].clone()));
                self.store.zero_grads();
                let mut store = std::mem::take(&mut self.store);
                let loss = self.loss_and_grad(&mut store, &batch, neg_w);
                self.store = store;
                loss_sum += loss? * batch.len() as f64;
                adam.step(&mut self.store);
            }
            let accuracy = self.sample_accuracy(samples)?;
            let stats = EpochStats {
                epoch,
                loss: loss_sum / samples.len() as f64,
                accuracy,
            };
            log::info!(
                "boundary epoch {epoch}: loss {:.5} acc {:.2}%",
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

    /// Predicted boundaries for each sequence, with the end of text always
    /// closing the last sub-part.
    pub fn predict_eval(&self, eval: &[EvalSequence], vocab: &Vocabulary) -> Vec<BoundarySet> {
        eval.par_iter()
            .map(|e| {
                let mut p = self.predict_boundaries(&e.tokens, vocab);
                if !e.tokens.is_empty() {
                    p.insert(e.tokens.len() - 1);
                }
                p
            })
            .collect()
    }

    pub fn evaluate(&self, eval: &[EvalSequence], vocab: &Vocabulary) -> Result<BoundaryMetrics> {
        if eval.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        evaluate_predictions(&self.predict_eval(eval, vocab), eval)
    }
}

/// Position-level confusion counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Percent; with nothing predicted, 100 only if nothing was missed.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.fn_ == 0)
    }

    /// Percent; with nothing to find, 100 only if nothing was predicted.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.fp == 0)
    }
}

fn ratio(num: u64, den: u64, vacuous_ok: bool) -> f64 {
    match (den, vacuous_ok) {
        (0, true) => 100.0,
        (0, false) => 0.0,
        _ => 100.0 * num as f64 / den as f64,
    }
}

/// Percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub multiline_accuracy: f64,
}

impl BoundaryMetrics {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nprecision,{:.4}\nrecall,{:.4}\nf1,{:.4}\naccuracy,{:.4}\nmultiline_accuracy,{:.4}\n",
            self.precision, self.recall, self.f1, self.accuracy, self.multiline_accuracy
        )
    }
}

/// Scores predicted boundary sets against gold. Multi-line accuracy counts
/// exact set matches among sequences with two or more gold sub-parts, and is
/// 0 when there are none.
pub fn evaluate_predictions(
    predicted: &[BoundarySet],
    gold: &[EvalSequence],
) -> Result<BoundaryMetrics> {
    if gold.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    if predicted.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} sequences",
            predicted.len(),
            gold.len()
        )));
    }
    let mut c = Confusion::default();
    let (mut multi, mut exact) = (0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        for i in 0..g.tokens.len() {
            c.add(p.contains(i), g.gold.contains(i));
        }
        if g.subparts() >= 2 {
            multi += 1;
            exact += usize::from(p == &g.gold);
        }
    }
    let (precision, recall) = (c.precision(), c.recall());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let total = c.tp + c.fp + c.fn_ + c.tn;
    let accuracy = ratio(c.tp + c.tn, total, true);
    let multiline_accuracy = if multi == 0 {
        0.0
    } else {
        100.0 * exact as f64 / multi as f64
    };
    Ok(BoundaryMetrics {
        precision,
        recall,
        f1,
        accuracy,
        multiline_accuracy,
    })
}

/// Offset keeping the 3:1:2 left/center/right context split.
pub fn sweep_offset(width: usize) -> usize {
    (2 * width).div_ceil(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window: usize,
    pub offset: usize,
    pub accuracy: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("window,offset,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.4}\n", r.window, r.offset, r.accuracy));
    }
    out
}

/// Trains one fixed-budget model per window width and reports held-out
/// sample accuracy.
pub fn window_sweep(
    train: &[LabeledTokenSeq],
    held_out: &[LabeledTokenSeq],
    vocab: &Vocabulary,
    sizes: &[usize],
    base: &BoundaryConfig,
    hyper: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &width in sizes {
        let offset = sweep_offset(width);
        let config = BoundaryConfig {
            window: width,
            offset,
            ..base.clone()
        };
        let spec = WindowSpec::new(width, offset)?;
        let train_s = corpus_samples(train, vocab, spec);
        let held_s = corpus_samples(held_out, vocab, spec);
        let mut model = BoundaryModel::build(config, hyper.seed)?;
        model.train(&train_s, &class_stats(&train_s), hyper)?;
        let accuracy = model.sample_accuracy(&held_s)?;
        log::info!("window {width}: held-out accuracy {accuracy:.2}%");
        rows.push(SweepRow {
            window: width,
            offset,
            accuracy,
        });
    }
    Ok(rows)
}
