use crate::{Error, Result};

use super::init::Init;
use super::layers::softmax;
use super::{axpy, dot, ParamId, ParamStore, Scalar, Tensor, Tensors};

/// Learned scorer that gates a word vector against a character vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureAttentionParams {
    pub u_word: ParamId,
    pub u_char: ParamId,
    pub bias: ParamId,
    pub word_dim: usize,
    pub char_dim: usize,
}

impl FeatureAttentionParams {
    pub fn register(
        store: &mut ParamStore<f32>,
        prefix: &str,
        word_dim: usize,
        char_dim: usize,
        init: &mut Init,
    ) -> Result<Self> {
        let u_word = store.add(
            format!("{prefix}.u_word"),
            init.glorot(&[word_dim], word_dim, 1),
        )?;
        let u_char = store.add(
            format!("{prefix}.u_char"),
            init.glorot(&[char_dim], char_dim, 1),
        )?;
        let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(&[2]))?;
        Ok(Self {
            u_word,
            u_char,
            bias,
            word_dim,
            char_dim,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.word_dim + self.char_dim
    }
}

#[derive(Clone, Debug)]
pub struct FeatureAttentionCache<F> {
    word: Vec<F>,
    chars: Vec<F>,
    gates: [F; 2],
}

impl<F: Scalar> FeatureAttentionCache<F> {
    /// Softmax weights of the word and character parts.
    pub fn gates(&self) -> [F; 2] {
        self.gates
    }
}

/// `[a_w · word ; a_c · chars]` with `(a_w, a_c) = softmax(u_w·word + b_w,
/// u_c·chars + b_c)`.
pub fn feature_attention_forward<F: Scalar>(
    word: &[F],
    chars: &[F],
    p: &FeatureAttentionParams,
    values: &Tensors<F>,
) -> Result<(Vec<F>, FeatureAttentionCache<F>)> {
    if word.len() != p.word_dim || chars.len() != p.char_dim {
        return Err(Error::ShapeMismatch(format!(
            "feature attention expects ({}, {}), got ({}, {})",
            p.word_dim,
            p.char_dim,
            word.len(),
            chars.len()
        )));
    }
    let b = values[p.bias].data();
    let scores = [
        dot(values[p.u_word].data(), word) + b[0],
        dot(values[p.u_char].data(), chars) + b[1],
    ];
    let a = softmax(&scores);
    let gates = [a[0], a[1]];
    let mut out = Vec::with_capacity(p.output_dim());
    out.extend(word.iter().map(|&v| v * gates[0]));
    out.extend(chars.iter().map(|&v| v * gates[1]));
    Ok((
        out,
        FeatureAttentionCache {
            word: word.to_vec(),
            chars: chars.to_vec(),
            gates,
        },
    ))
}

/// Returns `(d_word, d_chars)`.
pub fn feature_attention_backward<F: Scalar>(
    cache: &FeatureAttentionCache<F>,
    p: &FeatureAttentionParams,
    values: &Tensors<F>,
    grads: &mut Tensors<F>,
    d_out: &[F],
) -> (Vec<F>, Vec<F>) {
    let (dw_out, dc_out) = d_out.split_at(p.word_dim);
    let [a0, a1] = cache.gates;
    let da = [dot(dw_out, &cache.word), dot(dc_out, &cache.chars)];
    let mean = a0 * da[0] + a1 * da[1];
    let ds = [a0 * (da[0] - mean), a1 * (da[1] - mean)];

    let mut d_word: Vec<F> = dw_out.iter().map(|&g| g * a0).collect();
    axpy(ds[0], values[p.u_word].data(), &mut d_word);
    let mut d_chars: Vec<F> = dc_out.iter().map(|&g| g * a1).collect();
    axpy(ds[1], values[p.u_char].data(), &mut d_chars);

    let [gu_w, gu_c, g_b] = grads.many_mut([p.u_word, p.u_char, p.bias]);
    axpy(ds[0], &cache.word, gu_w.data_mut());
    axpy(ds[1], &cache.chars, gu_c.data_mut());
    g_b.data_mut()[0] += ds[0];
    g_b.data_mut()[1] += ds[1];
    (d_word, d_chars)
}

/// Additive attention pooling over time steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TemporalAttentionParams {
    pub w: ParamId,
    pub u: ParamId,
    pub dim: usize,
    pub attn_dim: usize,
}

impl TemporalAttentionParams {
    pub fn register(
        store: &mut ParamStore<f32>,
        prefix: &str,
        dim: usize,
        attn_dim: usize,
        init: &mut Init,
    ) -> Result<Self> {
        let w = store.add(
            format!("{prefix}.w"),
            init.glorot(&[attn_dim, dim], dim, attn_dim),
        )?;
        let u = store.add(format!("{prefix}.u"), init.glorot(&[attn_dim], attn_dim, 1))?;
        Ok(Self {
            w,
            u,
            dim,
            attn_dim,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TemporalAttentionCache<F> {
    h: Tensor<F>,
    m: Vec<Vec<F>>,
    alpha: Vec<F>,
}

impl<F: Scalar> TemporalAttentionCache<F> {
    pub fn weights(&self) -> &[F] {
        &self.alpha
    }
}

/// `Σ_t α_t h_t` with `α = softmax_t(u · tanh(W h_t))`.
pub fn temporal_attention_forward<F: Scalar>(
    h: &Tensor<F>,
    p: &TemporalAttentionParams,
    values: &Tensors<F>,
) -> Result<(Vec<F>, TemporalAttentionCache<F>)> {
    if h.row_len() != p.dim {
        return Err(Error::ShapeMismatch(format!(
            "temporal attention expects width {}, got {}",
            p.dim,
            h.row_len()
        )));
    }
    let (w, u) = (&values[p.w], &values[p.u]);
    let mut m = Vec::with_capacity(h.rows());
    let mut scores = Vec::with_capacity(h.rows());
    for t in 0..h.rows() {
        let mt: Vec<F> = (0..p.attn_dim)
            .map(|a| dot(w.row(a), h.row(t)).tanh())
            .collect();
        scores.push(dot(u.data(), &mt));
        m.push(mt);
    }
    let alpha = softmax(&scores);
    let mut out = vec![F::zero(); p.dim];
    for (t, &a) in alpha.iter().enumerate() {
        axpy(a, h.row(t), &mut out);
    }
    Ok((
        out,
        TemporalAttentionCache {
            h: h.clone(),
            m,
            alpha,
        },
    ))
}

pub fn temporal_attention_backward<F: Scalar>(
    cache: &TemporalAttentionCache<F>,
    p: &TemporalAttentionParams,
    values: &Tensors<F>,
    grads: &mut Tensors<F>,
    d_out: &[F],
) -> Tensor<F> {
    let (w, u) = (&values[p.w], &values[p.u]);
    let t_len = cache.h.rows();
    let d_alpha: Vec<F> = (0..t_len).map(|t| dot(d_out, cache.h.row(t))).collect();
    let mean: F = cache.alpha.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
    let mut dh = Tensor::zeros(cache.h.shape());
    let [gw, gu] = grads.many_mut([p.w, p.u]);
    let mut dz = vec![F::zero(); p.attn_dim];
    for t in 0..t_len {
        let a = cache.alpha[t];
        let de = a * (d_alpha[t] - mean);
        let mt = &cache.m[t];
        axpy(de, mt, gu.data_mut());
        for k in 0..p.attn_dim {
            dz[k] = de * u.data()[k] * (F::one() - mt[k] * mt[k]);
        }
        let ht = cache.h.row(t);
        let dht = dh.row_mut(t);
        axpy(a, d_out, dht);
        for k in 0..p.attn_dim {
            if dz[k] == F::zero() {
                continue;
            }
            axpy(dz[k], ht, gw.row_mut(k));
            axpy(dz[k], w.row(k), dht);
        }
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_attention_shape_and_symmetry() {
        let mut store = ParamStore::new();
        let p =
            FeatureAttentionParams::register(&mut store, "fa", 16, 30, &mut Init::new(0)).unwrap();
        store.value_mut(p.u_word).fill(0.0);
        store.value_mut(p.u_char).fill(0.0);
        let word = vec![1.0f32; 16];
        let chars = vec![2.0f32; 30];
        let (out, cache) = feature_attention_forward(&word, &chars, &p, &store.values).unwrap();
        assert_eq!(out.len(), 46);
        assert_eq!(cache.gates(), [0.5, 0.5]);
        assert_eq!(out[0], 0.5);
        assert_eq!(out[16], 1.0);
    }

    #[test]
    fn temporal_attention_properties() {
        let mut store = ParamStore::new();
        let p =
            TemporalAttentionParams::register(&mut store, "ta", 4, 3, &mut Init::new(1)).unwrap();
        let single = Tensor::<f32>::from_f64(&[1, 4], &[0.1, -0.2, 0.3, 0.4]).unwrap();
        let (out, c) = temporal_attention_forward(&single, &p, &store.values).unwrap();
        assert_eq!(out, single.data());
        assert_eq!(c.weights(), [1.0]);

        let same = Tensor::<f64>::from_f64(&[3, 4], &[0.5, 1.0, -1.0, 2.0].repeat(3)).unwrap();
        let s64 = store.cast::<f64>();
        let (out, c) = temporal_attention_forward(&same, &p, &s64.values).unwrap();
        for (a, b) in out.iter().zip([0.5, 1.0, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
