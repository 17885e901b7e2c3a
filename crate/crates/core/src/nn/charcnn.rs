use crate::{Error, Result};

use super::init::Init;
use super::layers::{conv1d_backward, conv1d_forward, embedding_backward, embedding_forward};
use super::{ParamId, ParamStore, Scalar, Tensor, Tensors};

/// One group of character filters sharing a width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CharKernel {
    pub width: usize,
    pub count: usize,
    pub w: ParamId,
    pub b: ParamId,
}

/// Character embedding table plus filter groups.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CharCnnParams {
    pub table: ParamId,
    pub char_dim: usize,
    pub kernels: Vec<CharKernel>,
}

impl CharCnnParams {
    /// `groups` lists `(width, count)` pairs.
    pub fn register(
        store: &mut ParamStore<f32>,
        prefix: &str,
        n_chars: usize,
        char_dim: usize,
        groups: &[(usize, usize)],
        init: &mut Init,
    ) -> Result<Self> {
        let table = store.add(
            format!("{prefix}.char_emb"),
            init.uniform(&[n_chars, char_dim], 0.05),
        )?;
        let mut kernels = Vec::with_capacity(groups.len());
        for &(width, count) in groups {
            if width == 0 || count == 0 {
                return Err(Error::InvalidConfig(format!(
                    "char kernel ({width}, {count})"
                )));
            }
            let w = store.add(
                format!("{prefix}.w{width}"),
                init.glorot(&[count, width, char_dim], width * char_dim, count),
            )?;
            let b = store.add(format!("{prefix}.b{width}"), Tensor::zeros(&[count]))?;
            kernels.push(CharKernel { width, count, w, b });
        }
        Ok(Self {
            table,
            char_dim,
            kernels,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.kernels.iter().map(|k| k.count).sum()
    }
}

#[derive(Clone, Debug)]
struct GroupCache<F> {
    argmax: Vec<usize>,
    out: Vec<F>,
}

#[derive(Clone, Debug)]
pub struct CharCnnCache<F> {
    ids: Vec<u32>,
    emb: Tensor<F>,
    groups: Vec<Option<GroupCache<F>>>,
}

/// Word feature vector: per filter group a valid convolution over the
/// character embeddings, max over time, then `tanh`. Groups wider than the
/// word contribute zeros.
pub fn char_cnn_forward<F: Scalar>(
    ids: &[u32],
    p: &CharCnnParams,
    values: &Tensors<F>,
) -> Result<(Vec<F>, CharCnnCache<F>)> {
    let emb = embedding_forward(ids, &values[p.table])?;
    let mut features = Vec::with_capacity(p.output_dim());
    let mut groups = Vec::with_capacity(p.kernels.len());
    for k in &p.kernels {
        if ids.len() < k.width {
            features.extend(std::iter::repeat_n(F::zero(), k.count));
            groups.push(None);
            continue;
        }
        let conv = conv1d_forward(&emb, &values[k.w], &values[k.b], 1)?;
        let mut argmax = Vec::with_capacity(k.count);
        let mut out = Vec::with_capacity(k.count);
        for f in 0..k.count {
            let mut best = 0;
            for t in 1..conv.rows() {
                if conv.row(t)[f] > conv.row(best)[f] {
                    best = t;
                }
            }
            argmax.push(best);
            out.push(conv.row(best)[f].tanh());
        }
        features.extend_from_slice(&out);
        groups.push(Some(GroupCache { argmax, out }));
    }
    Ok((
        features,
        CharCnnCache {
            ids: ids.to_vec(),
            emb,
            groups,
        },
    ))
}

pub fn char_cnn_backward<F: Scalar>(
    cache: &CharCnnCache<F>,
    p: &CharCnnParams,
    values: &Tensors<F>,
    grads: &mut Tensors<F>,
    d_out: &[F],
) {
    let mut d_emb = Tensor::zeros(cache.emb.shape());
    let mut offset = 0;
    for (k, group) in p.kernels.iter().zip(&cache.groups) {
        let d = &d_out[offset..offset + k.count];
        offset += k.count;
        let Some(g) = group else { continue };
        let t_out = cache.ids.len() - k.width + 1;
        let mut d_conv = Tensor::zeros(&[t_out, k.count]);
        for f in 0..k.count {
            let y = g.out[f];
            d_conv.row_mut(g.argmax[f])[f] = d[f] * (F::one() - y * y);
        }
        let [dw, db] = grads.many_mut([k.w, k.b]);
        conv1d_backward(
            &cache.emb,
            &values[k.w],
            1,
            &d_conv,
            dw,
            db,
            Some(&mut d_emb),
        );
    }
    embedding_backward(&cache.ids, &d_emb, &mut grads[p.table]);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> (ParamStore<f32>, CharCnnParams) {
        let mut store = ParamStore::new();
        let p = CharCnnParams::register(
            &mut store,
            "c",
            28,
            8,
            &[(1, 5), (2, 10), (3, 15)],
            &mut Init::new(3),
        )
        .unwrap();
        (store, p)
    }

    #[test]
    fn output_is_thirty_wide() {
        let (store, p) = params();
        assert_eq!(p.output_dim(), 30);
        for word in [&[5u32][..], &[2, 3], &[2, 3, 4, 5, 6, 7, 8]] {
            let (f, _) = char_cnn_forward(word, &p, &store.values).unwrap();
            assert_eq!(f.len(), 30);
        }
    }

    #[test]
    fn one_char_word_zeroes_wider_groups() {
        let (store, p) = params();
        let (f, _) = char_cnn_forward(&[7], &p, &store.values).unwrap();
        assert!(f[5..].iter().all(|&v| v == 0.0));
        assert!(f[..5].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn deterministic() {
        let (store, p) = params();
        let a = char_cnn_forward(&[4, 9, 9, 2], &p, &store.values)
            .unwrap()
            .0;
        let b = char_cnn_forward(&[4, 9, 9, 2], &p, &store.values)
            .unwrap()
            .0;
        assert_eq!(a, b);
    }
}
