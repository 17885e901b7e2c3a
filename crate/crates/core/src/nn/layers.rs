use crate::{Error, Result};

use super::{axpy, dot, Scalar, Tensor};

/// Row lookup: `(len(ids), dim)`.
pub fn embedding_forward<F: Scalar>(ids: &[u32], table: &Tensor<F>) -> Result<Tensor<F>> {
    if ids.is_empty() {
        return Err(Error::InputTooShort { len: 0, needed: 1 });
    }
    let dim = table.row_len();
    let mut data = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id as usize >= table.rows() {
            return Err(Error::IdOutOfRange {
                id,
                rows: table.rows(),
            });
        }
        data.extend_from_slice(table.row(id as usize));
    }
    Tensor::new(&[ids.len(), dim], data)
}

/// Scatters `d_out` rows back onto the looked-up table rows.
pub fn embedding_backward<F: Scalar>(ids: &[u32], d_out: &Tensor<F>, d_table: &mut Tensor<F>) {
    for (t, &id) in ids.iter().enumerate() {
        axpy(F::one(), d_out.row(t), d_table.row_mut(id as usize));
    }
}

fn conv_dims<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    dilation: usize,
) -> Result<(usize, usize, usize, usize)> {
    if w.shape().len() != 3 || x.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "conv1d wants input (T, C_in) and filters (C_out, K, C_in), got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let (c_out, k, c_in) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if x.shape()[1] != c_in {
        return Err(Error::ShapeMismatch(format!(
            "conv1d input has {} channels, filters expect {c_in}",
            x.shape()[1]
        )));
    }
    let span = (k - 1) * dilation + 1;
    let t = x.rows();
    if t < span {
        return Err(Error::InputTooShort {
            len: t,
            needed: span,
        });
    }
    Ok((t - span + 1, c_out, k, c_in))
}

/// Valid (unpadded) dilated 1-D convolution.
///
/// `x` is `(T, C_in)`, `w` is `(C_out, K, C_in)`, `b` is `(C_out)`; the
/// output is `(T - (K-1)·dilation, C_out)`.
pub fn conv1d_forward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
    dilation: usize,
) -> Result<Tensor<F>> {
    let (t_out, c_out, k, c_in) = conv_dims(x, w, dilation)?;
    let mut patch = vec![F::zero(); k * c_in];
    let mut out = Vec::with_capacity(t_out * c_out);
    for t in 0..t_out {
        for j in 0..k {
            patch[j * c_in..(j + 1) * c_in].copy_from_slice(x.row(t + j * dilation));
        }
        for o in 0..c_out {
            out.push(b.data()[o] + dot(w.row(o), &patch));
        }
    }
    Tensor::new(&[t_out, c_out], out)
}

pub fn conv1d_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    dilation: usize,
    d_out: &Tensor<F>,
    d_w: &mut Tensor<F>,
    d_b: &mut Tensor<F>,
    mut d_x: Option<&mut Tensor<F>>,
) {
    let (t_out, c_out, k, c_in) = conv_dims(x, w, dilation).expect("forward succeeded");
    let mut patch = vec![F::zero(); k * c_in];
    let mut d_patch = vec![F::zero(); k * c_in];
    for t in 0..t_out {
        for j in 0..k {
            patch[j * c_in..(j + 1) * c_in].copy_from_slice(x.row(t + j * dilation));
        }
        d_patch.iter_mut().for_each(|v| *v = F::zero());
        let g = d_out.row(t);
        for o in 0..c_out {
            let go = g[o];
            if go == F::zero() {
                continue;
            }
            d_b.data_mut()[o] += go;
            axpy(go, &patch, d_w.row_mut(o));
            if d_x.is_some() {
                axpy(go, w.row(o), &mut d_patch);
            }
        }
        if let Some(dx) = d_x.as_deref_mut() {
            for j in 0..k {
                axpy(
                    F::one(),
                    &d_patch[j * c_in..(j + 1) * c_in],
                    dx.row_mut(t + j * dilation),
                );
            }
        }
    }
}

/// Argmax routing for [`maxpool1d_backward`].
#[derive(Clone, Debug)]
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

/// Non-overlapping max pooling over time: `(T, C)` → `(T / pool, C)`.
/// Ties resolve to the first index.
pub fn maxpool1d_forward<F: Scalar>(
    x: &Tensor<F>,
    pool: usize,
) -> Result<(Tensor<F>, MaxPoolCache)> {
    let t = x.rows();
    if pool == 0 || t < pool {
        return Err(Error::InputTooShort {
            len: t,
            needed: pool.max(1),
        });
    }
    let c = x.row_len();
    let t_out = t / pool;
    let mut out = Vec::with_capacity(t_out * c);
    let mut argmax = Vec::with_capacity(t_out * c);
    for s in 0..t_out {
        for ch in 0..c {
            let mut best = s * pool;
            for r in s * pool + 1..(s + 1) * pool {
                if x.data()[r * c + ch] > x.data()[best * c + ch] {
                    best = r;
                }
            }
            out.push(x.data()[best * c + ch]);
            argmax.push(best * c + ch);
        }
    }
    Ok((
        Tensor::new(&[t_out, c], out)?,
        MaxPoolCache {
            argmax,
            in_shape: x.shape().to_vec(),
        },
    ))
}

pub fn maxpool1d_backward<F: Scalar>(cache: &MaxPoolCache, d_out: &Tensor<F>) -> Tensor<F> {
    let mut dx = Tensor::zeros(&cache.in_shape);
    for (g, &idx) in d_out.data().iter().zip(&cache.argmax) {
        dx.data_mut()[idx] += *g;
    }
    dx
}

fn dense_dims<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<(usize, usize, usize)> {
    if w.shape().len() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "dense weights must be 2-D, got {:?}",
            w.shape()
        )));
    }
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    if b.len() != n_out {
        return Err(Error::ShapeMismatch(format!(
            "bias has {} values for {n_out} outputs",
            b.len()
        )));
    }
    let rows = if x.shape().len() == 1 { 1 } else { x.rows() };
    if x.len() != rows * n_in {
        return Err(Error::ShapeMismatch(format!(
            "dense input {:?} does not match {n_in} input features",
            x.shape()
        )));
    }
    Ok((rows, n_in, n_out))
}

/// Affine map `y = W x + b` applied to each row of `x`; `W` is `(out, in)`.
/// A 1-D input gives a 1-D output.
pub fn dense_forward<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (rows, n_in, n_out) = dense_dims(x, w, b)?;
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let xr = &x.data()[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            out.push(b.data()[o] + dot(w.row(o), xr));
        }
    }
    if x.shape().len() == 1 {
        Tensor::new(&[n_out], out)
    } else {
        Tensor::new(&[rows, n_out], out)
    }
}

pub fn dense_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    d_out: &Tensor<F>,
    d_w: &mut Tensor<F>,
    d_b: &mut Tensor<F>,
    mut d_x: Option<&mut Tensor<F>>,
) {
    let n_out = w.shape()[0];
    let n_in = w.shape()[1];
    let rows = x.len() / n_in;
    for r in 0..rows {
        let xr = &x.data()[r * n_in..(r + 1) * n_in];
        let g = &d_out.data()[r * n_out..(r + 1) * n_out];
        for o in 0..n_out {
            let go = g[o];
            if go == F::zero() {
                continue;
            }
            d_b.data_mut()[o] += go;
            axpy(go, xr, d_w.row_mut(o));
            if let Some(dx) = d_x.as_deref_mut() {
                axpy(go, w.row(o), &mut dx.data_mut()[r * n_in..(r + 1) * n_in]);
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn tanh<F: Scalar>(x: F) -> F {
    x.tanh()
}

pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(F::zero()));
    y
}

/// Gradient of ReLU given its pre-activation input; zero at 0.
pub fn relu_backward<F: Scalar>(x: &Tensor<F>, d_out: &Tensor<F>) -> Tensor<F> {
    let mut d = d_out.clone();
    for (g, v) in d.data_mut().iter_mut().zip(x.data()) {
        if *v <= F::zero() {
            *g = F::zero();
        }
    }
    d
}

/// Max-shifted softmax of a single vector.
pub fn softmax<F: Scalar>(x: &[F]) -> Vec<F> {
    let m = x.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<F> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: F = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Gradient through [`softmax`] given its output `p`.
pub fn softmax_backward<F: Scalar>(p: &[F], d_out: &[F]) -> Vec<F> {
    let mean = dot(p, d_out);
    p.iter()
        .zip(d_out)
        .map(|(&pi, &gi)| pi * (gi - mean))
        .collect()
}

pub fn softmax_rows<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        out.extend(softmax(x.row(r)));
    }
    Tensor::new(x.shape(), out).expect("same shape")
}
