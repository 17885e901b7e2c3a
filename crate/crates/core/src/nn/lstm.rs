use crate::Result;

use super::init::Init;
use super::layers::sigmoid;
use super::{axpy, dot, ParamId, ParamStore, Scalar, Tensor, Tensors};

/// Which way a recurrent layer walks the sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Parameter handles of one LSTM layer. Gate order in the stacked `4H`
/// dimension is input, forget, cell, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LstmParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Glorot input kernel, orthogonal recurrent kernel, forget bias 1.
    pub fn register(
        store: &mut ParamStore<f32>,
        prefix: &str,
        input: usize,
        hidden: usize,
        init: &mut Init,
    ) -> Result<Self> {
        let wx = store.add(
            format!("{prefix}.wx"),
            init.glorot(&[4 * hidden, input], input, 4 * hidden),
        )?;
        let wh = store.add(format!("{prefix}.wh"), init.orthogonal(4 * hidden, hidden))?;
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden]
            .iter_mut()
            .for_each(|v| *v = 1.0);
        let b = store.add(format!("{prefix}.b"), bias)?;
        Ok(Self {
            wx,
            wh,
            b,
            input,
            hidden,
        })
    }
}

/// Everything the backward pass needs, indexed by processing step.
#[derive(Clone, Debug)]
pub struct LstmCache<F> {
    x: Tensor<F>,
    order: Vec<usize>,
    h_prev: Vec<Vec<F>>,
    c_prev: Vec<Vec<F>>,
    gates: Vec<Vec<F>>,
    tanh_c: Vec<Vec<F>>,
}

/// Runs the recurrence from a zero state. Output row `t` is the hidden
/// state produced at input position `t`, whichever the direction.
pub fn lstm_forward<F: Scalar>(
    x: &Tensor<F>,
    p: &LstmParams,
    values: &Tensors<F>,
    direction: Direction,
) -> Result<(Tensor<F>, LstmCache<F>)> {
    let h = p.hidden;
    let t_len = x.rows();
    if x.row_len() != p.input {
        return Err(crate::Error::ShapeMismatch(format!(
            "lstm expects {} input features, got {}",
            p.input,
            x.row_len()
        )));
    }
    let (wx, wh, b) = (&values[p.wx], &values[p.wh], &values[p.b]);
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..t_len).collect(),
        Direction::Backward => (0..t_len).rev().collect(),
    };
    let mut out = Tensor::zeros(&[t_len, h]);
    let mut hs = vec![F::zero(); h];
    let mut cs = vec![F::zero(); h];
    let mut cache = LstmCache {
        x: x.clone(),
        order: order.clone(),
        h_prev: Vec::with_capacity(t_len),
        c_prev: Vec::with_capacity(t_len),
        gates: Vec::with_capacity(t_len),
        tanh_c: Vec::with_capacity(t_len),
    };
    let mut z = vec![F::zero(); 4 * h];
    for &t in &order {
        let xt = x.row(t);
        for r in 0..4 * h {
            z[r] = b.data()[r] + dot(wx.row(r), xt) + dot(wh.row(r), &hs);
        }
        for r in 0..h {
            z[r] = sigmoid(z[r]);
            z[h + r] = sigmoid(z[h + r]);
            z[2 * h + r] = z[2 * h + r].tanh();
            z[3 * h + r] = sigmoid(z[3 * h + r]);
        }
        cache.h_prev.push(hs.clone());
        cache.c_prev.push(cs.clone());
        let mut tc = vec![F::zero(); h];
        for r in 0..h {
            cs[r] = z[h + r] * cs[r] + z[r] * z[2 * h + r];
            tc[r] = cs[r].tanh();
            hs[r] = z[3 * h + r] * tc[r];
        }
        out.row_mut(t).copy_from_slice(&hs);
        cache.gates.push(z.clone());
        cache.tanh_c.push(tc);
    }
    Ok((out, cache))
}

/// Backpropagation through time; returns the gradient w.r.t. the input.
pub fn lstm_backward<F: Scalar>(
    cache: &LstmCache<F>,
    p: &LstmParams,
    values: &Tensors<F>,
    grads: &mut Tensors<F>,
    d_out: &Tensor<F>,
) -> Tensor<F> {
    let h = p.hidden;
    let (wx, wh) = (&values[p.wx], &values[p.wh]);
    let [d_wx, d_wh, d_b] = grads.many_mut([p.wx, p.wh, p.b]);
    let mut dx = Tensor::zeros(cache.x.shape());
    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    let mut dz = vec![F::zero(); 4 * h];
    let one = F::one();
    for step in (0..cache.order.len()).rev() {
        let t = cache.order[step];
        let g = &cache.gates[step];
        let tc = &cache.tanh_c[step];
        let c_prev = &cache.c_prev[step];
        let d_row = d_out.row(t);
        for r in 0..h {
            let (ig, fg, cg, og) = (g[r], g[h + r], g[2 * h + r], g[3 * h + r]);
            let dh = d_row[r] + dh_next[r];
            let dc = dh * og * (one - tc[r] * tc[r]) + dc_next[r];
            dz[r] = dc * cg * ig * (one - ig);
            dz[h + r] = dc * c_prev[r] * fg * (one - fg);
            dz[2 * h + r] = dc * ig * (one - cg * cg);
            dz[3 * h + r] = dh * tc[r] * og * (one - og);
            dc_next[r] = dc * fg;
        }
        let xt = cache.x.row(t);
        let hp = &cache.h_prev[step];
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        let dxt = dx.row_mut(t);
        for r in 0..4 * h {
            let gr = dz[r];
            if gr == F::zero() {
                continue;
            }
            d_b.data_mut()[r] += gr;
            axpy(gr, xt, d_wx.row_mut(r));
            axpy(gr, hp, d_wh.row_mut(r));
            axpy(gr, wx.row(r), dxt);
            axpy(gr, wh.row(r), &mut dh_next);
        }
    }
    dx
}
