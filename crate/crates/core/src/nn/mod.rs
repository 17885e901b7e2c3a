//! Dense-tensor neural network substrate.
//!
//! Layers are free functions with explicit forward caches and backward
//! passes that accumulate into a [`ParamStore`]'s gradients. Everything is
//! generic over [`Scalar`]: training and inference use `f32`, finite
//! difference checks run the same code in `f64`.

// index loops read closest to the math in these kernels
#![allow(clippy::needless_range_loop)]

mod attention;
mod charcnn;
mod gradcheck;
mod init;
mod io;
mod layers;
mod loss;
mod lstm;
mod optim;
mod params;
mod quant;
mod tensor;
mod train;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use attention::{
    feature_attention_backward, feature_attention_forward, temporal_attention_backward,
    temporal_attention_forward, FeatureAttentionCache, FeatureAttentionParams,
    TemporalAttentionCache, TemporalAttentionParams,
};
pub use charcnn::{char_cnn_backward, char_cnn_forward, CharCnnCache, CharCnnParams, CharKernel};
pub use gradcheck::{
    check_layers, grad_check, relative_error, GradCheckReport, LayerCheck, REL_ERR_FLOOR,
};
pub use init::{glorot_uniform, orthogonal, Init};
pub use io::{read_weights, write_weights, LoadedWeights, WEIGHTS_MAGIC};
pub use layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, embedding_backward,
    embedding_forward, maxpool1d_backward, maxpool1d_forward, relu, relu_backward, sigmoid,
    softmax, softmax_backward, softmax_rows, tanh, MaxPoolCache,
};
pub use loss::{bce_with_weight, cross_entropy, weighted_bce, PROB_CLAMP};
pub use lstm::{lstm_backward, lstm_forward, Direction, LstmCache, LstmParams};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Tensors};
pub use quant::{dequantize8, quantize8, QuantizedBlob};
pub use tensor::Tensor;
pub use train::{Batcher, EpochStats, History, TrainConfig};

/// Floating point type the layers can run in.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Converts an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let mut acc = lanes.iter().copied().sum::<F>();
    for (x, y) in ra.iter().zip(rb) {
        acc += *x * *y;
    }
    acc
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}
