//! Emoji insertion for dictated, punctuation-free text.
//!
//! The crate is organised as a pipeline of small pieces:
//!
//! - [`textnorm`]: tokenization, contraction and chat short-form expansion.
//! - [`tagger`]: closed-class trigger tagging (CC/IN/WP/WP$/WDT) and sub-part
//!   boundary candidates.
//! - [`dataset`]: vocabularies, label derivation, sliding windows and the
//!   binary samples cache.
//! - [`nn`]: a small dense-tensor neural substrate with hand-written
//!   backward passes, Adam, gradient checking and int8 storage.
//! - [`boundary`]: the dilated-CNN boundary detector and its BiLSTM baseline.
//! - [`emoji`]: the attention-based char-aware LSTM emoji classifier and its
//!   baselines.
//! - [`pipeline`]: annotation, rendering, end-to-end accuracy and latency
//!   benchmarking.
//!
//! Every layer is generic over [`nn::Scalar`] so that models train and run in
//! `f32` while gradient checks run the very same code in `f64`.

pub mod artifact;
pub mod boundary;
pub mod dataset;
pub mod emoji;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod tagger;
pub mod textnorm;

pub use error::{Error, Result};
