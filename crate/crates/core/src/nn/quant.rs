use crate::Result;

use super::{ParamStore, Tensor};

/// Per-tensor symmetric int8 encoding: `value ≈ (q - zero_point) · scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedBlob {
    pub shape: Vec<usize>,
    pub scale: f32,
    pub zero_point: i8,
    pub payload: Vec<i8>,
}

impl QuantizedBlob {
    pub fn quantize(t: &Tensor<f32>) -> Self {
        let max_abs = t.max_abs();
        let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
        let payload = t
            .data()
            .iter()
            .map(|&x| (x / scale).round().clamp(-127.0, 127.0) as i8)
            .collect();
        Self {
            shape: t.shape().to_vec(),
            scale,
            zero_point: 0,
            payload,
        }
    }

    pub fn dequantize(&self) -> Result<Tensor<f32>> {
        let zp = self.zero_point as f32;
        Tensor::new(
            &self.shape,
            self.payload
                .iter()
                .map(|&q| (q as f32 - zp) * self.scale)
                .collect(),
        )
    }
}

pub fn quantize8(store: &ParamStore<f32>) -> Vec<(String, QuantizedBlob)> {
    store
        .names()
        .iter()
        .zip(store.values.iter())
        .map(|(n, t)| (n.clone(), QuantizedBlob::quantize(t)))
        .collect()
}

pub fn dequantize8(blobs: &[(String, QuantizedBlob)]) -> Result<ParamStore<f32>> {
    let mut store = ParamStore::new();
    for (name, blob) in blobs {
        store.add(name.clone(), blob.dequantize()?)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_tensor_uses_unit_scale() {
        let b = QuantizedBlob::quantize(&Tensor::zeros(&[3, 2]));
        assert_eq!(b.scale, 1.0);
        assert!(b.payload.iter().all(|&q| q == 0));
    }

    proptest! {
        #[test]
        fn round_trip_error_within_half_scale(data in prop::collection::vec(-50.0f32..50.0, 1..200)) {
            let n = data.len();
            let t = Tensor::new(&[n], data).unwrap();
            let b = QuantizedBlob::quantize(&t);
            let back = b.dequantize().unwrap();
            for (x, y) in t.data().iter().zip(back.data()) {
                prop_assert!((x - y).abs() <= b.scale * 0.5 * (1.0 + 1e-5));
            }
        }
    }
}
