//! `VMW1` weight files.
//!
//! Layout (little-endian): magic `VMW1`, `u32` version, `u8` quantized flag,
//! `u32` tensor count, then per tensor: `u32` name length, name bytes,
//! `u32` rank, `rank × u32` dims, and either `n × f32` values or `n × i8`
//! values followed by an `f32` scale and an `i8` zero point.

use std::io::{Read, Write};

use crate::{Error, Result};

use super::quant::{quantize8, QuantizedBlob};
use super::{ParamStore, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VMW1";
const VERSION: u32 = 1;

/// A weight file after decoding; quantized payloads are dequantized.
#[derive(Clone, Debug)]
pub struct LoadedWeights {
    pub quantized: bool,
    pub store: ParamStore<f32>,
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_weights<W: Write>(mut w: W, store: &ParamStore<f32>, quantized: bool) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    put_u32(&mut w, VERSION)?;
    w.write_all(&[quantized as u8])?;
    put_u32(&mut w, store.len() as u32)?;
    let blobs = quantized.then(|| quantize8(store));
    for (i, (name, t)) in store.names().iter().zip(store.values.iter()).enumerate() {
        put_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.shape().len() as u32)?;
        for &d in t.shape() {
            put_u32(&mut w, d as u32)?;
        }
        match &blobs {
            Some(b) => {
                let blob = &b[i].1;
                let bytes: Vec<u8> = blob.payload.iter().map(|&q| q as u8).collect();
                w.write_all(&bytes)?;
                w.write_all(&blob.scale.to_le_bytes())?;
                w.write_all(&[blob.zero_point as u8])?;
            }
            None => {
                let mut bytes = Vec::with_capacity(t.len() * 4);
                for v in t.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&bytes)?;
            }
        }
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut r: R) -> Result<LoadedWeights> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported weight file version {version}"
        )));
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let quantized = match flag[0] {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("bad quantized flag {f}"))),
    };
    let count = get_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = get_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| get_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let tensor = if quantized {
            let mut bytes = vec![0u8; n];
            r.read_exact(&mut bytes)?;
            let mut scale = [0u8; 4];
            r.read_exact(&mut scale)?;
            let mut zp = [0u8; 1];
            r.read_exact(&mut zp)?;
            QuantizedBlob {
                shape,
                scale: f32::from_le_bytes(scale),
                zero_point: zp[0] as i8,
                payload: bytes.into_iter().map(|b| b as i8).collect(),
            }
            .dequantize()?
        } else {
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Tensor::new(&shape, data)?
        };
        store.add(name, tensor)?;
    }
    Ok(LoadedWeights { quantized, store })
}
