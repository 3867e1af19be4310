//! Synthetic tensor contents for codec measurements.

use half::f16;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::frame::Codec;
use crate::error::{Error, Result};
use crate::graph::{DataType, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorSource {
    /// Every bit pattern of the element type equally likely.
    RandomUniform,
    /// Per-channel linear ramps over the spatial grid.
    Smooth,
    AllZero,
}

impl std::str::FromStr for TensorSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random_uniform" => Ok(TensorSource::RandomUniform),
            "smooth" => Ok(TensorSource::Smooth),
            "zero" | "zeros" | "all_zero" => Ok(TensorSource::AllZero),
            other => Err(Error::Invalid(format!("unknown tensor source `{other}`"))),
        }
    }
}

/// Little-endian tensor bytes for `shape` in `dtype`.
pub fn generate_tensor(source: TensorSource, shape: &TensorShape, dtype: DataType, seed: u64) -> Vec<u8> {
    let n = shape.numel() as usize;
    let len = n * dtype.width();
    match source {
        TensorSource::AllZero => vec![0; len],
        TensorSource::RandomUniform => {
            let mut out = vec![0; len];
            ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut out);
            out
        }
        TensorSource::Smooth => {
            let dims = shape.dims();
            let w = *dims.last().unwrap();
            let h = if dims.len() >= 2 { dims[dims.len() - 2] } else { 1 };
            let plane = h * w;
            let mut out = Vec::with_capacity(len);
            for i in 0..n {
                let c = i / plane;
                let (y, x) = ((i % plane) / w, i % w);
                let v = 0.5 * (y as f32 / h as f32 + x as f32 / w as f32) + 0.1 * (c % 8) as f32;
                match dtype {
                    DataType::F32 => out.extend_from_slice(&v.to_le_bytes()),
                    DataType::F16 => out.extend_from_slice(&f16::from_f32(v).to_le_bytes()),
                    DataType::U8 => out.push((v.min(1.0) * 255.0).round() as u8),
                }
            }
            out
        }
    }
}

/// Compressed size over raw size for a generated tensor.
pub fn measure_codec_ratio(
    source: TensorSource,
    shape: &TensorShape,
    dtype: DataType,
    codec: Codec,
    seed: u64,
) -> f64 {
    let raw = generate_tensor(source, shape, dtype, seed);
    if raw.is_empty() {
        return 1.0;
    }
    codec.compress(&raw).len() as f64 / raw.len() as f64
}
