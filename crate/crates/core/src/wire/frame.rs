//! Frame layout (all integers little-endian):
//!
//! | offset     | size      | field                                   |
//! |------------|-----------|-----------------------------------------|
//! | 0          | 4         | magic `SPLT`                            |
//! | 4          | 1         | version (1)                             |
//! | 5          | 1         | dtype code (0 f32, 1 f16, 2 u8)         |
//! | 6          | 1         | codec code (0 none, 1 raw deflate)      |
//! | 7          | 1         | ndim                                    |
//! | 8          | 8         | payload_len (bytes on the wire)         |
//! | 16         | 4 * ndim  | dims, u32 each                          |
//! | 16+4*ndim  | len       | payload                                 |
//! | ...        | 4         | CRC-32 (IEEE) of the on-wire payload    |

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DataType, TensorShape};

pub const MAGIC: [u8; 4] = *b"SPLT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
/// Header plus trailing CRC.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    None,
    /// Raw deflate stream (RFC 1951), no zlib or zip container.
    Deflate,
}

impl Codec {
    pub fn code(self) -> u8 {
        match self {
            Codec::None => 0,
            Codec::Deflate => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Codec::None),
            1 => Some(Codec::Deflate),
            _ => None,
        }
    }

    pub fn compress(self, raw: &[u8]) -> Vec<u8> {
        match self {
            Codec::None => raw.to_vec(),
            Codec::Deflate => {
                let mut enc = DeflateEncoder::new(Vec::with_capacity(raw.len() / 2), Compression::default());
                enc.write_all(raw).expect("write to Vec");
                enc.finish().expect("finish into Vec")
            }
        }
    }

    /// Decompresses exactly `expected` bytes; more or fewer is an error.
    pub fn decompress(self, wire: &[u8], expected: usize) -> Result<Vec<u8>> {
        match self {
            Codec::None => Ok(wire.to_vec()),
            Codec::Deflate => {
                let mut out = Vec::with_capacity(expected);
                DeflateDecoder::new(wire)
                    .take(expected as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|e| Error::Framing(format!("deflate stream: {e}")))?;
                if out.len() != expected {
                    return Err(Error::Framing(format!(
                        "deflate stream inflates to {} bytes, expected {expected}",
                        out.len()
                    )));
                }
                Ok(out)
            }
        }
    }
}

impl std::str::FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Codec::None),
            "deflate" => Ok(Codec::Deflate),
            other => Err(Error::Invalid(format!("unknown codec `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedFrame {
    pub shape: TensorShape,
    pub dtype: DataType,
    pub codec: Codec,
    /// Decompressed tensor bytes.
    pub payload: Vec<u8>,
}

pub fn encode_frame(shape: &TensorShape, dtype: DataType, payload: &[u8], codec: Codec) -> Result<Vec<u8>> {
    let expected = shape.numel() as u128 * dtype.width() as u128;
    if payload.len() as u128 != expected {
        return Err(Error::Framing(format!(
            "payload is {} bytes but {shape} {dtype} needs {expected}",
            payload.len()
        )));
    }
    let ndim = u8::try_from(shape.rank())
        .map_err(|_| Error::Framing(format!("rank {} does not fit in a byte", shape.rank())))?;
    let dims = shape
        .dims()
        .iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::Framing(format!("dim {d} exceeds u32"))))
        .collect::<Result<Vec<u32>>>()?;

    let wire = codec.compress(payload);
    let mut out = Vec::with_capacity(FRAME_OVERHEAD + 4 * dims.len() + wire.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype.code());
    out.push(codec.code());
    out.push(ndim);
    out.extend_from_slice(&(wire.len() as u64).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&wire);
    out.extend_from_slice(&crc32fast::hash(&wire).to_le_bytes());
    Ok(out)
}

/// Full frame length announced by a header, once at least
/// [`HEADER_LEN`] bytes are available.
pub fn frame_len(header: &[u8]) -> Result<usize> {
    if header.len() < HEADER_LEN {
        return Err(Error::IncompleteFrame { needed: HEADER_LEN, available: header.len() });
    }
    if header[0..4] != MAGIC {
        return Err(Error::Protocol(format!("bad magic {:?}", &header[0..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Protocol(format!("unsupported version {}", header[4])));
    }
    let ndim = header[7] as usize;
    let payload_len = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let payload_len = usize::try_from(payload_len)
        .map_err(|_| Error::Protocol(format!("payload length {payload_len} too large")))?;
    HEADER_LEN
        .checked_add(4 * ndim)
        .and_then(|n| n.checked_add(payload_len))
        .and_then(|n| n.checked_add(4))
        .ok_or_else(|| Error::Protocol(format!("payload length {payload_len} too large")))
}

pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame> {
    let total = frame_len(bytes)?;
    let dtype = DataType::from_code(bytes[5])
        .ok_or_else(|| Error::Protocol(format!("unknown dtype code {}", bytes[5])))?;
    let codec = Codec::from_code(bytes[6])
        .ok_or_else(|| Error::Protocol(format!("unknown codec code {}", bytes[6])))?;
    let ndim = bytes[7] as usize;
    if ndim == 0 {
        return Err(Error::Protocol("frame declares zero dims".into()));
    }
    if bytes.len() < total {
        return Err(Error::IncompleteFrame { needed: total, available: bytes.len() });
    }
    if bytes.len() > total {
        return Err(Error::Framing(format!("{} trailing bytes after frame", bytes.len() - total)));
    }

    let dims: Vec<usize> = bytes[HEADER_LEN..HEADER_LEN + 4 * ndim]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let shape = TensorShape::new(dims).map_err(|e| Error::Protocol(e.to_string()))?;

    let start = HEADER_LEN + 4 * ndim;
    let wire = &bytes[start..total - 4];
    let expected_crc = u32::from_le_bytes(bytes[total - 4..total].try_into().unwrap());
    let actual_crc = crc32fast::hash(wire);
    if actual_crc != expected_crc {
        return Err(Error::Corruption { expected: expected_crc, actual: actual_crc });
    }

    let raw_len = usize::try_from(shape.numel() as u128 * dtype.width() as u128)
        .map_err(|_| Error::Framing(format!("{shape} is too large")))?;
    let payload = codec.decompress(wire, raw_len)?;
    if payload.len() != raw_len {
        return Err(Error::Framing(format!(
            "payload is {} bytes but {shape} {dtype} needs {raw_len}",
            payload.len()
        )));
    }
    Ok(DecodedFrame { shape, dtype, codec, payload })
}
