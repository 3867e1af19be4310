//! Tensor transport: a byte-exact frame format, lossless codecs, synthetic
//! tensor sources and a paced channel emulator.

mod channel;
mod frame;
mod source;

pub use channel::{
    expected_transfer_seconds, run_transfer, EmulatedChannel, TokenBucket, TransferReport, Transport, DEFAULT_PORT,
    MAX_BUCKET_BYTES,
};
pub use frame::{decode_frame, encode_frame, frame_len, Codec, DecodedFrame, FRAME_OVERHEAD, HEADER_LEN, MAGIC, VERSION};
pub use source::{generate_tensor, measure_codec_ratio, TensorSource};
