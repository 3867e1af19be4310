use proptest::prelude::*;
use splitplan_core::wire::{decode_frame, encode_frame, frame_len, Codec, FRAME_OVERHEAD};
use splitplan_core::{DataType, Error, TensorShape};

fn frame_input() -> impl Strategy<Value = (TensorShape, DataType, Codec, Vec<u8>)> {
    let dtype = prop_oneof![Just(DataType::F32), Just(DataType::F16), Just(DataType::U8)];
    let codec = prop_oneof![Just(Codec::None), Just(Codec::Deflate)];
    (prop::collection::vec(1usize..9, 1..=4), dtype, codec).prop_flat_map(|(dims, dtype, codec)| {
        let len = dims.iter().product::<usize>() * dtype.width();
        // mix of noise and runs so deflate sees both
        let bytes = prop_oneof![
            prop::collection::vec(any::<u8>(), len),
            (any::<u8>(), Just(len)).prop_map(|(b, n)| vec![b; n]),
        ];
        (Just(TensorShape::new(dims).unwrap()), Just(dtype), Just(codec), bytes)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn round_trip((shape, dtype, codec, payload) in frame_input()) {
        let frame = encode_frame(&shape, dtype, &payload, codec).unwrap();
        let wire_len = u64::from_le_bytes(frame[8..16].try_into().unwrap()) as usize;
        prop_assert_eq!(frame.len(), 16 + 4 * shape.rank() + wire_len + 4);
        prop_assert_eq!(frame_len(&frame).unwrap(), frame.len());
        if codec == Codec::None {
            prop_assert_eq!(frame.len(), FRAME_OVERHEAD + 4 * shape.rank() + payload.len());
        }
        let decoded = decode_frame(&frame).unwrap();
        prop_assert_eq!(decoded.shape, shape);
        prop_assert_eq!(decoded.dtype, dtype);
        prop_assert_eq!(decoded.codec, codec);
        prop_assert_eq!(decoded.payload, payload);
    }

    #[test]
    fn payload_bit_flip_is_detected((shape, dtype, codec, payload) in frame_input(), pick in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut frame = encode_frame(&shape, dtype, &payload, codec).unwrap();
        let start = 16 + 4 * shape.rank();
        let end = frame.len();
        let at = start + pick.index(end - start);
        frame[at] ^= 1 << bit;
        let is_corruption = matches!(decode_frame(&frame), Err(Error::Corruption { .. }));
        prop_assert!(is_corruption);
    }

    #[test]
    fn truncation_is_incomplete((shape, dtype, codec, payload) in frame_input(), pick in any::<prop::sample::Index>()) {
        let frame = encode_frame(&shape, dtype, &payload, codec).unwrap();
        let cut = pick.index(frame.len());
        let is_incomplete = matches!(decode_frame(&frame[..cut]), Err(Error::IncompleteFrame { .. }));
        prop_assert!(is_incomplete);
    }

    #[test]
    fn deflate_is_lossless(data in prop::collection::vec(any::<u8>(), 0..4096)) {
        let packed = Codec::Deflate.compress(&data);
        prop_assert_eq!(Codec::Deflate.decompress(&packed, data.len()).unwrap(), data);
    }
}

#[test]
fn random_c3_bottleneck_round_trip() {
    use splitplan_core::wire::{generate_tensor, TensorSource};
    let shape = TensorShape::chw(3, 219, 261);
    assert_eq!(shape.numel(), 171_477);
    let payload = generate_tensor(TensorSource::RandomUniform, &shape, DataType::F32, 42);
    for codec in [Codec::None, Codec::Deflate] {
        let frame = encode_frame(&shape, DataType::F32, &payload, codec).unwrap();
        assert_eq!(decode_frame(&frame).unwrap().payload, payload);
    }
}

#[test]
fn trailing_bytes_rejected() {
    let shape = TensorShape::new(vec![2]).unwrap();
    let mut frame = encode_frame(&shape, DataType::U8, &[9, 9], Codec::None).unwrap();
    frame.push(0);
    assert!(matches!(decode_frame(&frame), Err(Error::Framing(_))));
}

#[test]
fn unknown_codes_rejected() {
    let shape = TensorShape::new(vec![2]).unwrap();
    let frame = encode_frame(&shape, DataType::U8, &[9, 9], Codec::None).unwrap();
    for (offset, value) in [(5, 9u8), (6, 7)] {
        let mut bad = frame.clone();
        bad[offset] = value;
        assert!(matches!(decode_frame(&bad), Err(Error::Protocol(_))));
    }
}
